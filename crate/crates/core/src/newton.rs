//! Safeguarded Newton for `F(u) = -Δ_h u − d^(-β) (u+ε)^(-α) = 0`, shared by
//! the dense oracle (ε = 0) and the regularized path (ε > 0).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barriers::boundary_exponent;
use crate::error::{Result, SelError};
use crate::grid::{assemble_laplacian, Grid, ScalarField};
use crate::linear_core::{SpdOptions, SpdSolver};
use crate::operator::SparseOperator;

/// How each Newton correction is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearBackend {
    /// Dense LU of the full Jacobian.
    Dense,
    /// Preconditioned CG on the sparse Jacobian.
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Target for the weighted residual (see [`weighted_residual`]).
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Accepted iterates satisfy `u_new + ε >= floor_fraction · (u + ε)`.
    pub floor_fraction: f64,
}

impl NewtonOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, max_iter: 200, max_halvings: 50, floor_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub field: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// Rounding level of the residual at the returned field.
    pub residual_floor: f64,
    pub halvings: usize,
}

/// Weight `d^(β+tα)` that makes the singular residual O(1) near the boundary.
pub fn residual_weight(grid: &Grid, alpha: f64, beta: f64) -> Vec<f64> {
    let t = boundary_exponent(alpha, beta).unwrap_or(1.0);
    grid.distances().iter().map(|d| d.powf(beta + t * alpha)).collect()
}

fn forcing(grid: &Grid, u: &[f64], alpha: f64, beta: f64, eps: f64) -> Vec<f64> {
    u.iter().zip(grid.distances()).map(|(&v, &d)| d.powf(-beta) * (v + eps).powf(-alpha)).collect()
}

struct Eval {
    f: Vec<f64>,
    norm: f64,
    floor: f64,
}

fn evaluate(lap: &SparseOperator, grid: &Grid, u: &[f64], alpha: f64, beta: f64, eps: f64, w: &[f64]) -> Eval {
    let au = lap.apply(u);
    let g = forcing(grid, u, alpha, beta, eps);
    let mut norm = 0.0f64;
    let mut floor = 0.0f64;
    let f: Vec<f64> = (0..u.len())
        .map(|i| {
            let r = au[i] - g[i];
            norm = norm.max((r * w[i]).abs());
            let mag: f64 = lap.row(i).map(|(j, a)| (a * u[j]).abs()).sum::<f64>() + g[i];
            floor = floor.max(mag * w[i]);
            r
        })
        .collect();
    Eval { f, norm, floor: 10.0 * f64::EPSILON * floor }
}

fn jacobian(lap: &SparseOperator, grid: &Grid, u: &[f64], alpha: f64, beta: f64, eps: f64) -> SparseOperator {
    let extra: Vec<f64> = u
        .iter()
        .zip(grid.distances())
        .map(|(&v, &d)| alpha * d.powf(-beta) * (v + eps).powf(-(1.0 + alpha)))
        .collect();
    lap.with_added_diagonal(&extra)
}

fn correction(jac: &SparseOperator, rhs: &[f64], backend: LinearBackend) -> Result<Vec<f64>> {
    match backend {
        LinearBackend::Sparse => {
            let solver = SpdSolver::new(jac, SpdOptions::with_tol(1e-15));
            Ok(solver.solve(rhs, None)?.0.into_inner())
        }
        LinearBackend::Dense => {
            let n = jac.dim();
            let dense = jac.to_dense();
            let m = DMatrix::from_fn(n, n, |i, j| dense[i][j]);
            let b = DVector::from_column_slice(rhs);
            let x = m
                .lu()
                .solve(&b)
                .ok_or(SelError::NewtonStagnation { iteration: 0, residual: f64::INFINITY })?;
            Ok(x.iter().copied().collect())
        }
    }
}

/// `‖(-Δ_h u − d^(-β)(u+ε)^(-α)) d^(β+tα)‖∞`.
pub fn weighted_residual(grid: &Grid, u: &[f64], alpha: f64, beta: f64, eps: f64) -> f64 {
    let lap = assemble_laplacian(grid);
    evaluate(&lap, grid, u, alpha, beta, eps, &residual_weight(grid, alpha, beta)).norm
}

/// Damped Newton from `init`. A step is halved until the new iterate keeps
/// `u + ε` above the positivity floor and the weighted residual decreases.
/// Terminates once the weighted residual is below `max(tol, rounding floor)`.
#[allow(clippy::too_many_arguments)]
pub fn newton_solve(
    grid: &Grid,
    alpha: f64,
    beta: f64,
    eps: f64,
    init: &[f64],
    opts: NewtonOptions,
    backend: LinearBackend,
) -> Result<NewtonReport> {
    grid.check_field(init)?;
    if !(eps >= 0.0) {
        return Err(SelError::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    if let Some((node, &value)) = init.iter().enumerate().find(|&(_, &v)| !(v + eps > 0.0)) {
        return Err(SelError::NonPositiveField { node, value });
    }
    let lap = assemble_laplacian(grid);
    let w = residual_weight(grid, alpha, beta);
    let mut u = init.to_vec();
    let mut ev = evaluate(&lap, grid, &u, alpha, beta, eps, &w);
    let mut halvings = 0;

    for it in 0..=opts.max_iter {
        if ev.norm <= opts.tol.max(ev.floor) {
            return Ok(NewtonReport {
                field: ScalarField(u),
                iterations: it,
                residual: ev.norm,
                residual_floor: ev.floor,
                halvings,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let jac = jacobian(&lap, grid, &u, alpha, beta, eps);
        let rhs: Vec<f64> = ev.f.iter().map(|v| -v).collect();
        let delta = correction(&jac, &rhs, backend)?;

        let mut step = 1.0;
        let mut accepted = None;
        for k in 0..=opts.max_halvings {
            let cand: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
            let positive = cand
                .iter()
                .zip(&u)
                .all(|(&c, &v)| c + eps >= opts.floor_fraction * (v + eps));
            if positive {
                let next = evaluate(&lap, grid, &cand, alpha, beta, eps, &w);
                if next.norm < ev.norm || next.norm <= next.floor {
                    halvings += k;
                    accepted = Some((cand, next));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, next)) => {
                u = cand;
                ev = next;
            }
            None => return Err(SelError::NewtonStagnation { iteration: it + 1, residual: ev.norm }),
        }
    }
    Err(SelError::NewtonStagnation { iteration: opts.max_iter, residual: ev.norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainShape};
    use approx::assert_relative_eq;

    #[test]
    fn linear_case_converges_in_one_step() {
        let g = build_grid(DomainShape::unit_interval(), 32).unwrap();
        let init: Vec<f64> = g.distances().iter().map(|d| 0.01 * d).collect();
        for backend in [LinearBackend::Dense, LinearBackend::Sparse] {
            let r = newton_solve(&g, 0.0, 0.0, 0.0, &init, NewtonOptions::with_tol(1e-12), backend).unwrap();
            assert_eq!(r.iterations, 1);
            for k in 0..g.len() {
                let x = g.point(k)[0];
                assert_relative_eq!(r.field[k], x * (1.0 - x) / 2.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn positivity_floor_damps_large_drops() {
        // From u = 1 the linear solution drops below a tenth of the iterate
        // near the boundary, so the full step is cut back.
        let g = build_grid(DomainShape::unit_interval(), 32).unwrap();
        let r = newton_solve(&g, 0.0, 0.0, 0.0, &vec![1.0; g.len()], NewtonOptions::with_tol(1e-12), LinearBackend::Dense)
            .unwrap();
        assert!(r.halvings > 0);
        assert_relative_eq!(r.field[15], 0.125, epsilon = 1e-13);
    }

    #[test]
    fn backends_agree() {
        let g = build_grid(DomainShape::unit_interval(), 48).unwrap();
        let init: Vec<f64> = g.distances().iter().map(|d| 0.3 * d.powf(2.0 / 3.0)).collect();
        let a = newton_solve(&g, 2.0, 0.0, 0.0, &init, NewtonOptions::with_tol(1e-12), LinearBackend::Dense).unwrap();
        let b = newton_solve(&g, 2.0, 0.0, 0.0, &init, NewtonOptions::with_tol(1e-12), LinearBackend::Sparse).unwrap();
        for k in 0..g.len() {
            assert_relative_eq!(a.field[k], b.field[k], max_relative = 1e-11);
        }
    }

    #[test]
    fn overshooting_start_is_damped() {
        // A start far above the solution: the first full step would drive
        // nodes negative.
        let g = build_grid(DomainShape::unit_interval(), 32).unwrap();
        let init = vec![5.0; g.len()];
        let r = newton_solve(&g, 1.5, 0.0, 0.0, &init, NewtonOptions::with_tol(1e-12), LinearBackend::Sparse).unwrap();
        assert!(r.field.min() > 0.0);
        assert!(r.residual <= 1e-12_f64.max(r.residual_floor));
    }

    #[test]
    fn rejects_nonpositive_start() {
        let g = build_grid(DomainShape::unit_interval(), 8).unwrap();
        let mut init = vec![1.0; g.len()];
        init[0] = -1.0;
        assert!(newton_solve(&g, 1.0, 0.0, 0.0, &init, NewtonOptions::with_tol(1e-10), LinearBackend::Dense).is_err());
        assert!(newton_solve(&g, 1.0, 0.0, 2.0, &init, NewtonOptions::with_tol(1e-10), LinearBackend::Dense).is_ok());
    }
}
