//! Principal eigenpairs by inverse power iteration: the Dirichlet pair
//! `(λ₁, φ₁)` and the bottom of the linearized operator
//! `-Δ_h + α d^(-β) u^(-(1+α))`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SelError};
use crate::grid::{assemble_laplacian, Grid, ScalarField};
use crate::linear_core::{dot, norm2, SpdOptions, SpdSolver};
use crate::operator::SparseOperator;

pub const DEFAULT_EIG_TOL: f64 = 1e-10;
const MAX_STEPS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    /// Positive, normalized to unit sup-norm.
    pub field: ScalarField,
    /// `‖Aφ − λφ‖₂ / (|λ| ‖φ‖₂)`.
    pub residual: f64,
}

fn relative_residual(a: &SparseOperator, phi: &[f64], lambda: f64) -> f64 {
    let r: Vec<f64> = a.apply(phi).iter().zip(phi).map(|(x, p)| x - lambda * p).collect();
    norm2(&r) / (lambda.abs() * norm2(phi))
}

/// Smallest eigenvalue and positive eigenvector of an SPD M-matrix.
///
/// Stops once the Rayleigh quotient moves by at most `tol` (relative) and the
/// eigen-residual is below `tol`, or below the rounding floor
/// `10 ε ‖A‖∞ / λ` when that is larger.
pub fn principal_eigenpair(a: &SparseOperator, tol: f64) -> Result<EigenPair> {
    if !(tol > 0.0) {
        return Err(SelError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = a.dim();
    let solver = SpdSolver::new(a, SpdOptions::with_tol((tol * 1e-2).max(1e-14)));
    let mut phi = vec![1.0; n];
    let mut lambda = a.quadratic_form(&phi) / dot(&phi, &phi);
    let mut residual = f64::INFINITY;
    for step in 1..=MAX_STEPS {
        let (y, _) = solver.solve(&phi, Some(&phi.iter().map(|p| p / lambda).collect::<Vec<_>>()))?;
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        phi = y.iter().map(|v| v / scale).collect();
        let next = a.quadratic_form(&phi) / dot(&phi, &phi);
        let increment = (next - lambda).abs() / next.abs();
        lambda = next;
        residual = relative_residual(a, &phi, lambda);
        let floor = 10.0 * f64::EPSILON * a.inf_norm() / lambda.abs();
        if step > 1 && increment <= tol && residual <= tol.max(floor) {
            return Ok(EigenPair { value: lambda, field: ScalarField(phi), residual });
        }
    }
    Err(SelError::EigenNonConvergence { iterations: MAX_STEPS, residual })
}

/// Principal Dirichlet eigenpair of `-Δ_h` on the grid.
pub fn dirichlet_eigenpair(grid: &Grid, tol: f64) -> Result<EigenPair> {
    principal_eigenpair(&assemble_laplacian(grid), tol)
}

/// `-Δ_h + diag(α d^(-β) u^(-(1+α)))`.
pub fn linearized_operator(grid: &Grid, u: &[f64], alpha: f64, beta: f64) -> Result<SparseOperator> {
    grid.check_field(u)?;
    if let Some((node, &value)) = u.iter().enumerate().find(|&(_, &v)| !(v > 0.0)) {
        return Err(SelError::InvalidLinearizationPoint { node, value });
    }
    let potential: Vec<f64> = u
        .iter()
        .zip(grid.distances())
        .map(|(&v, &d)| alpha * d.powf(-beta) * v.powf(-(1.0 + alpha)))
        .collect();
    Ok(assemble_laplacian(grid).with_added_diagonal(&potential))
}

/// `μ₁` of the problem linearized at `u`; positive means linearly stable.
pub fn linearized_smallest_eigenvalue(
    grid: &Grid,
    u: &[f64],
    alpha: f64,
    beta: f64,
    tol: f64,
) -> Result<EigenPair> {
    principal_eigenpair(&linearized_operator(grid, u, alpha, beta)?, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainShape};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn four_node_interval_closed_form() {
        let g = build_grid(DomainShape::unit_interval(), 4).unwrap();
        let e = dirichlet_eigenpair(&g, 1e-12).unwrap();
        let h = 0.25f64;
        assert_relative_eq!(e.value, 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2), epsilon = 1e-10);
        assert_relative_eq!(e.value, 9.3726, epsilon = 1e-4);
        for k in 0..3 {
            let x = g.point(k)[0];
            assert_relative_eq!(e.field[k], (PI * x).sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn refinement_approaches_pi_squared() {
        let mut prev = 0.0;
        for n in [16, 32, 64, 128] {
            let g = build_grid(DomainShape::unit_interval(), n).unwrap();
            let e = dirichlet_eigenpair(&g, 1e-12).unwrap();
            assert!(e.value > prev && e.value < PI * PI);
            prev = e.value;
        }
        assert_relative_eq!(prev, PI * PI, max_relative = 1e-4);
    }

    #[test]
    fn square_approaches_two_pi_squared() {
        let g = build_grid(DomainShape::unit_square(), 48).unwrap();
        let e = dirichlet_eigenpair(&g, 1e-10).unwrap();
        let h = 1.0 / 48.0;
        let exact = 2.0 * 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert_relative_eq!(e.value, exact, max_relative = 1e-8);
        assert_relative_eq!(e.value, 2.0 * PI * PI, max_relative = 1e-3);
        assert!(e.field.min() > 0.0);
    }

    #[test]
    fn rayleigh_quotient_consistent() {
        let g = build_grid(DomainShape::unit_interval(), 200).unwrap();
        let a = assemble_laplacian(&g);
        let tol = 1e-10;
        let e = principal_eigenpair(&a, tol).unwrap();
        let rq = a.quadratic_form(&e.field) / dot(&e.field, &e.field);
        assert!((rq - e.value).abs() / e.value <= 10.0 * tol);
        assert_relative_eq!(e.field.max_abs(), 1.0);
    }

    #[test]
    fn zero_potential_reproduces_dirichlet() {
        let g = build_grid(DomainShape::unit_interval(), 32).unwrap();
        let u = vec![0.3; g.len()];
        let mu = linearized_smallest_eigenvalue(&g, &u, 0.0, 0.0, 1e-12).unwrap();
        let lam = dirichlet_eigenpair(&g, 1e-12).unwrap();
        assert_relative_eq!(mu.value, lam.value, max_relative = 1e-10);
    }

    #[test]
    fn positive_potential_shifts_spectrum_up() {
        let g = build_grid(DomainShape::unit_interval(), 32).unwrap();
        let u: Vec<f64> = g.distances().to_vec();
        let mu = linearized_smallest_eigenvalue(&g, &u, 2.0, 0.5, 1e-10).unwrap();
        let lam = dirichlet_eigenpair(&g, 1e-10).unwrap();
        assert!(mu.value > lam.value);
        assert!(mu.field.min() > 0.0);
    }

    #[test]
    fn nonpositive_linearization_point_rejected() {
        let g = build_grid(DomainShape::unit_interval(), 8).unwrap();
        let mut u = vec![1.0; g.len()];
        u[3] = 0.0;
        assert_eq!(
            linearized_smallest_eigenvalue(&g, &u, 1.0, 0.0, 1e-8).unwrap_err(),
            SelError::InvalidLinearizationPoint { node: 3, value: 0.0 }
        );
    }
}
