//! Independent references: dense Newton solves, manufactured linear cases,
//! dense eigenvalues and observed convergence orders.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::barriers::boundary_exponent;
use crate::error::{Result, SelError};
use crate::grid::{assemble_laplacian, Grid, ScalarField};
use crate::linear_core::{assemble_shifted, solve_spd, ShiftSpec};
use crate::newton::{newton_solve, LinearBackend, NewtonOptions, NewtonReport};
use crate::operator::SparseOperator;
use crate::problem::ProblemSpec;

/// Largest resolution the dense oracle accepts.
pub const DENSE_MAX_N: usize = 64;
/// Terminal weighted residual of the oracle solves (or the rounding floor,
/// whichever is larger).
pub const ORACLE_TOL: f64 = 1e-12;

/// Starting field `s d^t`, scaled so the nonlinear term dominates and the
/// start lies below the solution.
fn oracle_start(grid: &Grid, alpha: f64, beta: f64) -> Vec<f64> {
    let t = boundary_exponent(alpha, beta).unwrap_or(1.0);
    grid.distances().iter().map(|d| 0.05 * d.powf(t)).collect()
}

/// Nonlinear solve with dense LU on every Newton step. Limited to
/// `n <= 64`.
pub fn dense_newton_solve(spec: &ProblemSpec) -> Result<ScalarField> {
    Ok(dense_newton_report(spec)?.field)
}

pub fn dense_newton_report(spec: &ProblemSpec) -> Result<NewtonReport> {
    if spec.n > DENSE_MAX_N {
        return Err(SelError::OracleTooLarge { n: spec.n, max: DENSE_MAX_N });
    }
    let grid = spec.grid()?;
    let init = oracle_start(&grid, spec.alpha, spec.beta);
    newton_solve(&grid, spec.alpha, spec.beta, 0.0, &init, NewtonOptions::with_tol(ORACLE_TOL), LinearBackend::Dense)
}

/// Same Newton iteration with sparse Jacobian solves, for resolutions the
/// dense path cannot reach.
pub fn sparse_newton_solve(spec: &ProblemSpec) -> Result<NewtonReport> {
    let grid = spec.grid()?;
    let init = oracle_start(&grid, spec.alpha, spec.beta);
    newton_solve(&grid, spec.alpha, spec.beta, 0.0, &init, NewtonOptions::with_tol(ORACLE_TOL), LinearBackend::Sparse)
}

/// Full symmetric eigendecomposition; returns the smallest eigenvalue.
pub fn dense_smallest_eigenvalue(a: &SparseOperator) -> f64 {
    let n = a.dim();
    let dense = a.to_dense();
    let m = DMatrix::from_fn(n, n, |i, j| dense[i][j]);
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedCase {
    pub exact: ScalarField,
    pub forcing: ScalarField,
    pub description: String,
}

/// `u* = Π (ξ(1-ξ))²` with `ξ = x/L` per axis, and `f = (-Δ_h + M d^(-γ)) u*`
/// by forward application.
pub fn manufactured_linear_case(grid: &Grid, shift: ShiftSpec) -> ManufacturedCase {
    let ext = grid.shape().extents();
    let exact: Vec<f64> = (0..grid.len())
        .map(|k| {
            grid.point(k)
                .iter()
                .zip(&ext)
                .map(|(x, l)| {
                    let s = x / l;
                    (s * (1.0 - s)).powi(2)
                })
                .product()
        })
        .collect();
    let forcing = assemble_shifted(grid, shift).apply(&exact);
    ManufacturedCase {
        exact: ScalarField(exact),
        forcing: ScalarField(forcing),
        description: format!("(x(1-x))^2 per axis, M={}, gamma={}", shift.m, shift.gamma),
    }
}

/// Max-norm error of `-Δ_h u = f` against `u = Π sin(π x/L)`, with `f` the
/// continuum forcing `Σ (π/L)² u`.
pub fn sine_case_error(grid: &Grid) -> Result<f64> {
    let ext = grid.shape().extents();
    let k2: f64 = ext.iter().map(|l| (PI / l).powi(2)).sum();
    let exact: Vec<f64> = (0..grid.len())
        .map(|k| grid.point(k).iter().zip(&ext).map(|(x, l)| (PI * x / l).sin()).product())
        .collect();
    let f: Vec<f64> = exact.iter().map(|u| k2 * u).collect();
    let (u, _) = solve_spd(&assemble_laplacian(grid), &f, 1e-14)?;
    Ok(u.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub order: f64,
    /// False when the errors do not decrease monotonically.
    pub reliable: bool,
}

/// Least-squares slope of `log error` against `log h`.
pub fn observed_order(errors: &[f64], hs: &[f64]) -> Result<OrderEstimate> {
    if errors.len() != hs.len() || errors.len() < 3 {
        return Err(SelError::InvalidParameter(format!(
            "need at least 3 matching levels, got {} errors and {} spacings",
            errors.len(),
            hs.len()
        )));
    }
    if hs.windows(2).any(|w| !(w[1] < w[0])) || hs.iter().any(|h| !(*h > 0.0)) {
        return Err(SelError::InvalidParameter("spacings must be positive and strictly decreasing".into()));
    }
    if errors.iter().any(|e| !(*e > 0.0)) {
        return Ok(OrderEstimate { order: f64::NAN, reliable: false });
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let reliable = errors.windows(2).all(|w| w[1] < w[0]);
    Ok(OrderEstimate { order: slope(&x, &y), reliable })
}

pub(crate) fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Restriction of a fine-grid field to the nodes of a grid with exactly half
/// the resolution on the same domain.
pub fn inject(fine: &Grid, coarse: &Grid, u: &[f64]) -> Result<Vec<f64>> {
    fine.check_field(u)?;
    if fine.n() != 2 * coarse.n() || fine.shape() != coarse.shape() {
        return Err(SelError::InvalidParameter(format!(
            "injection needs nested grids, got n={} into n={}",
            fine.n(),
            coarse.n()
        )));
    }
    let m = fine.n() - 1;
    Ok((0..coarse.len())
        .map(|k| {
            let [i, j] = coarse.multi_index(k);
            match fine.dim() {
                1 => u[2 * i - 1],
                _ => u[(2 * j - 1) * m + (2 * i - 1)],
            }
        })
        .collect())
}

/// Richardson self-convergence order from three nested solutions
/// (`coarse`, `mid`, `fine`, each twice the resolution of the previous).
pub fn self_convergence_order(
    grids: [&Grid; 3],
    fields: [&[f64]; 3],
) -> Result<f64> {
    let mid_on_coarse = inject(grids[1], grids[0], fields[1])?;
    let fine_on_mid = inject(grids[2], grids[1], fields[2])?;
    let fine_on_coarse = inject(grids[1], grids[0], &fine_on_mid)?;
    let e1 = fields[0].iter().zip(&mid_on_coarse).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let e2 = mid_on_coarse.iter().zip(&fine_on_coarse).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((e1 / e2).log2())
}
