//! Two-sided monotone iteration
//! `(-Δ_h + M d^(-γ)) u_{k+1} = d^(-β) u_k^(-α) + M d^(-γ) u_k`,
//! run downward from the supersolution and upward from the subsolution.

use serde::{Deserialize, Serialize};

use crate::barriers::{boundary_exponent, defect, BarrierPair};
use crate::error::{Result, SelError};
use crate::grid::{assemble_laplacian, power_weight, Grid, ScalarField};
use crate::linear_core::{assemble_shifted, weighted_norm, ShiftSpec, SpdOptions, SpdSolver};
use crate::operator::SparseOperator;
use crate::problem::ProblemSpec;

/// Nodewise slack allowed in the monotone chain, relative to `‖super‖∞`.
pub const CHAIN_TOL: f64 = 1e-12;
/// Iterations without a 1% gap decrease that count as a stall.
const STALL_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
}

impl SolveConfig {
    pub fn new(tol: f64, max_iter: usize, inner_tol: f64) -> Result<Self> {
        let c = Self { tol, max_iter, inner_tol };
        c.validate()?;
        Ok(c)
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        Self::new(spec.tol, spec.max_iter, spec.inner_tol)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(SelError::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(SelError::InvalidParameter("max_iter must be >= 1".into()));
        }
        if !(self.inner_tol > 0.0 && self.inner_tol <= self.tol / 10.0) {
            return Err(SelError::InvalidParameter(format!(
                "inner_tol must lie in (0, tol/10], got {} with tol {}",
                self.inner_tol, self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Ascending sequence, approximates the minimal solution.
    pub lower: ScalarField,
    /// Descending sequence, approximates the maximal solution.
    pub upper: ScalarField,
    pub iterations: usize,
    /// Relative weighted-L² gap after each outer iteration.
    pub gap_history: Vec<f64>,
    /// Discrete H¹ seminorm of the upper iterate after each outer iteration.
    pub h1_history: Vec<f64>,
    #[serde(rename = "M")]
    pub m: f64,
    pub gamma: f64,
    pub converged: bool,
    /// Worst chain violation seen, in absolute units.
    pub ordering_violation: f64,
    /// Rounding floor of the gap. The run stops at `gap <= max(tol, gap_floor)`,
    /// or when the gap has stalled within 10× of that level.
    pub gap_floor: f64,
}

impl SolveReport {
    /// Midpoint of the two limits.
    pub fn solution(&self) -> ScalarField {
        self.lower.zip_map(&self.upper, |a, b| 0.5 * (a + b))
    }

    pub fn final_gap(&self) -> f64 {
        self.gap_history.last().copied().unwrap_or(f64::INFINITY)
    }

    /// Turns a non-converged report into [`SelError::MaxIterExceeded`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(SelError::MaxIterExceeded { iterations: self.iterations, gap: self.final_gap() })
        }
    }
}

fn nonlinear_rhs(grid: &Grid, prev: &[f64], alpha: f64, beta: f64, m: f64, weight: &[f64]) -> Vec<f64> {
    prev.iter()
        .zip(grid.distances())
        .zip(weight)
        .map(|((&u, &d), &w)| d.powf(-beta) * u.powf(-alpha) + m * w * u)
        .collect()
}

/// One step of the shifted iteration using a prebuilt solver for `A_M`.
/// `weight` is `d^(-γ)`.
pub fn iterate_step_with(
    grid: &Grid,
    solver: &SpdSolver<'_>,
    prev: &[f64],
    alpha: f64,
    beta: f64,
    m: f64,
    weight: &[f64],
) -> Result<ScalarField> {
    grid.check_field(prev)?;
    if let Some((node, &value)) = prev.iter().enumerate().find(|&(_, &v)| !(v > 0.0)) {
        return Err(SelError::NonPositiveField { node, value });
    }
    let rhs = nonlinear_rhs(grid, prev, alpha, beta, m, weight);
    let (next, _) = solver.solve(&rhs, Some(prev))?;
    Ok(next)
}

/// Solves `A_M u = d^(-β) prev^(-α) + M d^(-γ) prev`.
#[allow(clippy::too_many_arguments)]
pub fn iterate_step(
    grid: &Grid,
    a_m: &SparseOperator,
    prev: &[f64],
    alpha: f64,
    beta: f64,
    m: f64,
    gamma: f64,
    inner_tol: f64,
) -> Result<ScalarField> {
    let solver = SpdSolver::new(a_m, SpdOptions::with_tol(inner_tol));
    iterate_step_with(grid, &solver, prev, alpha, beta, m, &power_weight(grid, gamma))
}

/// Discrete H¹ seminorm `(⟨-Δ_h u, u⟩ · cellvol)^(1/2)`.
pub fn h1_seminorm(grid: &Grid, lap: &SparseOperator, u: &[f64]) -> f64 {
    (lap.quadratic_form(u) * grid.cell_volume()).max(0.0).sqrt()
}

/// Runs both monotone sequences in lockstep until the weighted-L² relative
/// gap drops to `config.tol` or `config.max_iter` is reached.
///
/// A non-converged run still returns `Ok` with `converged = false`; a broken
/// monotone chain aborts with [`SelError::OrderingViolation`].
pub fn solve_monotone(spec: &ProblemSpec, pair: &BarrierPair, config: &SolveConfig) -> Result<SolveReport> {
    config.validate()?;
    let grid = spec.grid()?;
    grid.check_field(&pair.sub)?;
    grid.check_field(&pair.sup)?;
    pair.sub.require_positive()?;
    let (alpha, beta) = (spec.alpha, spec.beta);

    let shift = ShiftSpec::new(pair.m, pair.gamma)?;
    let a_m = assemble_shifted(&grid, shift);
    let solver = SpdSolver::new(&a_m, SpdOptions::with_tol(config.inner_tol));
    let lap = assemble_laplacian(&grid);
    let weight = power_weight(&grid, pair.gamma);

    // Inner solves carry relative errors of order ε·cond(-Δ_h); below that
    // the gap only jitters.
    let lambda_est = grid.shape().extents().iter().map(|l| (std::f64::consts::PI / l).powi(2)).sum::<f64>();
    let gap_floor = 2.0 * f64::EPSILON * lap.inf_norm() / lambda_est;

    let scale = pair.sup.max_abs();
    let slack = CHAIN_TOL * scale;
    let mut worst = pair
        .sub
        .iter()
        .zip(pair.sup.iter())
        .map(|(s, u)| s - u)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst > slack {
        return Err(SelError::OrderingViolation { iteration: 0, node: 0, violation: worst });
    }

    let mut lower = pair.sub.clone();
    let mut upper = pair.sup.clone();
    let mut gap_history = Vec::new();
    let mut h1_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.max_iter {
        let next_lower = iterate_step_with(&grid, &solver, &lower, alpha, beta, pair.m, &weight)?;
        let next_upper = iterate_step_with(&grid, &solver, &upper, alpha, beta, pair.m, &weight)?;

        // sub ≤ lower_k ≤ lower_{k+1} ≤ upper_{k+1} ≤ upper_k ≤ super
        for k in 0..grid.len() {
            let links = [
                lower[k] - next_lower[k],
                next_lower[k] - next_upper[k],
                next_upper[k] - upper[k],
                pair.sub[k] - next_lower[k],
                next_upper[k] - pair.sup[k],
            ];
            for v in links {
                if v > slack {
                    return Err(SelError::OrderingViolation { iteration: it, node: k, violation: v });
                }
                worst = worst.max(v);
            }
        }

        lower = next_lower;
        upper = next_upper;
        iterations = it;
        let diff: Vec<f64> = upper.iter().zip(lower.iter()).map(|(a, b)| a - b).collect();
        let gap = weighted_norm(&diff, &grid, pair.gamma) / weighted_norm(&upper, &grid, pair.gamma);
        gap_history.push(gap);
        h1_history.push(h1_seminorm(&grid, &lap, &upper));
        let target = config.tol.max(gap_floor);
        let stalled = gap_history.len() > STALL_WINDOW
            && gap >= 0.99 * gap_history[gap_history.len() - 1 - STALL_WINDOW];
        if gap <= target || (stalled && gap <= 10.0 * target) {
            converged = true;
            break;
        }
    }

    Ok(SolveReport {
        lower,
        upper,
        iterations,
        gap_history,
        h1_history,
        m: pair.m,
        gamma: pair.gamma,
        converged,
        ordering_violation: worst.max(0.0),
        gap_floor,
    })
}

/// `(-Δ_h u − d^(-β) u^(-α)) · d^(β+tα)` per node, scaled so the singular
/// parts are O(1) near the boundary.
pub fn weighted_defect(grid: &Grid, u: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let t = boundary_exponent(alpha, beta).unwrap_or(1.0);
    defect(grid, u, alpha, beta)
        .into_iter()
        .zip(grid.distances())
        .map(|(r, d)| r * d.powf(beta + t * alpha))
        .collect()
}

/// `‖(-Δ_h u − d^(-β) u^(-α)) d^(β+tα)‖∞`.
pub fn residual(grid: &Grid, u: &[f64], alpha: f64, beta: f64) -> f64 {
    weighted_defect(grid, u, alpha, beta).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// [`residual`] restricted to nodes farther than `layers · h` from the boundary.
pub fn interior_residual(grid: &Grid, u: &[f64], alpha: f64, beta: f64, layers: usize) -> f64 {
    let cut = layers as f64 * grid.h() * (1.0 + 1e-9);
    weighted_defect(grid, u, alpha, beta)
        .iter()
        .zip(grid.distances())
        .filter(|(_, &d)| d > cut)
        .fold(0.0, |m, (v, _)| m.max(v.abs()))
}

/// `‖upper − lower‖∞ / ‖upper‖∞`.
pub fn uniqueness_gap(report: &SolveReport) -> f64 {
    let diff = report.upper.iter().zip(report.lower.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let top = report.upper.max_abs();
    if top == 0.0 {
        0.0
    } else {
        diff / top
    }
}
