//! End-to-end drivers: grid, eigenpair, barriers and the monotone solve for
//! one instance.

use serde::{Deserialize, Serialize};

use crate::barriers::{build_barrier_pair, build_borderline_pair, BarrierPair};
use crate::error::{Result, SelError};
use crate::grid::{Grid, ScalarField};
use crate::monotone_solver::{solve_monotone, SolveConfig, SolveReport};
use crate::oracle::sparse_newton_solve;
use crate::problem::{ProblemSpec, ShiftPolicy};
use crate::spectral::{dirichlet_eigenpair, EigenPair};

/// Everything the monotone solve needs, built from a [`ProblemSpec`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ProblemSpec,
    pub grid: Grid,
    pub eig: EigenPair,
    pub pair: BarrierPair,
}

pub fn prepare(spec: &ProblemSpec) -> Result<Prepared> {
    prepare_with(spec, false)
}

/// As [`prepare`]; with `allow_borderline` the pair for `α + β = 1`, `α < 1`
/// comes from [`build_borderline_pair`] instead of being refused.
pub fn prepare_with(spec: &ProblemSpec, allow_borderline: bool) -> Result<Prepared> {
    let grid = spec.grid()?;
    let eig = dirichlet_eigenpair(&grid, spec.eig_tol)?;
    let mut pair = match build_barrier_pair(&grid, spec.alpha, spec.beta, &eig) {
        Err(SelError::BorderlineRegime { .. }) if allow_borderline => {
            build_borderline_pair(&grid, spec.alpha, spec.beta, &eig)?
        }
        other => other?,
    };
    if let ShiftPolicy::Scaled(f) = spec.shift {
        pair = pair.with_shift_factor(f);
    }
    Ok(Prepared { spec: spec.clone(), grid, eig, pair })
}

/// Prepares and runs the two-sided monotone iteration.
pub fn solve(spec: &ProblemSpec) -> Result<(Prepared, SolveReport)> {
    solve_with(spec, false)
}

pub fn solve_with(spec: &ProblemSpec, allow_borderline: bool) -> Result<(Prepared, SolveReport)> {
    let prep = prepare_with(spec, allow_borderline)?;
    let report = solve_monotone(spec, &prep.pair, &SolveConfig::from_spec(spec)?)?;
    Ok((prep, report))
}

/// Which solver produces the field for downstream analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Midpoint of the converged two-sided monotone iteration.
    Monotone,
    /// Newton with sparse Jacobian solves, started below the solution.
    Newton,
}

pub fn solve_field(spec: &ProblemSpec, method: Method) -> Result<ScalarField> {
    match method {
        Method::Monotone => {
            let (_, report) = solve(spec)?;
            Ok(report.require_converged()?.solution())
        }
        Method::Newton => Ok(sparse_newton_solve(spec)?.field),
    }
}
