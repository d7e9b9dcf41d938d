//! The regularized problem `-Δ_h u = d^(-β) (u+ε)^(-α)` solved by damped
//! Newton, and continuation in ε towards the singular limit.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SelError};
use crate::grid::ScalarField;
use crate::newton::{newton_solve, LinearBackend, NewtonOptions, NewtonReport};
use crate::pipeline::prepare_with;
use crate::problem::ProblemSpec;

pub fn solve_regularized_report(spec: &ProblemSpec, eps: f64, init: &[f64], tol: f64) -> Result<NewtonReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(SelError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if !(tol > 0.0) {
        return Err(SelError::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let grid = spec.grid()?;
    if let Some((node, &value)) = init.iter().enumerate().find(|&(_, &v)| !(v >= 0.0)) {
        return Err(SelError::NonPositiveField { node, value });
    }
    newton_solve(&grid, spec.alpha, spec.beta, eps, init, NewtonOptions::with_tol(tol), LinearBackend::Sparse)
}

/// Damped Newton for the ε-regularized problem from a nonnegative start.
pub fn solve_regularized(spec: &ProblemSpec, eps: f64, init: &[f64], tol: f64) -> Result<ScalarField> {
    Ok(solve_regularized_report(spec, eps, init, tol)?.field)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub eps_sequence: Vec<f64>,
    pub fields: Vec<ScalarField>,
    /// `‖u_ε − u_ref‖∞` per ε.
    pub deltas: Vec<f64>,
    /// `max(u_ε − u_ref)` per ε; non-positive when `u_ε <= u_ref` nodewise.
    pub excess: Vec<f64>,
    /// Exponent `min(1, 2/(1+α))` used for the expected rate `ε^p` in the
    /// path-agreement bound.
    pub rate_exponent: f64,
    pub warnings: Vec<String>,
}

impl ContinuationReport {
    pub fn final_delta(&self) -> f64 {
        self.deltas.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn deltas_nonincreasing(&self) -> bool {
        self.deltas.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Warm-started Newton chain over `ε_k = eps_start · eps_factor^k`,
/// `k = 0..steps`, starting from the supersolution of the barrier pair.
pub fn epsilon_continuation(
    spec: &ProblemSpec,
    eps_start: f64,
    eps_factor: f64,
    steps: usize,
    u_ref: &[f64],
) -> Result<ContinuationReport> {
    if !(eps_factor > 0.0 && eps_factor < 1.0) {
        return Err(SelError::InvalidParameter(format!("eps_factor must lie in (0, 1), got {eps_factor}")));
    }
    if steps == 0 {
        return Err(SelError::InvalidParameter("continuation needs at least one step".into()));
    }
    let prep = prepare_with(spec, true)?;
    prep.grid.check_field(u_ref)?;

    let mut report = ContinuationReport {
        eps_sequence: Vec::with_capacity(steps),
        fields: Vec::with_capacity(steps),
        deltas: Vec::with_capacity(steps),
        excess: Vec::with_capacity(steps),
        rate_exponent: 1.0f64.min(2.0 / (1.0 + spec.alpha)),
        warnings: Vec::new(),
    };
    let mut current = prep.pair.sup.clone().into_inner();
    let mut eps = eps_start;
    for _ in 0..steps {
        let u = solve_regularized(spec, eps, &current, spec.tol)?;
        let (delta, excess) = u.iter().zip(u_ref).fold((0.0f64, f64::NEG_INFINITY), |(d, e), (a, b)| {
            (d.max((a - b).abs()), e.max(a - b))
        });
        report.eps_sequence.push(eps);
        report.deltas.push(delta);
        report.excess.push(excess);
        current = u.0.clone();
        report.fields.push(u);
        eps *= eps_factor;
    }
    if !report.deltas_nonincreasing() {
        report.warnings.push("continuation deltas are not monotone in eps".to_string());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::assemble_laplacian;
    use crate::linear_core::solve_spd;
    use crate::pipeline::solve;
    use approx::assert_relative_eq;

    #[test]
    fn alpha_zero_ignores_eps() {
        let spec = ProblemSpec::new(0.0, 0.0, 64);
        let init = vec![0.01; 63];
        let u = solve_regularized(&spec, 0.3, &init, 1e-12).unwrap();
        assert_relative_eq!(u[31], 0.125, epsilon = 1e-12);
    }

    #[test]
    fn large_eps_is_nearly_linear() {
        // u ≲ 1/(8ε) ≪ ε, so (u+ε)^(-1) ≈ 1/ε.
        let spec = ProblemSpec::new(1.0, 0.0, 64);
        let eps = 100.0;
        let g = spec.grid().unwrap();
        let rhs = vec![1.0 / eps; g.len()];
        let (lin, _) = solve_spd(&assemble_laplacian(&g), &rhs, 1e-13).unwrap();
        let u = solve_regularized(&spec, eps, &lin, 1e-14).unwrap();
        let scale = lin.max_abs();
        assert!(lin.max_abs() * 1e3 <= eps);
        for k in 0..g.len() {
            assert!((u[k] - lin[k]).abs() <= 1e-4 * scale);
        }
    }

    #[test]
    fn moderate_eps_agrees_with_monotone_limit() {
        let spec = ProblemSpec::new(0.5, 0.0, 256);
        let (prep, rep) = solve(&spec).unwrap();
        let u = solve_regularized(&spec, 1e-3, &prep.pair.sup, 1e-10).unwrap();
        let scale = rep.upper.max_abs();
        let delta = u.iter().zip(rep.upper.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(delta <= 2e-3 * scale, "{delta}");
        assert!(u.iter().zip(rep.upper.iter()).all(|(a, b)| a <= b));
    }

    #[test]
    fn continuation_shape() {
        let spec = ProblemSpec::new(2.0, 0.0, 128);
        let (_, rep) = solve(&spec).unwrap();
        let c = epsilon_continuation(&spec, 1e-1, 0.1, 4, &rep.upper).unwrap();
        assert_eq!(c.eps_sequence.len(), 4);
        assert_relative_eq!(c.eps_sequence[3], 1e-4, max_relative = 1e-12);
        assert!(c.deltas_nonincreasing(), "{:?}", c.deltas);
        assert!(c.warnings.is_empty());
        assert!(c.excess.iter().all(|&e| e <= 0.0));
        assert_relative_eq!(c.rate_exponent, 2.0 / 3.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let spec = ProblemSpec::new(0.5, 0.0, 16);
        let init = vec![0.1; 15];
        assert!(solve_regularized(&spec, 0.0, &init, 1e-10).is_err());
        assert!(solve_regularized(&spec, 1e-3, &[-1.0; 15], 1e-10).is_err());
        assert!(epsilon_continuation(&spec, 1e-1, 1.5, 3, &init).is_err());
    }
}
