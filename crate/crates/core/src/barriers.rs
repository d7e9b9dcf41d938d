//! Ordered sub/supersolution pairs built from the principal eigenpair, their
//! nodewise certification, and the monotonizing shift.
//!
//! Two regimes are handled. For `α + β < 1` the solution is comparable to
//! `d`: the subsolution is `c φ₁` and the supersolution `C ψ` with
//! `-Δ_h ψ = d^(-(α+β))`. For `α + β > 1` it is comparable to `d^t` with
//! `t = (2-β)/(1+α)` and both barriers are multiples of `φ₁^t`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SelError};
use crate::grid::{assemble_laplacian, Grid, GradientStencil, ScalarField};
use crate::linear_core::solve_spd;
use crate::spectral::EigenPair;

/// Relative safety factor on the supersolution constant.
pub const SUPER_MARGIN: f64 = 0.10;
/// Default tolerance handed to [`verify_barrier`].
pub const DEFAULT_CERT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `α + β < 1`, linear boundary behaviour.
    Low,
    /// `α + β > 1`, boundary behaviour `d^t` with `t < 1`.
    High,
    /// `α + β = 1` with `α < 1`. Never returned by [`regime`]; only pairs
    /// from [`build_borderline_pair`] carry it.
    Borderline,
}

/// Classifies `(α, β)`. The borderline `α + β = 1` is refused except for the
/// pair `(1, 0)`, which is accepted on the high path with `t = 1`.
pub fn regime(alpha: f64, beta: f64) -> Result<Regime> {
    if !(0.0..2.0).contains(&beta) {
        return Err(SelError::InvalidParameter(format!("beta must lie in [0, 2), got {beta}")));
    }
    if !(alpha >= 0.0) {
        return Err(SelError::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let s = alpha + beta;
    if (s - 1.0).abs() <= 1e-12 {
        if alpha == 1.0 && beta == 0.0 {
            return Ok(Regime::High);
        }
        return Err(SelError::BorderlineRegime { alpha, beta });
    }
    Ok(if s < 1.0 { Regime::Low } else { Regime::High })
}

/// Exponent `t` in `u ≍ d^t`.
pub fn boundary_exponent(alpha: f64, beta: f64) -> Result<f64> {
    Ok(match regime(alpha, beta)? {
        Regime::Low | Regime::Borderline => 1.0,
        Regime::High => (2.0 - beta) / (1.0 + alpha),
    })
}

/// Weight exponent `γ` of the shift `M d^(-γ)`: `1 + α + β` below the
/// threshold, `2` above it. Both make the minimal shift independent of `h`.
pub fn shift_exponent(alpha: f64, beta: f64) -> Result<f64> {
    Ok(match regime(alpha, beta)? {
        Regime::Low | Regime::Borderline => 1.0 + alpha + beta,
        Regime::High => 2.0,
    })
}

/// Warnings attached to parameter pairs outside the proven existence range.
pub fn regime_warnings(alpha: f64, beta: f64) -> Vec<String> {
    let mut w = Vec::new();
    if alpha == 1.0 && beta == 0.0 {
        w.push("alpha=1 outside the existence theorems (t=1 limit of the high-alpha path)".to_string());
    }
    if beta == 0.0 && alpha >= 3.0 {
        w.push("alpha>=3: solution is not in H^1_0".to_string());
    }
    w
}

/// `-Δ_h w − d^(-β) w^(-α)` at every node.
pub fn defect(grid: &Grid, w: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let lap = assemble_laplacian(grid).apply(w);
    lap.iter()
        .zip(w)
        .zip(grid.distances())
        .map(|((l, &v), &d)| l - d.powf(-beta) * v.powf(-alpha))
        .collect()
}

/// Largest `c` with `c^(1+α) (-Δ_h g)_i g_i^α d_i^β <= 1` at every node, i.e.
/// the largest multiple of `g` that is a discrete subsolution.
fn largest_sub_multiple(grid: &Grid, g: &[f64], alpha: f64, beta: f64) -> f64 {
    let lap = assemble_laplacian(grid).apply(g);
    let worst = lap
        .iter()
        .zip(g)
        .zip(grid.distances())
        .map(|((l, v), d)| l * v.powf(alpha) * d.powf(beta))
        .fold(0.0f64, f64::max);
    if worst > 0.0 {
        worst.powf(-1.0 / (1.0 + alpha))
    } else {
        f64::INFINITY
    }
}

fn linear_subsolution(grid: &Grid, alpha: f64, beta: f64, eig: &EigenPair) -> (f64, ScalarField) {
    let phi = &eig.field;
    let m = phi
        .iter()
        .zip(grid.distances())
        .map(|(p, dd)| p.powf(1.0 + alpha) * dd.powf(beta))
        .fold(0.0f64, f64::max);
    let c_formula = (eig.value * m).powf(-1.0 / (1.0 + alpha));
    let c = c_formula.min(largest_sub_multiple(grid, phi, alpha, beta));
    (c, phi.map(|p| c * p))
}

/// `C ψ` with `-Δ_h ψ = d^(-(α+β))` and `C = max (d/ψ)^(α/(1+α)) (1+margin)`.
/// For `α + β = 1`, `ψ ≍ d log(1/d)` and the ratio stays bounded.
fn poisson_supersolution(grid: &Grid, alpha: f64, beta: f64, margin: f64) -> Result<(f64, ScalarField)> {
    let d = grid.distances();
    let rhs: Vec<f64> = d.iter().map(|dd| dd.powf(-(alpha + beta))).collect();
    let (psi, _) = solve_spd(&assemble_laplacian(grid), &rhs, 1e-13)?;
    psi.require_positive()?;
    let ratio = psi.iter().zip(d).map(|(p, dd)| dd / p).fold(0.0f64, f64::max);
    let c = ratio.powf(alpha / (1.0 + alpha)) * (1.0 + margin);
    Ok((c, psi.map(|p| c * p)))
}

fn phi_power(eig: &EigenPair, t: f64) -> Vec<f64> {
    eig.field.iter().map(|p| p.powf(t)).collect()
}

/// Subsolution `c φ₁` (low regime) or `c φ₁^t` (high regime).
///
/// Low regime: `c = (λ₁ max φ₁^(1+α) d^β)^(-1/(1+α))`. High regime:
/// `c = (t(1-t) max|∇_h φ₁|² + λ₁ t)^(-1/(1+α))`, further capped (for β > 0)
/// by the largest multiple that satisfies the discrete inequality nodewise.
pub fn build_subsolution(grid: &Grid, alpha: f64, beta: f64, eig: &EigenPair) -> Result<(f64, ScalarField)> {
    grid.check_field(&eig.field)?;
    eig.field.require_positive()?;
    let lambda = eig.value;
    let phi = &eig.field;
    match regime(alpha, beta)? {
        Regime::Low | Regime::Borderline => Ok(linear_subsolution(grid, alpha, beta, eig)),
        Regime::High => {
            let t = boundary_exponent(alpha, beta)?;
            let grad = grid.gradient_magnitude(phi, GradientStencil::BoundaryOneSided);
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(*g));
            let c_formula = (t * (1.0 - t) * gmax * gmax + lambda * t).powf(-1.0 / (1.0 + alpha));
            let g = phi_power(eig, t);
            let c = c_formula.min(largest_sub_multiple(grid, &g, alpha, beta));
            Ok((c, ScalarField(g.iter().map(|v| c * v).collect())))
        }
    }
}

/// Supersolution `C ψ` (low regime) or `C φ₁^t` (high regime), with a 10%
/// margin on `C`.
pub fn build_supersolution(grid: &Grid, alpha: f64, beta: f64, eig: &EigenPair) -> Result<(f64, ScalarField)> {
    build_supersolution_with_margin(grid, alpha, beta, eig, SUPER_MARGIN)
}

pub fn build_supersolution_with_margin(
    grid: &Grid,
    alpha: f64,
    beta: f64,
    eig: &EigenPair,
    margin: f64,
) -> Result<(f64, ScalarField)> {
    grid.check_field(&eig.field)?;
    eig.field.require_positive()?;
    let d = grid.distances();
    match regime(alpha, beta)? {
        Regime::Low | Regime::Borderline => poisson_supersolution(grid, alpha, beta, margin),
        Regime::High => {
            let t = boundary_exponent(alpha, beta)?;
            let lambda = eig.value;
            let phi = &eig.field;
            let grad = grid.gradient_magnitude(phi, GradientStencil::BoundaryOneSided);
            // (t(1-t)|∇φ|² + λ t φ²)(d/φ)^β; reduces to the β = 0 bracket.
            let mut bracket_min = f64::INFINITY;
            let mut bracket_node = 0;
            for k in 0..grid.len() {
                let b = (t * (1.0 - t) * grad[k] * grad[k] + lambda * t * phi[k] * phi[k])
                    * (d[k] / phi[k]).powf(beta);
                if b < bracket_min {
                    bracket_min = b;
                    bracket_node = k;
                }
            }
            if !(bracket_min > 0.0) {
                return Err(SelError::HopfViolation { node: bracket_node, value: bracket_min });
            }
            let c_formula = bracket_min.powf(-1.0 / (1.0 + alpha));

            // Smallest multiple meeting the discrete inequality nodewise.
            let g = phi_power(eig, t);
            let lap = assemble_laplacian(grid).apply(&g);
            let mut need = 0.0f64;
            for k in 0..grid.len() {
                let s = lap[k] * g[k].powf(alpha) * d[k].powf(beta);
                if !(s > 0.0) {
                    return Err(SelError::HopfViolation { node: k, value: s });
                }
                need = need.max(s.powf(-1.0 / (1.0 + alpha)));
            }
            let c = c_formula.max(need) * (1.0 + margin);
            Ok((c, ScalarField(g.iter().map(|v| c * v).collect())))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Sub,
    Super,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub side: Side,
    /// Largest signed violation; non-positive means the inequality holds
    /// exactly at every node.
    pub worst_violation: f64,
    pub worst_node: usize,
    pub threshold: f64,
    pub pass: bool,
}

/// Checks `±(-Δ_h w − d^(-β) w^(-α)) <= 0` nodewise. Passes when the worst
/// violation is at most `tol · h^t · max_diag(-Δ_h)`.
pub fn verify_barrier(
    grid: &Grid,
    field: &[f64],
    alpha: f64,
    beta: f64,
    side: Side,
    tol: f64,
) -> Result<CertReport> {
    grid.check_field(field)?;
    if let Some((node, &value)) = field.iter().enumerate().find(|&(_, &v)| !(v > 0.0)) {
        return Err(SelError::NonPositiveField { node, value });
    }
    let t = boundary_exponent(alpha, beta).unwrap_or(1.0);
    let sign = match side {
        Side::Sub => 1.0,
        Side::Super => -1.0,
    };
    let (worst_node, worst_violation) = defect(grid, field, alpha, beta)
        .into_iter()
        .map(|v| sign * v)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let stencil: f64 = grid.spacing().iter().map(|h| 2.0 / (h * h)).sum();
    let threshold = tol * grid.h().powf(t) * stencil;
    Ok(CertReport { side, worst_violation, worst_node, threshold, pass: worst_violation <= threshold })
}

/// `M = α max_i d_i^(γ-β) sub_i^(-(1+α))`: the smallest shift for which
/// `s ↦ d^(-β) s^(-α) + M d^(-γ) s` is nondecreasing on `[sub, super]` at
/// every node.
pub fn choose_m(grid: &Grid, sub: &[f64], alpha: f64, beta: f64, gamma: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    sub.iter()
        .zip(grid.distances())
        .map(|(s, d)| alpha * d.powf(gamma - beta) * s.powf(-(1.0 + alpha)))
        .fold(0.0, f64::max)
}

/// Certified ordered pair with its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierPair {
    pub sub: ScalarField,
    #[serde(rename = "super")]
    pub sup: ScalarField,
    pub regime: Regime,
    /// Subsolution constant.
    pub c: f64,
    /// Supersolution constant.
    #[serde(rename = "C")]
    pub big_c: f64,
    pub t: f64,
    pub c1: f64,
    pub c2: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub gamma: f64,
    pub warnings: Vec<String>,
}

impl BarrierPair {
    /// The minimal shift recomputed from the pair.
    pub fn minimal_shift(&self, grid: &Grid, alpha: f64, beta: f64) -> f64 {
        choose_m(grid, &self.sub, alpha, beta, self.gamma)
    }

    /// Copy with a larger shift (`factor >= 1`).
    pub fn with_shift_factor(mut self, factor: f64) -> Self {
        self.m *= factor;
        self
    }
}

/// Builds sub- and supersolution, enforces `sub <= super`, and fills in the
/// sandwich constants and the minimal shift.
pub fn build_barrier_pair(grid: &Grid, alpha: f64, beta: f64, eig: &EigenPair) -> Result<BarrierPair> {
    let reg = regime(alpha, beta)?;
    let t = boundary_exponent(alpha, beta)?;
    let gamma = shift_exponent(alpha, beta)?;
    let (c, sub) = build_subsolution(grid, alpha, beta, eig)?;
    let (big_c, sup) = build_supersolution(grid, alpha, beta, eig)?;
    Ok(finish_pair(grid, alpha, beta, reg, t, gamma, (c, sub), (big_c, sup), regime_warnings(alpha, beta)))
}

/// Pair for `α + β = 1`, `α < 1`, which [`build_barrier_pair`] refuses.
///
/// Uses the linear-regime construction (`c φ₁` below, `C ψ` above with
/// `-Δ_h ψ = 1/d`) and the shift weight `γ = 2`. The solution behaves like
/// `d log(1/d)`, so the reported `t = 1` and the sandwich constants are
/// nominal only.
pub fn build_borderline_pair(grid: &Grid, alpha: f64, beta: f64, eig: &EigenPair) -> Result<BarrierPair> {
    match regime(alpha, beta) {
        Err(SelError::BorderlineRegime { .. }) if alpha < 1.0 => {}
        Err(e) => return Err(e),
        Ok(_) => {
            return Err(SelError::InvalidParameter(format!(
                "({alpha}, {beta}) is not on the borderline alpha+beta=1"
            )))
        }
    }
    grid.check_field(&eig.field)?;
    eig.field.require_positive()?;
    let sub = linear_subsolution(grid, alpha, beta, eig);
    let sup = poisson_supersolution(grid, alpha, beta, SUPER_MARGIN)?;
    let warnings = vec!["alpha+beta=1: boundary behaviour carries a logarithmic factor, exponent fits are not meaningful".to_string()];
    Ok(finish_pair(grid, alpha, beta, Regime::Borderline, 1.0, 2.0, sub, sup, warnings))
}

#[allow(clippy::too_many_arguments)]
fn finish_pair(
    grid: &Grid,
    alpha: f64,
    beta: f64,
    regime: Regime,
    t: f64,
    gamma: f64,
    (c, sub): (f64, ScalarField),
    (mut big_c, mut sup): (f64, ScalarField),
    mut warnings: Vec<String>,
) -> BarrierPair {
    // The supersolution inequality is monotone in C, so raising C keeps it.
    let excess = sub.iter().zip(sup.iter()).map(|(s, u)| s / u).fold(0.0f64, f64::max);
    if excess > 1.0 {
        let factor = excess * (1.0 + SUPER_MARGIN);
        big_c *= factor;
        sup = sup.map(|v| v * factor);
        warnings.push(format!("supersolution constant raised by {factor:.6} to order the pair"));
    }

    let d = grid.distances();
    let c1 = sub.iter().zip(d).map(|(s, dd)| s / dd.powf(t)).fold(f64::INFINITY, f64::min);
    let c2 = sup.iter().zip(d).map(|(s, dd)| s / dd.powf(t)).fold(0.0f64, f64::max);
    let m = choose_m(grid, &sub, alpha, beta, gamma);
    BarrierPair { sub, sup, regime, c, big_c, t, c1, c2, m, gamma, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainShape};
    use crate::spectral::dirichlet_eigenpair;
    use approx::assert_relative_eq;

    fn setup(n: usize) -> (Grid, EigenPair) {
        let g = build_grid(DomainShape::unit_interval(), n).unwrap();
        let e = dirichlet_eigenpair(&g, 1e-12).unwrap();
        (g, e)
    }

    #[test]
    fn exponent_examples() {
        assert_eq!(boundary_exponent(0.5, 0.0).unwrap(), 1.0);
        assert_relative_eq!(boundary_exponent(2.0, 0.0).unwrap(), 2.0 / 3.0);
        assert_relative_eq!(boundary_exponent(2.0, 1.0).unwrap(), 1.0 / 3.0);
        assert_eq!(boundary_exponent(1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn borderline_pair_on_request() {
        let (g, e) = setup(256);
        assert!(build_barrier_pair(&g, 0.5, 0.5, &e).is_err());
        let pair = build_borderline_pair(&g, 0.5, 0.5, &e).unwrap();
        assert_eq!(pair.regime, Regime::Borderline);
        assert!(pair.sub.iter().zip(pair.sup.iter()).all(|(s, u)| s <= u));
        for (field, side) in [(&pair.sub, Side::Sub), (&pair.sup, Side::Super)] {
            assert!(verify_barrier(&g, field, 0.5, 0.5, side, DEFAULT_CERT_TOL).unwrap().pass);
        }
        assert!(build_borderline_pair(&g, 0.5, 0.0, &e).is_err());
        assert!(build_borderline_pair(&g, 1.0, 0.0, &e).is_err());
    }

    #[test]
    fn borderline_refused() {
        assert_eq!(
            boundary_exponent(0.5, 0.5),
            Err(SelError::BorderlineRegime { alpha: 0.5, beta: 0.5 })
        );
        assert!(boundary_exponent(1.0, 2.0).is_err());
        assert!(!regime_warnings(1.0, 0.0).is_empty());
    }

    #[test]
    fn low_regime_sub_constant_tends_to_closed_form() {
        // c = λ₁^(-1/(1+α)) with ‖φ₁‖∞ = 1; λ₁ → π² gives π^(-4/3).
        let (g, e) = setup(512);
        let (c, _) = build_subsolution(&g, 0.5, 0.0, &e).unwrap();
        assert_relative_eq!(c, e.value.powf(-1.0 / 1.5), max_relative = 1e-9);
        assert_relative_eq!(c, std::f64::consts::PI.powf(-4.0 / 3.0), max_relative = 1e-4);
        assert_relative_eq!(c, 0.2172, epsilon = 2e-4);
    }

    #[test]
    fn high_regime_sub_constant_matches_formula() {
        let (g, e) = setup(256);
        let (c, sub) = build_subsolution(&g, 2.0, 0.0, &e).unwrap();
        let grad = g.gradient_magnitude(&e.field, GradientStencil::BoundaryOneSided);
        let gmax = grad.iter().fold(0.0f64, |m, v| m.max(*v));
        let expected = (2.0 / 9.0 * gmax * gmax + 2.0 / 3.0 * e.value).powf(-1.0 / 3.0);
        assert_relative_eq!(c, expected, max_relative = 1e-12);
        assert!(verify_barrier(&g, &sub, 2.0, 0.0, Side::Sub, DEFAULT_CERT_TOL).unwrap().pass);
    }

    #[test]
    fn low_regime_sub_is_exact_subsolution() {
        let (g, e) = setup(256);
        let (_, sub) = build_subsolution(&g, 0.5, 0.0, &e).unwrap();
        let cert = verify_barrier(&g, &sub, 0.5, 0.0, Side::Sub, DEFAULT_CERT_TOL).unwrap();
        assert!(cert.pass, "{cert:?}");
    }

    #[test]
    fn linear_supersolution_is_scaled_poisson_solution() {
        let (g, e) = setup(64);
        let (c, sup) = build_supersolution(&g, 0.0, 0.0, &e).unwrap();
        assert_relative_eq!(c, 1.1);
        for k in 0..g.len() {
            let x = g.point(k)[0];
            assert_relative_eq!(sup[k], 1.1 * x * (1.0 - x) / 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn supersolutions_certify_and_dominate() {
        let (g, e) = setup(256);
        for (a, b) in [(0.5, 0.0), (2.0, 0.0), (1.5, 0.5), (2.0, 1.0)] {
            let pair = build_barrier_pair(&g, a, b, &e).unwrap();
            assert!(pair.sub.iter().zip(pair.sup.iter()).all(|(s, u)| s <= u));
            let cert = verify_barrier(&g, &pair.sup, a, b, Side::Super, DEFAULT_CERT_TOL).unwrap();
            assert!(cert.pass, "({a},{b}) {cert:?}");
            assert!(cert.worst_violation < 0.0);
        }
    }

    #[test]
    fn doubled_margin_still_certifies() {
        let (g, e) = setup(128);
        for (a, b) in [(0.3, 0.0), (2.5, 0.5)] {
            let (_, sup) = build_supersolution_with_margin(&g, a, b, &e, 2.0 * SUPER_MARGIN).unwrap();
            assert!(verify_barrier(&g, &sup, a, b, Side::Super, DEFAULT_CERT_TOL).unwrap().pass);
        }
    }

    #[test]
    fn overscaled_field_fails_as_subsolution() {
        let (g, e) = setup(256);
        let (_, sup) = build_supersolution(&g, 2.0, 0.0, &e).unwrap();
        let big = sup.map(|v| 10.0 * v);
        let cert = verify_barrier(&g, &big, 2.0, 0.0, Side::Sub, DEFAULT_CERT_TOL).unwrap();
        assert!(!cert.pass);
        assert!(cert.worst_violation > 0.0);
    }

    #[test]
    fn shift_zero_without_nonlinearity() {
        let (g, e) = setup(64);
        let pair = build_barrier_pair(&g, 0.0, 0.0, &e).unwrap();
        assert_eq!(pair.m, 0.0);
    }

    #[test]
    fn shift_stabilizes_under_refinement() {
        for (a, b) in [(0.5, 0.0), (2.0, 0.0), (2.0, 1.0)] {
            let ms: Vec<f64> = [128, 256]
                .iter()
                .map(|&n| {
                    let (g, e) = setup(n);
                    build_barrier_pair(&g, a, b, &e).unwrap().m
                })
                .collect();
            assert!((ms[1] - ms[0]).abs() / ms[1] < 0.05, "({a},{b}) {ms:?}");
        }
    }

    #[test]
    fn nonpositive_field_rejected() {
        let (g, _) = setup(8);
        let mut w = vec![1.0; g.len()];
        w[0] = -1.0;
        assert!(verify_barrier(&g, &w, 0.5, 0.0, Side::Sub, 1e-9).is_err());
    }
}
