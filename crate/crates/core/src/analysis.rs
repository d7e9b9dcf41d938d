//! Regularity diagnostics for computed solutions: boundary and gradient
//! exponents, integrability of `|∇u|^q` under refinement, H¹ membership,
//! interior gradient probes and the two-sided uniqueness functional.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use crate::barriers::{boundary_exponent, regime, Regime};
use crate::error::{Result, SelError};
use crate::grid::{assemble_laplacian, Grid, GradientStencil};
use crate::oracle::slope;
use crate::pipeline::{solve_field, Method};
use crate::problem::ProblemSpec;

/// Minimum number of nodes a fit window must contain.
pub const MIN_FIT_NODES: usize = 8;
/// 2D fits skip nodes whose boundary foot point is closer than this fraction
/// of the edge length to a corner.
pub const CORNER_FRACTION: f64 = 0.2;
/// A refinement ratio of `sobolev_integral` at or above this marks divergence.
pub const DIVERGENCE_RATIO: f64 = 1.05;
/// Relative disagreement allowed between the two critical-q estimates.
pub const CONSISTENCY_BAND: f64 = 0.20;

/// Writes `+∞` as the string `"inf"`; JSON has no infinity literal.
pub fn serialize_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else {
        s.serialize_str("-inf")
    }
}

/// Distance band `[d_min, d_max]` used for log-log regressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub d_min: f64,
    pub d_max: f64,
}

impl FitWindow {
    pub fn new(grid: &Grid, d_min: f64, d_max: f64) -> Result<Self> {
        let top = 0.1 * grid.diameter();
        if !(d_min >= grid.h() * (1.0 - 1e-12) && d_min < d_max && d_max <= top * (1.0 + 1e-12)) {
            return Err(SelError::InvalidParameter(format!(
                "fit window [{d_min}, {d_max}] must satisfy h={} <= d_min < d_max <= {top}",
                grid.h()
            )));
        }
        Ok(Self { d_min, d_max })
    }

    /// `[4h, min(64h, 0.1 · diameter)]`: a fixed number of nodes per side,
    /// so the band shrinks towards the boundary under refinement.
    pub fn default_for(grid: &Grid) -> Result<Self> {
        let h = grid.h();
        Self::new(grid, 4.0 * h, (64.0 * h).min(0.1 * grid.diameter()))
    }

    fn contains(&self, d: f64) -> bool {
        d >= self.d_min * (1.0 - 1e-12) && d <= self.d_max * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub nodes: usize,
}

fn window_nodes(grid: &Grid, window: &FitWindow) -> Vec<usize> {
    (0..grid.len())
        .filter(|&k| window.contains(grid.distances()[k]) && grid.away_from_corners(k, CORNER_FRACTION))
        .collect()
}

fn power_fit(grid: &Grid, values: &[f64], window: &FitWindow) -> Result<PowerFit> {
    let nodes: Vec<usize> = window_nodes(grid, window).into_iter().filter(|&k| values[k] > 0.0).collect();
    if nodes.len() < MIN_FIT_NODES {
        return Err(SelError::WindowTooThin { found: nodes.len(), needed: MIN_FIT_NODES });
    }
    let x: Vec<f64> = nodes.iter().map(|&k| grid.distances()[k].ln()).collect();
    let y: Vec<f64> = nodes.iter().map(|&k| values[k].ln()).collect();
    let s = slope(&x, &y);
    let n = x.len() as f64;
    let intercept = (y.iter().sum::<f64>() - s * x.iter().sum::<f64>()) / n;
    Ok(PowerFit { exponent: s, coefficient: intercept.exp(), nodes: nodes.len() })
}

/// Least-squares fit of `u ≈ c d^t` over the window.
pub fn fit_boundary_exponent(grid: &Grid, u: &[f64], window: &FitWindow) -> Result<PowerFit> {
    grid.check_field(u)?;
    if let Some((node, &value)) = u.iter().enumerate().find(|&(_, &v)| !(v > 0.0)) {
        return Err(SelError::NonPositiveField { node, value });
    }
    power_fit(grid, u, window)
}

/// `|∇_h u|` with central differences, the boundary value 0 standing in for
/// missing neighbours.
pub fn gradient_field(grid: &Grid, u: &[f64]) -> Vec<f64> {
    grid.gradient_magnitude(u, GradientStencil::Central)
}

/// Least-squares fit of `|∇_h u| ≈ c d^σ` over the window; returns `σ`.
pub fn fit_gradient_exponent(grid: &Grid, u: &[f64], window: &FitWindow) -> Result<f64> {
    grid.check_field(u)?;
    Ok(power_fit(grid, &gradient_field(grid, u), window)?.exponent)
}

/// `Σ |∇_h u|^q · cellvol`.
pub fn sobolev_integral(grid: &Grid, u: &[f64], q: f64) -> Result<f64> {
    grid.check_field(u)?;
    if !(q >= 1.0) {
        return Err(SelError::InvalidParameter(format!("q must be >= 1, got {q}")));
    }
    Ok(grid.integrate(gradient_field(grid, u).into_iter().map(|g| g.powf(q))))
}

/// Ratios `I(n_{k+1}) / I(n_k)` of [`sobolev_integral`] over successive levels.
pub fn refinement_ratios(levels: &[(Grid, Vec<f64>)], q: f64) -> Result<Vec<f64>> {
    let vals = levels.iter().map(|(g, u)| sobolev_integral(g, u, q)).collect::<Result<Vec<_>>>()?;
    Ok(vals.windows(2).map(|w| w[1] / w[0]).collect())
}

/// `(1+α)/(α+β−1)` above the threshold, `+∞` below it.
pub fn q_bar_theory(alpha: f64, beta: f64) -> f64 {
    if alpha + beta > 1.0 {
        (1.0 + alpha) / (alpha + beta - 1.0)
    } else {
        f64::INFINITY
    }
}

/// `(1−α−β)/(1+α)` above the threshold, 0 (bounded gradient) below it.
pub fn sigma_theory(alpha: f64, beta: f64) -> f64 {
    if alpha + beta > 1.0 {
        (1.0 - alpha - beta) / (1.0 + alpha)
    } else {
        0.0
    }
}

/// `-1/σ` for `σ < -0.01`, `+∞` otherwise.
pub fn q_bar_from_sigma(sigma: f64) -> f64 {
    if sigma < -0.01 {
        -1.0 / sigma
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QScan {
    pub q: f64,
    pub ratios: Vec<f64>,
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalQ {
    #[serde(serialize_with = "serialize_extended")]
    pub q_bar_est: f64,
    pub sigma_fit: f64,
    /// Midpoint between the largest convergent and smallest divergent q of
    /// the scan, `+∞` if nothing diverges.
    #[serde(serialize_with = "serialize_extended")]
    pub q_bar_integral: f64,
    pub scan: Vec<QScan>,
}

/// Classifies `q` as divergent when the ratio at the finest pair of levels
/// reaches [`DIVERGENCE_RATIO`].
pub fn scan_q(levels: &[(Grid, Vec<f64>)], q_grid: &[f64]) -> Result<Vec<QScan>> {
    q_grid
        .iter()
        .map(|&q| {
            let ratios = refinement_ratios(levels, q)?;
            let divergent = ratios.last().is_some_and(|&r| r >= DIVERGENCE_RATIO);
            Ok(QScan { q, ratios, divergent })
        })
        .collect()
}

fn integral_threshold(scan: &[QScan]) -> f64 {
    let mut sorted: Vec<&QScan> = scan.iter().collect();
    sorted.sort_by(|a, b| a.q.total_cmp(&b.q));
    match sorted.iter().position(|s| s.divergent) {
        None => f64::INFINITY,
        Some(0) => sorted[0].q,
        Some(i) => 0.5 * (sorted[i - 1].q + sorted[i].q),
    }
}

fn relative_disagreement(a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (false, false) => 0.0,
        (true, true) => (a - b).abs() / a.min(b),
        _ => f64::INFINITY,
    }
}

/// `q̄` from the gradient exponent at the finest level, cross-checked against
/// the divergence scan of [`sobolev_integral`] over the levels (coarse to
/// fine). Disagreement beyond [`CONSISTENCY_BAND`] is an error. A scan without
/// any divergent q only bounds `q̄` from below by the largest scanned q.
pub fn estimate_critical_q(levels: &[(Grid, Vec<f64>)], q_grid: &[f64]) -> Result<CriticalQ> {
    if levels.len() < 2 {
        return Err(SelError::InvalidParameter("critical-q estimation needs at least two levels".into()));
    }
    if q_grid.is_empty() {
        return Err(SelError::InvalidParameter("empty q grid".into()));
    }
    let (fine_grid, fine_u) = levels.last().unwrap();
    let sigma_fit = fit_gradient_exponent(fine_grid, fine_u, &FitWindow::default_for(fine_grid)?)?;
    let q_bar_est = q_bar_from_sigma(sigma_fit);
    let scan = scan_q(levels, q_grid)?;
    let q_bar_integral = integral_threshold(&scan);
    let q_max = q_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let consistent = if q_bar_integral.is_finite() {
        relative_disagreement(q_bar_est, q_bar_integral) <= CONSISTENCY_BAND
    } else {
        q_bar_est * (1.0 + CONSISTENCY_BAND) >= q_max
    };
    if !consistent {
        return Err(SelError::InconsistentClassification { from_sigma: q_bar_est, from_integral: q_bar_integral });
    }
    Ok(CriticalQ { q_bar_est, sigma_fit, q_bar_integral, scan })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum H1Verdict {
    Member,
    NonMember,
    Inconclusive,
}

impl H1Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            H1Verdict::Member => "member",
            H1Verdict::NonMember => "non-member",
            H1Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H1Membership {
    pub verdict: H1Verdict,
    /// `sobolev_integral(u, 2)` per level.
    pub norms: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Member when every successive ratio of `Σ|∇_h u|²` is within 10% of 1,
/// non-member when every ratio is at least 1.1.
pub fn h1_membership_from_levels(levels: &[(Grid, Vec<f64>)]) -> Result<H1Membership> {
    if levels.len() < 3 {
        return Err(SelError::InvalidParameter(format!(
            "H1 membership needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    let norms = levels.iter().map(|(g, u)| sobolev_integral(g, u, 2.0)).collect::<Result<Vec<_>>>()?;
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    let verdict = if ratios.iter().all(|r| (r - 1.0).abs() <= 0.1) {
        H1Verdict::Member
    } else if ratios.iter().all(|&r| r >= 1.1) {
        H1Verdict::NonMember
    } else {
        H1Verdict::Inconclusive
    };
    Ok(H1Membership { verdict, norms, ratios })
}

/// Solves `spec` at each resolution with `method` and classifies.
pub fn h1_membership(spec: &ProblemSpec, levels: &[usize], method: Method) -> Result<H1Membership> {
    h1_membership_from_levels(&solve_levels(spec, levels, method)?)
}

pub fn solve_levels(spec: &ProblemSpec, levels: &[usize], method: Method) -> Result<Vec<(Grid, Vec<f64>)>> {
    levels
        .iter()
        .map(|&n| {
            let s = spec.at(n);
            let u = solve_field(&s, method)?;
            Ok((s.grid()?, u.into_inner()))
        })
        .collect()
}

/// Probe centre and radius; the ball `B_{2r}` must stay inside the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub node: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probes: Vec<Probe>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub k1_cal: f64,
    pub pass: bool,
}

/// Probes at the nodes closest to the given distances from the boundary,
/// along `x` on the first axis (mid-height in 2D), each with `r = d/3`.
pub fn probes_at_distances(grid: &Grid, distances: &[f64]) -> Vec<Probe> {
    distances
        .iter()
        .map(|&target| {
            let node = (0..grid.len())
                .filter(|&k| grid.dim() == 1 || grid.multi_index(k)[1] == grid.n() / 2)
                .min_by(|&a, &b| {
                    let da = (grid.point(a)[0] - target).abs();
                    let db = (grid.point(b)[0] - target).abs();
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
            Probe { node, radius: grid.distances()[node] / 3.0 }
        })
        .collect()
}

/// `|∇_h u(x₀)| / (r ‖Δ_h u‖_{∞,B_2r} + ‖u‖_{∞,B_2r} / r)` per probe.
pub fn probe_ratios(grid: &Grid, u: &[f64], probes: &[Probe]) -> Result<Vec<f64>> {
    grid.check_field(u)?;
    let lap = assemble_laplacian(grid).apply(u);
    let grad = gradient_field(grid, u);
    probes
        .iter()
        .map(|p| {
            let d = grid.distances()[p.node];
            if !(2.0 * p.radius < d) || !(p.radius > 0.0) {
                return Err(SelError::BallOutsideDomain { node: p.node, radius: p.radius, distance: d });
            }
            let centre = grid.point(p.node);
            let (mut lap_max, mut u_max) = (0.0f64, 0.0f64);
            for k in 0..grid.len() {
                let dist2: f64 = grid.point(k).iter().zip(centre).map(|(a, b)| (a - b).powi(2)).sum();
                if dist2 <= (2.0 * p.radius).powi(2) {
                    lap_max = lap_max.max(lap[k].abs());
                    u_max = u_max.max(u[k].abs());
                }
            }
            let denom = p.radius * lap_max + u_max / p.radius;
            Ok(if denom > 0.0 { grad[p.node] / denom } else { 0.0 })
        })
        .collect()
}

/// 3× the largest probe ratio of the `α = 0, β = 0` solution on the same grid.
pub fn calibrate_k1(grid: &Grid, probes: &[Probe]) -> Result<f64> {
    let smooth = solve_field(&ProblemSpec::on(0.0, 0.0, grid.shape(), grid.n()), Method::Monotone)?;
    let ratios = probe_ratios(grid, &smooth, probes)?;
    Ok(3.0 * ratios.iter().fold(0.0f64, |m, r| m.max(*r)))
}

pub fn local_gradient_probe(grid: &Grid, u: &[f64], probes: &[Probe], k1_cal: f64) -> Result<ProbeReport> {
    let ratios = probe_ratios(grid, u, probes)?;
    let max_ratio = ratios.iter().fold(0.0f64, |m, r| m.max(*r));
    Ok(ProbeReport { probes: probes.to_vec(), ratios, max_ratio, k1_cal, pass: max_ratio <= k1_cal })
}

/// `Σ d^(-β) (v^(α+1) − u^(α+1)) / (u^α v^α) · cellvol`.
pub fn uniqueness_identity(grid: &Grid, u: &[f64], v: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    grid.check_field(u)?;
    grid.check_field(v)?;
    for field in [u, v] {
        if let Some((node, &value)) = field.iter().enumerate().find(|&(_, &x)| !(x > 0.0)) {
            return Err(SelError::NonPositiveField { node, value });
        }
    }
    Ok(grid.integrate(u.iter().zip(v).zip(grid.distances()).map(|((&a, &b), &d)| {
        d.powf(-beta) * (b.powf(alpha + 1.0) - a.powf(alpha + 1.0)) / (a.powf(alpha) * b.powf(alpha))
    })))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub alpha: f64,
    pub beta: f64,
    pub levels: Vec<usize>,
    pub t_theory: f64,
    pub t_fit: f64,
    pub sigma_theory: f64,
    pub sigma_fit: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub q_bar_theory: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub q_bar_est: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub q_bar_integral: f64,
    pub q_scan: Vec<QScan>,
    pub h1_norms: Vec<f64>,
    pub h1_ratios: Vec<f64>,
    pub h1_verdict: H1Verdict,
    pub probe: ProbeReport,
    pub verdicts: BTreeMap<String, bool>,
}

/// Default q grid: 1 to 6 in steps of 1/4.
pub fn default_q_grid() -> Vec<f64> {
    (0..=20).map(|i| 1.0 + 0.25 * i as f64).collect()
}

/// Solves at every level and runs all diagnostics; fits use the finest level.
pub fn regularity_report(
    spec: &ProblemSpec,
    levels: &[usize],
    q_grid: &[f64],
    method: Method,
) -> Result<RegularityReport> {
    let sols = solve_levels(spec, levels, method)?;
    regularity_report_from_levels(spec.alpha, spec.beta, &sols, q_grid)
}

/// As [`regularity_report`] on solutions already computed, coarse to fine.
pub fn regularity_report_from_levels(
    alpha: f64,
    beta: f64,
    sols: &[(Grid, Vec<f64>)],
    q_grid: &[f64],
) -> Result<RegularityReport> {
    let t_theory = boundary_exponent(alpha, beta)?;
    let levels: Vec<usize> = sols.iter().map(|(g, _)| g.n()).collect();
    let (grid, u) = sols.last().ok_or_else(|| SelError::InvalidParameter("no refinement levels".into()))?;
    let window = FitWindow::default_for(grid)?;
    let t_fit = fit_boundary_exponent(grid, u, &window)?.exponent;
    let crit = estimate_critical_q(sols, q_grid)?;
    let h1 = h1_membership_from_levels(sols)?;
    let probes = probes_at_distances(grid, &[0.05, 0.1, 0.2]);
    let k1 = calibrate_k1(grid, &probes)?;
    let probe = local_gradient_probe(grid, u, &probes, k1)?;

    let sigma_th = sigma_theory(alpha, beta);
    let q_th = q_bar_theory(alpha, beta);
    let high = regime(alpha, beta)? == Regime::High;
    let mut verdicts = BTreeMap::new();
    verdicts.insert("t_fit".to_string(), (t_fit - t_theory).abs() <= 0.05);
    verdicts.insert("sigma_fit".to_string(), (crit.sigma_fit - sigma_th).abs() <= 0.05);
    verdicts.insert("q_bar".to_string(), relative_disagreement(crit.q_bar_est, q_th) <= 0.1);
    if high {
        verdicts.insert("consistency_triangle".to_string(), (t_fit - 1.0 - crit.sigma_fit).abs() <= 0.05);
    }
    let expect_member = !high || alpha + 2.0 * beta < 3.0;
    let expected = if expect_member { H1Verdict::Member } else { H1Verdict::NonMember };
    verdicts.insert("h1".to_string(), h1.verdict == expected);
    verdicts.insert("gradient_probe".to_string(), probe.pass);

    Ok(RegularityReport {
        alpha,
        beta,
        levels,
        t_theory,
        t_fit,
        sigma_theory: sigma_th,
        sigma_fit: crit.sigma_fit,
        q_bar_theory: q_th,
        q_bar_est: crit.q_bar_est,
        q_bar_integral: crit.q_bar_integral,
        q_scan: crit.scan,
        h1_norms: h1.norms,
        h1_ratios: h1.ratios,
        h1_verdict: h1.verdict,
        probe,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainShape};
    use crate::oracle::observed_order;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn interval(n: usize) -> Grid {
        build_grid(DomainShape::unit_interval(), n).unwrap()
    }

    #[test]
    fn window_validation() {
        let g = interval(256);
        assert!(FitWindow::new(&g, 0.5 * g.h(), 0.05).is_err());
        assert!(FitWindow::new(&g, 0.05, 0.02).is_err());
        assert!(FitWindow::new(&g, 4.0 * g.h(), 0.2).is_err());
        let w = FitWindow::new(&g, 4.0 * g.h(), 6.0 * g.h()).unwrap();
        let u: Vec<f64> = g.distances().to_vec();
        assert_eq!(
            fit_boundary_exponent(&g, &u, &w).unwrap_err(),
            SelError::WindowTooThin { found: 6, needed: MIN_FIT_NODES }
        );
    }

    #[test]
    fn exact_linear_power() {
        let g = interval(512);
        let u: Vec<f64> = g.distances().to_vec();
        let fit = fit_boundary_exponent(&g, &u, &FitWindow::default_for(&g).unwrap()).unwrap();
        assert_relative_eq!(fit.exponent, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficient, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn two_thirds_power_gradient() {
        let g = interval(4096);
        let u: Vec<f64> = g.distances().iter().map(|d| d.powf(2.0 / 3.0)).collect();
        let s = fit_gradient_exponent(&g, &u, &FitWindow::default_for(&g).unwrap()).unwrap();
        assert!((s + 1.0 / 3.0).abs() <= 0.02, "{s}");
    }

    #[test]
    fn gradient_exact_for_quadratic() {
        let g = interval(50);
        let u: Vec<f64> = (0..g.len()).map(|k| g.point(k)[0] * (1.0 - g.point(k)[0]) / 2.0).collect();
        for (k, gr) in gradient_field(&g, &u).iter().enumerate() {
            assert_relative_eq!(*gr, (0.5 - g.point(k)[0]).abs(), epsilon = 1e-14);
        }
        assert!(gradient_field(&g, &vec![0.0; g.len()]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_second_order_for_sine() {
        let ns = [32, 64, 128];
        let errs: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let g = interval(n);
                let u: Vec<f64> = (0..g.len()).map(|k| (PI * g.point(k)[0]).sin()).collect();
                gradient_field(&g, &u)
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (v - PI * (PI * g.point(k)[0]).cos().abs()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let hs: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
        let o = observed_order(&errs, &hs).unwrap();
        assert!(o.order >= 1.9 && o.reliable, "{o:?}");
    }

    #[test]
    fn sobolev_integral_of_linear_solution() {
        let g = interval(1024);
        let u: Vec<f64> = (0..g.len()).map(|k| g.point(k)[0] * (1.0 - g.point(k)[0]) / 2.0).collect();
        assert_relative_eq!(sobolev_integral(&g, &u, 2.0).unwrap(), 1.0 / 12.0, epsilon = 1e-3);
        assert!(sobolev_integral(&g, &u, 0.5).is_err());
    }

    #[test]
    fn bounded_gradient_integral_stabilizes() {
        let levels: Vec<(Grid, Vec<f64>)> = [128, 256, 512]
            .iter()
            .map(|&n| {
                let g = interval(n);
                let u = (0..g.len()).map(|k| (PI * g.point(k)[0]).sin()).collect();
                (g, u)
            })
            .collect();
        for r in refinement_ratios(&levels, 1.0).unwrap() {
            assert!((r - 1.0).abs() < 1e-2, "{r}");
        }
    }

    #[test]
    fn singular_power_integral_diverges_above_threshold() {
        // |∇(d^(2/3))|^4 ~ d^(-4/3) is not integrable.
        let levels: Vec<(Grid, Vec<f64>)> = [512, 1024, 2048]
            .iter()
            .map(|&n| {
                let g = interval(n);
                let u = g.distances().iter().map(|d| d.powf(2.0 / 3.0)).collect();
                (g, u)
            })
            .collect();
        let r = refinement_ratios(&levels, 4.0).unwrap();
        assert!(r.iter().all(|&x| x >= 1.1), "{r:?}");
        let c = estimate_critical_q(&levels, &default_q_grid()).unwrap();
        assert!((c.q_bar_est - 3.0).abs() < 0.3, "{c:?}");
    }

    #[test]
    fn critical_q_formulas() {
        assert_relative_eq!(q_bar_theory(2.0, 0.0), 3.0);
        assert_relative_eq!(q_bar_theory(2.0, 1.0), 1.5);
        assert!(q_bar_theory(0.5, 0.2).is_infinite());
        assert_relative_eq!(sigma_theory(2.0, 0.0), -1.0 / 3.0);
        assert!(q_bar_from_sigma(-0.005).is_infinite());
        assert_relative_eq!(q_bar_from_sigma(-0.5), 2.0);
    }

    #[test]
    fn disagreeing_estimates_rejected() {
        // Finest level jumps by a large factor, so every q looks divergent,
        // while its own profile d^0.9 has a nearly bounded gradient.
        let coarse = interval(256);
        let mid = interval(512);
        let fine = interval(1024);
        let sine = |g: &Grid| (0..g.len()).map(|k| (PI * g.point(k)[0]).sin()).collect::<Vec<_>>();
        let steep: Vec<f64> = fine.distances().iter().map(|d| 100.0 * d.powf(0.9)).collect();
        let levels = vec![(coarse.clone(), sine(&coarse)), (mid.clone(), sine(&mid)), (fine, steep)];
        let r = estimate_critical_q(&levels, &default_q_grid());
        assert!(matches!(r, Err(SelError::InconsistentClassification { .. })), "{r:?}");
    }

    #[test]
    fn h1_verdicts() {
        let mk = |s: f64| -> Vec<(Grid, Vec<f64>)> {
            [256, 512, 1024, 2048]
                .iter()
                .map(|&n| {
                    let g = interval(n);
                    let u = g.distances().iter().map(|d| d.powf(s)).collect();
                    (g, u)
                })
                .collect()
        };
        // |∇ d^s|² ~ d^(2s-2): integrable iff s > 1/2.
        assert_eq!(h1_membership_from_levels(&mk(0.8)).unwrap().verdict, H1Verdict::Member);
        assert_eq!(h1_membership_from_levels(&mk(0.3)).unwrap().verdict, H1Verdict::NonMember);
        assert!(h1_membership_from_levels(&mk(0.8)[..2]).is_err());
    }

    #[test]
    fn h1_linear_case_member_with_limit() {
        let spec = ProblemSpec::new(0.0, 0.0, 64);
        let m = h1_membership(&spec, &[64, 128, 256], Method::Monotone).unwrap();
        assert_eq!(m.verdict, H1Verdict::Member);
        assert_relative_eq!(*m.norms.last().unwrap(), 1.0 / 12.0, epsilon = 1e-3);
    }

    #[test]
    fn probe_smooth_and_invalid() {
        let g = interval(256);
        let u: Vec<f64> = (0..g.len()).map(|k| g.point(k)[0] * (1.0 - g.point(k)[0]) / 2.0).collect();
        let probes = probes_at_distances(&g, &[0.05, 0.1, 0.2]);
        let r = probe_ratios(&g, &u, &probes).unwrap();
        assert!(r.iter().all(|&x| x > 0.0 && x < 1.0), "{r:?}");
        let bad = [Probe { node: probes[0].node, radius: 0.6 * g.distances()[probes[0].node] }];
        assert!(matches!(probe_ratios(&g, &u, &bad), Err(SelError::BallOutsideDomain { .. })));
        let k1 = calibrate_k1(&g, &probes).unwrap();
        assert_relative_eq!(k1, 3.0 * r.iter().fold(0.0f64, |m, x| m.max(*x)), max_relative = 1e-8);
    }

    #[test]
    fn probe_ratio_stable_for_singular_solution() {
        let spec = ProblemSpec::new(2.0, 0.0, 1024);
        let u = solve_field(&spec, Method::Monotone).unwrap();
        let g = spec.grid().unwrap();
        let probes = probes_at_distances(&g, &[0.05, 0.1, 0.2]);
        let rep = local_gradient_probe(&g, &u, &probes, calibrate_k1(&g, &probes).unwrap()).unwrap();
        assert!(rep.pass);
        let lo = rep.ratios.iter().fold(f64::INFINITY, |m, x| m.min(*x));
        assert!(rep.max_ratio / lo < 1.5, "{:?}", rep.ratios);
    }

    #[test]
    fn uniqueness_identity_cases() {
        let g = interval(64);
        let u: Vec<f64> = g.distances().iter().map(|d| 0.5 * d.sqrt()).collect();
        assert_eq!(uniqueness_identity(&g, &u, &u, 2.0, 0.5).unwrap(), 0.0);
        let v: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        let expected = 1.5 * g.integrate(g.distances().iter().map(|d| d.powf(-0.5)));
        assert_relative_eq!(uniqueness_identity(&g, &u, &v, 1.0, 0.5).unwrap(), expected, max_relative = 1e-13);
        assert!(uniqueness_identity(&g, &vec![0.0; g.len()], &u, 1.0, 0.0).is_err());
    }

    #[test]
    fn extended_reals_serialize() {
        #[derive(Serialize)]
        struct W(#[serde(serialize_with = "serialize_extended")] f64);
        assert_eq!(serde_json::to_string(&W(f64::INFINITY)).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&W(1.5)).unwrap(), "1.5");
    }
}
