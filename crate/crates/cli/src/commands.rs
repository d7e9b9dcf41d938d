use std::fs;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use sel_core::analysis::{
    default_q_grid, fit_boundary_exponent, fit_gradient_exponent, gradient_field, h1_membership,
    q_bar_from_sigma, q_bar_theory, regularity_report_from_levels, sigma_theory, sobolev_integral,
    solve_levels, FitWindow, RegularityReport,
};
use sel_core::barriers::{boundary_exponent, regime, Regime};
use sel_core::monotone_solver::{interior_residual, residual, solve_monotone, uniqueness_gap, SolveConfig};
use sel_core::newton::NewtonReport;
use sel_core::oracle::{dense_newton_report, sparse_newton_solve, ORACLE_TOL};
use sel_core::pipeline::{prepare_with, Method, Prepared};
use sel_core::regularized_solver::solve_regularized_report;
use sel_core::spectral::linearized_smallest_eigenvalue;
use sel_core::{DomainShape, ProblemSpec, ScalarField, SelError};

use crate::output::{fmt_f64, write_csv, write_json, write_manifest};
use crate::{Domain, Failure, LevelArgs, Outcome, RegularityArgs, SolveArgs, SolverMethod, SweepArgs};

/// Real number that serializes `±∞` as `"inf"`/`"-inf"` and NaN as null.
#[derive(Debug, Clone, Copy)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            v if v.is_nan() => s.serialize_none(),
            v if v == f64::INFINITY => s.serialize_str("inf"),
            v if v == f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SpecEcho {
    alpha: f64,
    beta: f64,
    domain: DomainShape,
    n: usize,
    tol: f64,
    max_iter: usize,
    method: SolverMethod,
    eps: Option<f64>,
    allow_borderline: bool,
}

impl SpecEcho {
    fn new(a: &SolveArgs) -> Self {
        Self {
            alpha: a.alpha,
            beta: a.beta,
            domain: shape(a),
            n: a.n,
            tol: a.tol,
            max_iter: a.max_iter,
            method: a.method,
            eps: (a.method == SolverMethod::Regularized).then_some(a.eps),
            allow_borderline: a.allow_borderline,
        }
    }
}

fn shape(a: &SolveArgs) -> DomainShape {
    match a.domain {
        Domain::Interval => DomainShape::Interval { length: a.width },
        Domain::Rectangle => DomainShape::Rectangle { width: a.width, height: a.height },
    }
}

fn problem(alpha: f64, beta: f64, shape: DomainShape, n: usize, tol: f64, max_iter: usize) -> Outcome<ProblemSpec> {
    let mut spec = ProblemSpec::on(alpha, beta, shape, n);
    spec.tol = tol;
    spec.max_iter = max_iter;
    spec.inner_tol = spec.inner_tol.min(tol / 10.0);
    spec.validate()?;
    Ok(spec)
}

fn problem_from(a: &SolveArgs) -> Outcome<ProblemSpec> {
    if a.method == SolverMethod::Regularized && !(a.eps > 0.0 && a.eps.is_finite()) {
        return Err(Failure::invalid(format!("--eps must be positive, got {}", a.eps)));
    }
    problem(a.alpha, a.beta, shape(a), a.n, a.tol, a.max_iter)
}

/// Solver used where a family of singular solutions is needed.
fn level_method(m: SolverMethod) -> Method {
    match m {
        SolverMethod::Monotone => Method::Monotone,
        _ => Method::Newton,
    }
}

#[derive(Debug, Serialize)]
struct BarrierBlock {
    regime: Regime,
    c: f64,
    #[serde(rename = "C")]
    big_c: f64,
    t: f64,
    c1: f64,
    c2: f64,
    #[serde(rename = "M")]
    m: f64,
    gamma: f64,
}

#[derive(Debug, Serialize)]
struct SolveBlock {
    method: SolverMethod,
    iterations: usize,
    gap_history: Vec<f64>,
    converged: bool,
    final_gap: Option<f64>,
    gap_floor: Option<f64>,
    ordering_violation: Option<f64>,
    uniqueness_gap: Option<f64>,
    newton_residual: Option<f64>,
    halvings: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SpectralBlock {
    lambda1: f64,
    mu1: Option<f64>,
    stable: Option<bool>,
}

#[derive(Debug, Serialize)]
struct RegularityBlock {
    t_theory: f64,
    t_fit: Option<f64>,
    sigma_theory: f64,
    sigma_fit: Option<f64>,
    q_bar_est: Option<Real>,
    q_bar_theory: Real,
    h1_verdict: Option<String>,
}

#[derive(Debug, Serialize)]
struct Residuals {
    weighted_max: f64,
    interior_max: f64,
}

#[derive(Debug, Serialize)]
struct SolveOutput {
    spec: SpecEcho,
    barrier: BarrierBlock,
    solve: SolveBlock,
    spectral: SpectralBlock,
    regularity: RegularityBlock,
    residuals: Residuals,
    warnings: Vec<String>,
}

struct Computed {
    field: ScalarField,
    block: SolveBlock,
}

fn newton_block(method: SolverMethod, r: &NewtonReport) -> SolveBlock {
    SolveBlock {
        method,
        iterations: r.iterations,
        gap_history: Vec::new(),
        converged: true,
        final_gap: None,
        gap_floor: None,
        ordering_violation: None,
        uniqueness_gap: None,
        newton_residual: Some(r.residual),
        halvings: Some(r.halvings),
    }
}

fn compute(spec: &ProblemSpec, prep: &Prepared, method: SolverMethod, eps: f64) -> Outcome<Computed> {
    let newton = match method {
        SolverMethod::Monotone => {
            let rep = solve_monotone(spec, &prep.pair, &SolveConfig::from_spec(spec)?)?;
            let block = SolveBlock {
                method,
                iterations: rep.iterations,
                gap_history: rep.gap_history.clone(),
                converged: rep.converged,
                final_gap: Some(rep.final_gap()),
                gap_floor: Some(rep.gap_floor),
                ordering_violation: Some(rep.ordering_violation),
                uniqueness_gap: Some(uniqueness_gap(&rep)),
                newton_residual: None,
                halvings: None,
            };
            return Ok(Computed { field: rep.solution(), block });
        }
        SolverMethod::Regularized => solve_regularized_report(spec, eps, &prep.pair.sup, ORACLE_TOL)?,
        SolverMethod::Dense => dense_newton_report(spec)?,
        SolverMethod::Newton => sparse_newton_solve(spec)?,
    };
    Ok(Computed { block: newton_block(method, &newton), field: newton.field })
}

fn barrier_block(prep: &Prepared) -> BarrierBlock {
    let p = &prep.pair;
    BarrierBlock { regime: p.regime, c: p.c, big_c: p.big_c, t: p.t, c1: p.c1, c2: p.c2, m: p.m, gamma: p.gamma }
}

fn regularity_block(spec: &ProblemSpec, prep: &Prepared, u: &[f64], method: SolverMethod, warnings: &mut Vec<String>) -> RegularityBlock {
    let (alpha, beta) = (spec.alpha, spec.beta);
    let grid = &prep.grid;
    let fits = FitWindow::default_for(grid).and_then(|w| {
        let t = fit_boundary_exponent(grid, u, &w)?.exponent;
        let s = fit_gradient_exponent(grid, u, &w)?;
        Ok((t, s))
    });
    let (t_fit, sigma_fit) = match fits {
        Ok((t, s)) => (Some(t), Some(s)),
        Err(e) => {
            warnings.push(format!("exponent fits unavailable: {e}"));
            (None, None)
        }
    };
    let levels = [spec.n / 4, spec.n / 2, spec.n];
    let h1_verdict = if spec.n / 4 < 16 {
        warnings.push("h1 verdict needs n >= 64 (levels n/4, n/2, n)".to_string());
        None
    } else {
        match h1_membership(spec, &levels, level_method(method)) {
            Ok(m) => Some(m.verdict.as_str().to_string()),
            Err(e) => {
                warnings.push(format!("h1 verdict unavailable: {e}"));
                None
            }
        }
    };
    RegularityBlock {
        t_theory: prep.pair.t,
        t_fit,
        sigma_theory: sigma_theory(alpha, beta),
        sigma_fit,
        q_bar_est: sigma_fit.map(|s| Real(q_bar_from_sigma(s))),
        q_bar_theory: Real(q_bar_theory(alpha, beta)),
        h1_verdict,
    }
}

fn create_dir(out: &Path) -> Outcome<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn solution_rows(prep: &Prepared, u: &[f64]) -> Vec<Vec<String>> {
    let grid = &prep.grid;
    let grad = gradient_field(grid, u);
    (0..grid.len())
        .map(|k| {
            let mut row: Vec<String> = grid.point(k).iter().map(|x| fmt_f64(*x)).collect();
            row.push(fmt_f64(grid.distances()[k]));
            row.push(fmt_f64(u[k]));
            row.push(fmt_f64(grad[k]));
            row
        })
        .collect()
}

pub fn run_solve(a: &SolveArgs) -> Outcome<u8> {
    let started = SystemTime::now();
    let spec = problem_from(a)?;
    let prep = prepare_with(&spec, a.allow_borderline)?;
    let computed = compute(&spec, &prep, a.method, a.eps)?;
    let u = &computed.field;
    let converged = computed.block.converged;

    let mut warnings = prep.pair.warnings.clone();
    let mu1 = if converged {
        Some(linearized_smallest_eigenvalue(&prep.grid, u, spec.alpha, spec.beta, spec.eig_tol)?.value)
    } else {
        warnings.push("solve did not converge; spectral and regularity blocks describe the last iterate".to_string());
        None
    };
    let regularity = regularity_block(&spec, &prep, u, a.method, &mut warnings);
    let report = SolveOutput {
        spec: SpecEcho::new(a),
        barrier: barrier_block(&prep),
        spectral: SpectralBlock { lambda1: prep.eig.value, mu1, stable: mu1.map(|m| m > 0.0) },
        residuals: Residuals {
            weighted_max: residual(&prep.grid, u, spec.alpha, spec.beta),
            interior_max: interior_residual(&prep.grid, u, spec.alpha, spec.beta, 2),
        },
        solve: computed.block,
        regularity,
        warnings,
    };

    create_dir(&a.out)?;
    let header: Vec<&str> = match prep.grid.dim() {
        1 => vec!["x", "d", "u", "grad_u"],
        _ => vec!["x", "y", "d", "u", "grad_u"],
    };
    let report_path = a.out.join("report.json");
    let csv_path = a.out.join("solution.csv");
    write_json(&report_path, &report)?;
    write_csv(&csv_path, &header, &solution_rows(&prep, u))?;
    write_manifest(&a.out, "solve", &report.spec, &[report_path, csv_path], started)?;
    if converged {
        Ok(0)
    } else {
        eprintln!("error: monotone iteration did not reach the gap tolerance in {} iterations", report.solve.iterations);
        Ok(2)
    }
}

#[derive(Debug, Clone, Serialize)]
struct SweepEcho {
    alpha_list: Vec<f64>,
    beta_list: Vec<f64>,
    n: usize,
    levels: [usize; 3],
    method: SolverMethod,
    tol: f64,
    max_iter: usize,
}

fn threads() -> usize {
    std::env::var("SEL_THREADS").ok().and_then(|v| v.parse().ok()).unwrap_or(0)
}

fn sweep_row(alpha: f64, beta: f64, a: &SweepArgs, levels: &[usize; 3]) -> Vec<String> {
    let t_th = boundary_exponent(alpha, beta).map(fmt_f64).unwrap_or_default();
    let theory = vec![
        fmt_f64(alpha),
        fmt_f64(beta),
        t_th,
        String::new(),
        fmt_f64(sigma_theory(alpha, beta)),
        String::new(),
        fmt_f64(q_bar_theory(alpha, beta)),
        String::new(),
    ];
    let skipped = |reason: String| {
        let mut row = theory.clone();
        row.push(format!("skipped: {reason}"));
        row
    };
    match regime(alpha, beta) {
        Err(SelError::BorderlineRegime { .. }) => return skipped("alpha+beta=1 borderline regime".into()),
        Err(e) => return skipped(e.to_string()),
        Ok(_) if alpha == 1.0 && beta == 0.0 => return skipped("alpha=1 outside the existence theorems".into()),
        Ok(_) => {}
    }
    let result = problem(alpha, beta, DomainShape::unit_interval(), a.n, a.tol, a.max_iter)
        .and_then(|spec| Ok(solve_levels(&spec, levels, level_method(a.method))?))
        .and_then(|sols| Ok(regularity_report_from_levels(alpha, beta, &sols, &default_q_grid())?));
    match result {
        Ok(r) => vec![
            fmt_f64(alpha),
            fmt_f64(beta),
            fmt_f64(r.t_theory),
            fmt_f64(r.t_fit),
            fmt_f64(r.sigma_theory),
            fmt_f64(r.sigma_fit),
            fmt_f64(r.q_bar_theory),
            fmt_f64(r.q_bar_est),
            r.h1_verdict.as_str().to_string(),
        ],
        Err(f) => skipped(f.message),
    }
}

pub fn run_sweep(a: &SweepArgs) -> Outcome<u8> {
    let started = SystemTime::now();
    if a.alpha_list.is_empty() || a.beta_list.is_empty() {
        return Err(Failure::invalid("--alpha-list and --beta-list must be non-empty"));
    }
    if a.n < 64 {
        return Err(Failure::invalid(format!("sweep needs n >= 64, got {}", a.n)));
    }
    let levels = [a.n / 4, a.n / 2, a.n];
    let cells: Vec<(f64, f64)> =
        a.alpha_list.iter().flat_map(|&al| a.beta_list.iter().map(move |&b| (al, b))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads())
        .build()
        .map_err(|e| Failure::invalid(format!("thread pool: {e}")))?;
    let rows: Vec<Vec<String>> = pool.install(|| cells.par_iter().map(|&(al, b)| sweep_row(al, b, a, &levels)).collect());

    create_dir(&a.out)?;
    let path = a.out.join("sweep.csv");
    let header =
        ["alpha", "beta", "t_theory", "t_fit", "sigma_theory", "sigma_fit", "q_bar_theory", "q_bar_est", "h1_verdict"];
    write_csv(&path, &header, &rows)?;
    let echo = SweepEcho {
        alpha_list: a.alpha_list.clone(),
        beta_list: a.beta_list.clone(),
        n: a.n,
        levels,
        method: a.method,
        tol: a.tol,
        max_iter: a.max_iter,
    };
    write_manifest(&a.out, "sweep", &echo, &[path], started)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SpectrumRow {
    n: usize,
    h: f64,
    lambda1: f64,
    mu1: Option<f64>,
    converged: bool,
    mu1_ge_lambda1: Option<bool>,
}

#[derive(Debug, Serialize)]
struct SpectrumOutput {
    spec: SpecEcho,
    levels: Vec<SpectrumRow>,
    /// `μ₁ > 0` at every converged level.
    stable: bool,
}

fn check_levels(levels: &[usize]) -> Outcome<()> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::invalid(format!("--levels must be strictly increasing, got {levels:?}")));
    }
    Ok(())
}

pub fn run_spectrum(a: &LevelArgs) -> Outcome<u8> {
    let started = SystemTime::now();
    check_levels(&a.levels)?;
    let base = problem_from(&a.solve)?;
    let mut rows = Vec::new();
    for &n in &a.levels {
        let spec = base.at(n);
        spec.validate()?;
        let prep = prepare_with(&spec, a.solve.allow_borderline)?;
        let c = compute(&spec, &prep, a.solve.method, a.solve.eps)?;
        let mu1 = if c.block.converged {
            Some(linearized_smallest_eigenvalue(&prep.grid, &c.field, spec.alpha, spec.beta, spec.eig_tol)?.value)
        } else {
            None
        };
        rows.push(SpectrumRow {
            n,
            h: prep.grid.h(),
            lambda1: prep.eig.value,
            mu1,
            converged: c.block.converged,
            mu1_ge_lambda1: mu1.map(|m| m >= prep.eig.value),
        });
    }
    let all_converged = rows.iter().all(|r| r.converged);
    let out = SpectrumOutput {
        spec: SpecEcho::new(&a.solve),
        stable: rows.iter().filter_map(|r| r.mu1).all(|m| m > 0.0),
        levels: rows,
    };
    create_dir(&a.solve.out)?;
    let path = a.solve.out.join("spectrum.json");
    write_json(&path, &out)?;
    write_manifest(&a.solve.out, "spectrum", &out.spec, &[path], started)?;
    Ok(if all_converged { 0 } else { 2 })
}

#[derive(Serialize)]
struct RegularityOutput<'a> {
    spec: SpecEcho,
    q_grid: &'a [f64],
    report: RegularityReport,
    warnings: Vec<String>,
}

pub fn run_regularity(a: &RegularityArgs) -> Outcome<u8> {
    let started = SystemTime::now();
    check_levels(&a.levels)?;
    let q_grid = if a.q_grid.is_empty() { default_q_grid() } else { a.q_grid.clone() };
    let base = problem_from(&a.solve)?;
    let spec = base.at(*a.levels.last().unwrap());
    let sols = solve_levels(&spec, &a.levels, level_method(a.solve.method))?;
    let report = regularity_report_from_levels(spec.alpha, spec.beta, &sols, &q_grid)?;

    let mut rows = Vec::new();
    for (g, u) in &sols {
        for &q in &q_grid {
            rows.push(vec![g.n().to_string(), fmt_f64(g.h()), fmt_f64(q), fmt_f64(sobolev_integral(g, u, q)?)]);
        }
    }
    let mut warnings = sel_core::barriers::regime_warnings(spec.alpha, spec.beta);
    if a.solve.method != SolverMethod::Monotone && a.solve.method != SolverMethod::Newton {
        warnings.push("regularity levels are solved with sparse Newton".to_string());
    }
    let out = RegularityOutput { spec: SpecEcho::new(&a.solve), q_grid: &q_grid, report, warnings };
    create_dir(&a.solve.out)?;
    let json_path = a.solve.out.join("regularity.json");
    let csv_path: PathBuf = a.solve.out.join("sobolev.csv");
    write_json(&json_path, &out)?;
    write_csv(&csv_path, &["n", "h", "q", "integral"], &rows)?;
    write_manifest(&a.solve.out, "regularity", &out.spec, &[json_path, csv_path], started)?;
    Ok(0)
}
