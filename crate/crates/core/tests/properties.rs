use proptest::prelude::*;
use sel_core::analysis::{fit_boundary_exponent, fit_gradient_exponent, FitWindow};
use sel_core::barriers::build_barrier_pair;
use sel_core::linear_core::{assemble_shifted, solve_spd, ShiftSpec};
use sel_core::spectral::dirichlet_eigenpair;
use sel_core::{build_grid, DomainShape, Grid};

fn interval(n: usize) -> Grid {
    build_grid(DomainShape::unit_interval(), n).unwrap()
}

fn forcing(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nonnegative_forcing_gives_nonnegative_solution(f in forcing(63), m in 0.0f64..5.0) {
        let g = interval(64);
        let a = assemble_shifted(&g, ShiftSpec::new(m, 2.0).unwrap());
        let (u, _) = solve_spd(&a, &f, 1e-13).unwrap();
        let scale = f.iter().fold(0.0f64, |s, v| s.max(*v)).max(1e-300);
        prop_assert!(u.iter().all(|&v| v >= -1e-12 * scale), "min {}", u.min());
    }

    #[test]
    fn nonnegative_forcing_on_square(f in forcing(225)) {
        let g = build_grid(DomainShape::unit_square(), 16).unwrap();
        let a = assemble_shifted(&g, ShiftSpec::new(1.0, 1.5).unwrap());
        let (u, _) = solve_spd(&a, &f, 1e-13).unwrap();
        prop_assert!(u.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn shifted_operator_is_symmetric(m in 0.0f64..10.0, gamma in 0.0f64..2.0) {
        let g = interval(40);
        prop_assert!(assemble_shifted(&g, ShiftSpec::new(m, gamma).unwrap()).is_symmetric(1e-12));
    }

    #[test]
    fn larger_shift_gives_smaller_solution(f in forcing(63), m in 0.0f64..5.0, dm in 0.1f64..5.0) {
        let g = interval(64);
        let small = solve_spd(&assemble_shifted(&g, ShiftSpec::new(m, 2.0).unwrap()), &f, 1e-14).unwrap().0;
        let large = solve_spd(&assemble_shifted(&g, ShiftSpec::new(m + dm, 2.0).unwrap()), &f, 1e-14).unwrap().0;
        let scale = small.max_abs().max(1e-300);
        prop_assert!(large.iter().zip(small.iter()).all(|(a, b)| *a <= b + 1e-11 * scale));
    }

    #[test]
    fn energy_identity(f in forcing(63), m in 0.0f64..5.0) {
        let g = interval(64);
        let a = assemble_shifted(&g, ShiftSpec::new(m, 1.0).unwrap());
        let (u, _) = solve_spd(&a, &f, 1e-14).unwrap();
        let lhs = a.quadratic_form(&u);
        let rhs: f64 = u.iter().zip(&f).map(|(x, y)| x * y).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1e-300));
    }
}

// Monotonized right-hand side `s ↦ d^(-β) s^(-α) + M d^(-γ) s` on the order
// interval of each certified pair.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn monotonized_map_is_nondecreasing(
        case in 0usize..6,
        node_frac in 0.0f64..1.0,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let (alpha, beta) = [(0.5, 0.0), (0.8, 0.0), (1.5, 0.0), (2.0, 0.0), (2.0, 0.5), (2.5, 0.5)][case];
        let g = interval(128);
        let eig = dirichlet_eigenpair(&g, 1e-11).unwrap();
        let pair = build_barrier_pair(&g, alpha, beta, &eig).unwrap();
        let k = ((node_frac * g.len() as f64) as usize).min(g.len() - 1);
        let d = g.distances()[k];
        let (lo, hi) = (pair.sub[k], pair.sup[k]);
        let (s1, s2) = (lo + a.min(b) * (hi - lo), lo + a.max(b) * (hi - lo));
        let map = |s: f64| d.powf(-beta) * s.powf(-alpha) + pair.m * d.powf(-pair.gamma) * s;
        let scale = map(s1).abs().max(map(s2).abs());
        prop_assert!(map(s1) <= map(s2) + 1e-12 * scale, "node {k}: {} > {}", map(s1), map(s2));
    }
}

#[test]
fn power_law_recovery() {
    let g = interval(4096);
    let w = FitWindow::default_for(&g).unwrap();
    for s in [1.0 / 3.0, 0.5, 2.0 / 3.0, 1.0] {
        let u: Vec<f64> = g.distances().iter().map(|d| d.powf(s)).collect();
        let t = fit_boundary_exponent(&g, &u, &w).unwrap().exponent;
        let sigma = fit_gradient_exponent(&g, &u, &w).unwrap();
        assert!((t - s).abs() <= 0.01, "s={s}: t_fit={t}");
        assert!((sigma - (s - 1.0)).abs() <= 0.02, "s={s}: sigma_fit={sigma}");
    }
}
