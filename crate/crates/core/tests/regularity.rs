use sel_core::analysis::{h1_membership_from_levels, q_bar_theory, scan_q, solve_levels, H1Verdict};
use sel_core::pipeline::Method;
use sel_core::ProblemSpec;

#[test]
fn sharpness_dichotomy() {
    for (alpha, beta) in [(2.0, 0.0), (2.0, 1.0)] {
        let spec = ProblemSpec::new(alpha, beta, 4096);
        let levels = solve_levels(&spec, &[512, 1024, 2048, 4096], Method::Monotone).unwrap();
        let qb = q_bar_theory(alpha, beta);
        let scan = scan_q(&levels, &[1.0f64.max(0.5 * qb), 0.9 * qb, 1.1 * qb, 1.5 * qb]).unwrap();
        for s in &scan[..2] {
            // Convergent side: ratios fall towards 1 (slowly near q̄).
            assert!(s.ratios.windows(2).all(|w| w[1] < w[0]), "({alpha},{beta}) q={}: {:?}", s.q, s.ratios);
            assert!(s.ratios.iter().all(|&r| r > 1.0 - 1e-12));
        }
        for s in &scan[2..] {
            assert!(s.ratios.iter().all(|&r| r >= 1.05), "({alpha},{beta}) q={}: {:?}", s.q, s.ratios);
            assert!(s.divergent);
        }
        assert!((scan[0].ratios.last().unwrap() - 1.0).abs() < 0.02);
    }
}

#[test]
fn h1_membership_by_alpha() {
    let levels = [256, 512, 1024, 2048];
    let verdict = |alpha: f64, method| {
        let sols = solve_levels(&ProblemSpec::new(alpha, 0.0, 256), &levels, method).unwrap();
        h1_membership_from_levels(&sols).unwrap().verdict
    };
    assert_eq!(verdict(0.5, Method::Monotone), H1Verdict::Member);
    assert_eq!(verdict(2.0, Method::Monotone), H1Verdict::Member);
    assert_eq!(verdict(4.0, Method::Newton), H1Verdict::NonMember);
}
