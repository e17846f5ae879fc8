use penflow::diagnostics::{fit_log_linear, optimality_residual, DEFAULT_RATE_WINDOW};
use penflow::dynamics::run;
use penflow::experiment::{generate_example1, generate_example2};
use penflow::oracle::{solve_centralized, DEFAULT_TOL};
use proptest::prelude::*;

#[test]
fn gap_is_nonnegative_along_trajectories() {
    for cfg in [generate_example1(2).unwrap(), generate_example2(2).unwrap()] {
        let inst = cfg.build().unwrap();
        let p = &inst.problem;
        let sol = solve_centralized(p.objectives(), p.sets(), DEFAULT_TOL).unwrap();
        let rec = run(p, &inst.x0, &cfg.integrator, cfg.seed, Some(&sol.x_star())).unwrap();
        let worst = rec.gaps(sol.f_star).into_iter().fold(f64::INFINITY, f64::min);
        assert!(worst >= -1e-10, "min W = {worst}");
    }
}

#[test]
fn replicated_oracle_solution_has_small_residual() {
    for seed in 1..=5 {
        for cfg in [generate_example1(seed).unwrap(), generate_example2(seed).unwrap()] {
            let p = cfg.build().unwrap().problem;
            assert!(p.is_certified());
            let sol = solve_centralized(p.objectives(), p.sets(), DEFAULT_TOL).unwrap();
            let r = optimality_residual(&vec![sol.x_star(); p.n()], &p).unwrap();
            assert!(r <= 1e-6, "seed {seed}, n = {}: residual {r}", p.n());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rate_fit_recovers_synthetic_exponentials(
        rate in 0.01..50.0f64,
        scale in 1e-3..1e3f64,
        count in 20usize..500,
        dt in 1e-3..1e-1f64,
    ) {
        let times: Vec<f64> = (0..count).map(|k| k as f64 * dt).collect();
        let values: Vec<f64> = times.iter().map(|t| scale * (-rate * t).exp()).collect();
        // skip draws where the window underflows to zero
        prop_assume!(values[(0.6 * count as f64) as usize - 1] > 0.0);
        let fit = fit_log_linear(&times, &values, DEFAULT_RATE_WINDOW).unwrap();
        prop_assert!((fit.slope + rate).abs() <= 1e-6 * rate, "slope {} vs {}", fit.slope, -rate);
        prop_assert!(fit.r_squared >= 1.0 - 1e-9);
    }
}
