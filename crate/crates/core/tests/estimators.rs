use arw_core::estimators::{
    estimate_F, estimate_F_exact_1d, estimate_F_grid, exact_depth_for, exit_density_sweep,
    rolling_lower_bound_report, DensityCriterion, FMethod,
};
use arw_core::experiment::ExperimentSpec;
use arw_core::lattice::{HalfSpace, InitialLaw, JumpKernel};
use arw_core::sitewise::Strategy;

fn right_half() -> HalfSpace {
    HalfSpace::new(vec![1]).unwrap()
}

#[test]
fn deterministic_walk_has_closed_form() {
    let k = JumpKernel::nearest_neighbor_1d(1.0).unwrap();
    for lambda in [0.1, 0.25, 1.0] {
        let exact = estimate_F_exact_1d(&k, lambda, &right_half(), 10).unwrap();
        assert_eq!(exact.estimate, 1.0 / (1.0 + lambda));
        assert_eq!(exact.method, FMethod::AbsorbingChain);
        let mc = estimate_F(&k, lambda, &right_half(), 10_000, 1000, 1).unwrap();
        assert_eq!(mc.estimate, 1.0 / (1.0 + lambda));
        assert_eq!(mc.truncated, 0);
    }
}

#[test]
fn chain_solve_and_monte_carlo_match_the_oracle() {
    let k = JumpKernel::nearest_neighbor_1d(0.75).unwrap();
    for lambda in [0.1, 0.2, 0.5] {
        let depth = exact_depth_for(&k, lambda, &right_half(), 1e-10);
        let exact = estimate_F_exact_1d(&k, lambda, &right_half(), depth).unwrap();
        assert!(exact.residual_bound.unwrap() < 1e-8);
        let oracle = arw_oracle::f_nearest_neighbor(0.75, lambda);
        assert!((exact.estimate - oracle).abs() < 1e-8, "{} vs {oracle}", exact.estimate);
        let mc = estimate_F(&k, lambda, &right_half(), 100_000, 1_000_000, 4).unwrap();
        assert!((mc.estimate - oracle).abs() <= 3.0 * mc.std_error);
        assert!(mc.lower <= mc.estimate && mc.estimate <= mc.upper);
    }
}

#[test]
fn recurrent_walk_warns_and_vanishes() {
    let k = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    let exact = estimate_F_exact_1d(&k, 1.0, &right_half(), 200).unwrap();
    assert!(exact.drift_warning);
    assert!(exact.estimate <= exact.residual_bound.unwrap_or(0.0));
    let mc = estimate_F(&k, 1.0, &right_half(), 2000, 2000, 4).unwrap();
    assert!(mc.drift_warning);
    assert!(mc.truncated > 0);
}

#[test]
fn grid_is_pathwise_monotone() {
    let k = JumpKernel::nearest_neighbor_1d(0.7).unwrap();
    let lambdas = [0.0, 0.05, 0.1, 0.3, 1.0, 3.0];
    let fs = estimate_F_grid(&k, &lambdas, &right_half(), 20_000, 100_000, 2).unwrap();
    assert!((fs[0].estimate - (1.0 - fs[0].truncated as f64 / fs[0].samples as f64)).abs() < 1e-12);
    for w in fs.windows(2) {
        assert!(w[1].estimate <= w[0].estimate);
    }
}

#[test]
fn criterion_margin_is_exact() {
    let k = JumpKernel::nearest_neighbor_1d(0.75).unwrap();
    let f = estimate_F_exact_1d(&k, 0.2, &right_half(), 400).unwrap();
    let c = DensityCriterion::new(0.5, vec![1], f.clone());
    assert_eq!(c.margin, c.recomputed_margin());
    assert_eq!(c.margin, 0.5 - 1.0 + f.estimate);
    assert_eq!(c.satisfied(), c.margin > 0.0);
}

fn spec(right: f64, lambda: f64, law: InitialLaw, seed: u64) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(JumpKernel::nearest_neighbor_1d(right).unwrap(), lambda, law);
    s.seed = seed;
    s
}

#[test]
fn exit_counts_do_not_depend_on_strategy() {
    let mut s = spec(0.75, 0.3, InitialLaw::poisson(0.8).unwrap(), 12);
    let radii = [2, 5, 9];
    let greedy = exit_density_sweep(&s, &radii, 60).unwrap();
    s.strategy = Strategy::Rolling;
    let rolling = exit_density_sweep(&s, &radii, 60).unwrap();
    s.strategy = Strategy::RandomOrder { seed: 99 };
    let random = exit_density_sweep(&s, &radii, 60).unwrap();
    for ((g, r), x) in greedy.points.iter().zip(&rolling.points).zip(&random.points) {
        assert_eq!(g.exits, r.exits);
        assert_eq!(g.exits, x.exits);
    }
}

#[test]
fn empty_law_gives_zero_curve() {
    let s = spec(0.75, 0.3, InitialLaw::constant(0), 1);
    let curve = exit_density_sweep(&s, &[0, 3, 8], 20).unwrap();
    assert!(curve.points.iter().all(|p| p.mean == 0.0 && p.exits.iter().all(|&e| e == 0)));
}

#[test]
fn single_site_curve_matches_exit_mean() {
    let lambda = 0.5;
    let s = spec(1.0, lambda, InitialLaw::constant(1), 3);
    let p = &exit_density_sweep(&s, &[0], 20_000).unwrap().points[0];
    let exact = arw_oracle::single_site_exit_mean(lambda);
    assert!((p.mean - exact).abs() <= 3.0 * p.std_error);
}

#[test]
fn truncation_caps_counts() {
    let mut s = spec(1.0, 0.0, InitialLaw::constant(3), 3);
    s.truncation = Some(1);
    // λ = 0: every particle leaves, so M_n = |V_n| exactly
    let p = &exit_density_sweep(&s, &[4], 5).unwrap().points[0];
    assert!(p.exits.iter().all(|&e| e == 9));
}

#[test]
fn rolling_bound_holds_per_sample() {
    let mut s = spec(1.0, 0.1, InitialLaw::constant(1), 5);
    s.strategy = Strategy::Rolling;
    let rep = rolling_lower_bound_report(&s, 16, 200).unwrap();
    assert_eq!(rep.inequality_holds, rep.replicas);
    assert!((rep.margin - (1.0 - 0.1 / 1.1)).abs() < 1e-12);
    assert!(rep.mean_exit_density >= rep.margin - 3.0 * rep.exit_density_std_error);
    assert!(rep.frequency_within_bound);
}

#[test]
fn curve_csv_layout() {
    let s = spec(0.75, 0.3, InitialLaw::bernoulli(0.5).unwrap(), 2);
    let curve = exit_density_sweep(&s, &[1, 2], 10).unwrap();
    let csv = curve.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,volume,mean,stderr,replicas,strategy,seed");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,3,"));
    assert!(lines[2].ends_with(",10,greedy-sweep,2"));
}
