//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always print. Pass
//! criterion numbers as arguments to run a subset. Exits nonzero when any
//! selected criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use arw_core::config::SiteConfiguration;
use arw_core::estimators::{
    estimate_F, estimate_F_exact_1d, exact_depth_for, exit_density_point, rolling_lower_bound_report, FMethod,
};
use arw_core::experiment::ExperimentSpec;
use arw_core::lattice::{BoxRegion, HalfSpace, InitialLaw, JumpKernel};
use arw_core::sitewise::Strategy;
use arw_core::stats::Z99;
use arw_core::verify::{abelian_suite, branching_suite, coupling_suite, law_agreement, probe_experiment};

const SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn right_half() -> HalfSpace {
    HalfSpace::new(vec![1]).unwrap()
}

fn spec(right: f64, lambda: f64, law: InitialLaw) -> ExperimentSpec {
    let mut s = ExperimentSpec::new(JumpKernel::nearest_neighbor_1d(right).unwrap(), lambda, law);
    s.seed = SEED;
    s
}

fn abelianness() -> Outcome {
    let r = abelian_suite(500, SEED).unwrap();
    let failed: Vec<String> = r.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
    outcome(r.passed(), if failed.is_empty() { "500 instances, all checks exact".into() } else { failed.join("; ") })
}

fn f_closed_cases() -> Outcome {
    let k = JumpKernel::nearest_neighbor_1d(1.0).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for lambda in [0.1, 0.25, 1.0] {
        let target = 1.0 / (1.0 + lambda);
        let chain = estimate_F_exact_1d(&k, lambda, &right_half(), exact_depth_for(&k, lambda, &right_half(), 1e-12)).unwrap();
        let mc = estimate_F(&k, lambda, &right_half(), 100_000, 1_000_000, SEED).unwrap();
        ok &= chain.method == FMethod::AbsorbingChain && chain.estimate == target;
        ok &= (mc.estimate - target).abs() <= 3.0 * mc.std_error;
        parts.push(format!("λ={lambda}: chain {} mc {}±{}", chain.estimate, mc.estimate, mc.std_error));
    }
    outcome(ok, parts.join(", "))
}

fn f_oracle_agreement() -> Outcome {
    let k = JumpKernel::nearest_neighbor_1d(0.75).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for lambda in [0.1, 0.2, 0.5] {
        let chain = estimate_F_exact_1d(&k, lambda, &right_half(), exact_depth_for(&k, lambda, &right_half(), 1e-10)).unwrap();
        let residual = chain.residual_bound.unwrap_or(f64::INFINITY);
        let independent = arw_oracle::f_nearest_neighbor(0.75, lambda);
        let mc = estimate_F(&k, lambda, &right_half(), 100_000, 1_000_000, SEED).unwrap();
        ok &= residual < 1e-8 && (chain.estimate - independent).abs() < 1e-8;
        ok &= (mc.estimate - chain.estimate).abs() <= 3.0 * mc.std_error;
        parts.push(format!(
            "λ={lambda}: solve {:.8} (residual {residual:.1e}) mc {:.5}±{:.5}",
            chain.estimate, mc.estimate, mc.std_error
        ));
    }
    outcome(ok, parts.join(", "))
}

fn rolling_bound() -> Outcome {
    let mut s = spec(1.0, 0.1, InitialLaw::constant(1));
    s.strategy = Strategy::Rolling;
    let rep = rolling_lower_bound_report(&s, 32, 1000).unwrap();
    let floor = rep.margin - 3.0 * rep.exit_density_std_error;
    outcome(
        rep.inequality_holds == rep.replicas && rep.mean_exit_density >= floor,
        format!(
            "inequality in {}/{} replicas, mean M_n/|V_n| {:.5} vs margin {:.5} - 3σ = {:.5}",
            rep.inequality_holds, rep.replicas, rep.mean_exit_density, rep.margin, floor
        ),
    )
}

fn sustained_activity() -> Outcome {
    let active = spec(0.75, 0.1, InitialLaw::bernoulli(0.5).unwrap());
    let contrast = spec(0.5, 4.0, InitialLaw::bernoulli(0.1).unwrap());
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [8, 16, 32, 64] {
        let p = exit_density_point(&active, n, 10_000).unwrap();
        let lower = p.mean - Z99 * p.std_error;
        ok &= lower > 0.05;
        parts.push(format!("n={n}: {:.4} (99% low {:.4})", p.mean, lower));
    }
    let c = exit_density_point(&contrast, 64, 10_000).unwrap();
    let upper = c.mean + Z99 * c.std_error;
    ok &= upper < 0.02;
    parts.push(format!("contrast n=64: {:.5} (99% high {:.5})", c.mean, upper));
    outcome(ok, parts.join(", "))
}

fn monotonicity() -> Outcome {
    let r = coupling_suite(10_000, 100, SEED);
    let detail: Vec<String> = r
        .checks
        .iter()
        .map(|c| format!("{} {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail))
        .collect();
    outcome(r.passed(), detail.join("; "))
}

fn branching() -> Outcome {
    let r = branching_suite(10_000, SEED).unwrap();
    let detail: Vec<String> = r.checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
    outcome(r.passed(), detail.join("; "))
}

fn well_definedness() -> Outcome {
    let kernel = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    let p = probe_experiment(&kernel, 0.5, &InitialLaw::bernoulli(0.3).unwrap(), 2.0, 200, 1000, 100, SEED);
    outcome(
        (p.not_stabilized as f64) < 0.01 * p.samples as f64 && p.order_mismatches == 0 && p.order_pairs == 100,
        format!(
            "{}/{} not stabilized at n = 200 (largest index {}), {} mismatches in {} order pairs",
            p.not_stabilized, p.samples, p.max_index, p.order_mismatches, p.order_pairs
        ),
    )
}

fn law_agreement_three_sites() -> Outcome {
    let kernel = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    let config = SiteConfiguration::from_counts(BoxRegion::new(1, 1), vec![1, 1, 1]).unwrap();
    let tv = law_agreement(&kernel, 1.0, &config, 100_000, SEED);
    outcome(tv <= 0.02, format!("TV {tv:.5} at 10^5 samples each"))
}

/// Runs `arw` and returns its stdout, requiring a zero exit.
fn arw(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_arw")).args(args).output().expect("arw runs");
    assert!(out.status.success(), "arw {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

/// JSON bytes with the metadata object removed.
fn numeric_json(bytes: &[u8]) -> String {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).expect("JSON output");
    v.as_object_mut().expect("object").remove("metadata");
    serde_json::to_string(&v).unwrap()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).expect("output written")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let spec_path = p("spec.json");
    let mut s = spec(0.75, 0.2, InitialLaw::poisson(0.9).unwrap());
    s.radii = vec![4, 8, 16];
    s.replicas = 300;
    s.samples = 20_000;
    std::fs::write(&spec_path, s.to_json()).unwrap();
    let spec_arg = spec_path.to_str().unwrap();
    let mut mismatches = Vec::new();
    let mut same = |name: &str, a: Vec<u8>, b: Vec<u8>| {
        if a != b {
            mismatches.push(name.to_string());
        }
    };

    for run in ["a", "b"] {
        arw(&["stabilize", "--spec", spec_arg, "--csv", p(&format!("stab-{run}.csv")).to_str().unwrap(), "--out", p(&format!("stab-{run}.json")).to_str().unwrap()]);
    }
    same("stabilize csv", read(&p("stab-a.csv")), read(&p("stab-b.csv")));
    same("stabilize json", numeric_json(&read(&p("stab-a.json"))).into(), numeric_json(&read(&p("stab-b.json"))).into());

    let one = arw(&["--threads", "1", "sweep", "--spec", spec_arg]);
    let many = arw(&["--threads", "4", "sweep", "--spec", spec_arg]);
    same("sweep csv across thread counts", one.clone(), many);
    same("sweep csv rerun", one, arw(&["sweep", "--spec", spec_arg]));

    let fv = |t: &str| numeric_json(&arw(&["--threads", t, "fv", "--spec", spec_arg]));
    same("fv json", fv("1").into(), fv("3").into());

    let verify = |t: &str| numeric_json(&arw(&["--threads", t, "verify", "abelian", "--samples", "60", "--seed", "4"]));
    same("verify json", verify("1").into(), verify("4").into());

    for run in ["a", "b"] {
        arw(&["oracle", "--out", p(&format!("fixtures-{run}")).to_str().unwrap()]);
    }
    let mut names: Vec<_> = std::fs::read_dir(p("fixtures-a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        same("oracle fixture", read(&p("fixtures-a").join(name)), read(&p("fixtures-b").join(name)));
    }

    let detail = if mismatches.is_empty() {
        format!("stabilize, sweep, fv, verify and oracle ({} fixtures) byte-identical on rerun", names.len())
    } else {
        format!("differs: {}", mismatches.join(", "))
    };
    outcome(mismatches.is_empty(), detail)
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "abelianness", Duration::from_secs(10), abelianness),
        (2, "F closed cases", Duration::from_secs(5), f_closed_cases),
        (3, "F oracle agreement", Duration::from_secs(30), f_oracle_agreement),
        (4, "rolling lower bound", Duration::from_secs(60), rolling_bound),
        (5, "sustained activity vs contrast", Duration::from_secs(300), sustained_activity),
        (6, "monotonicity", Duration::from_secs(120), monotonicity),
        (7, "branching bound", Duration::from_secs(120), branching),
        (8, "well-definedness probe", Duration::from_secs(300), well_definedness),
        (9, "site-wise/particle-wise law agreement", Duration::from_secs(120), law_agreement_three_sites),
        (10, "determinism", Duration::MAX, determinism),
    ];
    // libtest-style flags (e.g. --nocapture) are ignored
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let o = check();
        let elapsed = started.elapsed();
        let passed = o.passed && elapsed < budget;
        failures += u32::from(!passed);
        let timing = if elapsed < budget {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            format!("{:.2}s over the {}s budget", elapsed.as_secs_f64(), budget.as_secs())
        };
        println!("criterion {id:>2} {name}: {} [{timing}] {}", if passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
