//! Property suites with fixed seeds, shared by the command-line `verify`
//! command and the test suites.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SiteConfiguration;
use crate::couplings::{coupled_monotonicity_trial, coupled_runs, run_branching_dominator, BranchingError};
use crate::lattice::{BoxRegion, InitialField, InitialLaw, JumpKernel, Site};
use crate::particlewise::{
    particles_from_config, simulate_labeled, well_definedness_probe, ParticleRandomness, ShellOrder,
    Stabilization, VolumeSequence,
};
use crate::rng::{Lineage, Purpose, RngStream};
use crate::sitewise::{
    run_continuous, stabilize, InstructionTape, RandomTape, Sitewise, SitewiseError, Strategy,
    DEFAULT_TOPPLING_BUDGET,
};
use crate::stats::{replica_seed, tv_distance, Moments, Z99_ONE_SIDED};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// A small random stabilization problem.
#[derive(Clone, Debug, PartialEq)]
pub struct AbelianInstance {
    pub kernel: JumpKernel,
    pub lambda: f64,
    pub config: SiteConfiguration,
    pub seed: u64,
}

fn small_kernel<R: Rng>(dim: usize, rng: &mut R) -> JumpKernel {
    let s = |v: &[i64]| Site(v.to_vec());
    match (dim, rng.random_range(0..3)) {
        (1, 0) => JumpKernel::nearest_neighbor_1d([0.5, 0.75, 1.0][rng.random_range(0..3)])
            .unwrap()
            .with_bias(vec![1])
            .unwrap(),
        (1, 1) => JumpKernel::new(1, vec![(s(&[1]), 0.5), (s(&[-2]), 0.3), (s(&[0]), 0.2)], Some(vec![1])).unwrap(),
        (1, _) => JumpKernel::new(1, vec![(s(&[1]), 0.3), (s(&[-1]), 0.7)], Some(vec![-1])).unwrap(),
        (_, 0) => JumpKernel::simple_symmetric(2).unwrap().with_bias(vec![1, 0]).unwrap(),
        (_, 1) => JumpKernel::new(
            2,
            vec![(s(&[1, 0]), 0.4), (s(&[-1, 0]), 0.1), (s(&[0, 1]), 0.25), (s(&[0, -1]), 0.25)],
            Some(vec![2, 1]),
        )
        .unwrap(),
        _ => JumpKernel::new(2, vec![(s(&[1, 1]), 0.5), (s(&[-1, 0]), 0.25), (s(&[0, -1]), 0.25)], Some(vec![1, 1]))
            .unwrap(),
    }
}

/// Instance `index`: d ∈ {1, 2}, at most 25 sites, at most 12 particles,
/// λ ∈ {0.1, 1, 5}.
pub fn abelian_instance(seed: u64, index: u64) -> AbelianInstance {
    let mut rng = RngStream::new(Lineage::indexed(seed, Purpose::Instance, &[index]));
    let dim = 1 + (index % 2) as usize;
    let radius = if dim == 1 { rng.random_range(0..=12) } else { rng.random_range(0..=2) };
    let window = BoxRegion::new(radius, dim);
    let particles = rng.random_range(0..=12);
    let mut counts = vec![0u32; window.volume()];
    for _ in 0..particles {
        let at = rng.random_range(0..counts.len());
        counts[at] += 1;
    }
    let mut config = SiteConfiguration::from_counts(window, counts).unwrap();
    // a few lone particles start asleep
    for i in 0..window.volume() {
        if config.count(i) == 1 && rng.random_bool(0.2) {
            config.set_sleeping(i).unwrap();
        }
    }
    AbelianInstance {
        kernel: small_kernel(dim, &mut rng),
        lambda: [0.1, 1.0, 5.0][rng.random_range(0..3)],
        config,
        seed: rng.random(),
    }
}

impl AbelianInstance {
    fn tape(&self) -> RandomTape {
        RandomTape::new(&self.kernel, self.lambda, *self.config.window(), self.seed)
    }
}

fn unstable_sites<T: InstructionTape>(sys: &Sitewise<T>) -> Vec<usize> {
    (0..sys.config().counts().len())
        .filter(|&i| sys.config().is_unstable(i))
        .collect()
}

/// Two random legal sequences with the same toppling counts end in the same
/// configuration. The first sequence has random length; the second is built
/// by picking random legal sites among those still below their count.
pub fn check_local_abelian(inst: &AbelianInstance) -> Result<bool, SitewiseError> {
    let mut rng = RngStream::new(Lineage::indexed(inst.seed, Purpose::Strategy, &[1]));
    let mut a = Sitewise::new(&inst.kernel, inst.config.clone(), inst.tape())?;
    let length = rng.random_range(0..60);
    for _ in 0..length {
        let open = unstable_sites(&a);
        if open.is_empty() {
            break;
        }
        a.topple(open[rng.random_range(0..open.len())])?;
    }
    let target = a.odometer().to_vec();
    let mut b = Sitewise::new(&inst.kernel, inst.config.clone(), inst.tape())?;
    loop {
        let open: Vec<usize> = unstable_sites(&b)
            .into_iter()
            .filter(|&i| b.odometer()[i] < target[i])
            .collect();
        if open.is_empty() {
            break;
        }
        b.topple(open[rng.random_range(0..open.len())])?;
    }
    Ok(b.odometer() == target.as_slice() && b.config() == a.config())
}

/// Greedy, random-order and rolling stabilization give the same final
/// configuration and odometer.
pub fn check_global_abelian(inst: &AbelianInstance) -> Result<bool, SitewiseError> {
    let run = |s: Strategy| stabilize(&inst.kernel, inst.config.clone(), inst.tape(), s, DEFAULT_TOPPLING_BUDGET);
    let greedy = run(Strategy::GreedySweep)?;
    let mut same = true;
    for s in [Strategy::RandomOrder { seed: inst.seed }, Strategy::Rolling] {
        let other = run(s)?;
        same &= other.final_config == greedy.final_config && other.odometer == greedy.odometer;
    }
    Ok(same)
}

/// Clock-driven evolution run to absorption ends where stabilization does.
pub fn check_clock_independence(inst: &AbelianInstance) -> Result<bool, SitewiseError> {
    let greedy = stabilize(&inst.kernel, inst.config.clone(), inst.tape(), Strategy::GreedySweep, DEFAULT_TOPPLING_BUDGET)?;
    let cont = run_continuous(&inst.kernel, inst.config.clone(), inst.tape(), inst.lambda, inst.seed, f64::INFINITY)?;
    Ok(cont.absorbed && cont.final_config == greedy.final_config && cont.odometer == greedy.odometer)
}

/// Abelian property checks over `instances` random instances.
pub fn abelian_suite(instances: u64, seed: u64) -> Result<SuiteReport, SitewiseError> {
    let rows: Vec<(bool, bool, bool, bool)> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let inst = abelian_instance(seed, k);
            let report = stabilize(&inst.kernel, inst.config.clone(), inst.tape(), Strategy::GreedySweep, DEFAULT_TOPPLING_BUDGET)?;
            let conserved = report.final_config.total() == inst.config.total();
            Ok((
                check_local_abelian(&inst)?,
                check_global_abelian(&inst)?,
                conserved,
                check_clock_independence(&inst)?,
            ))
        })
        .collect::<Result<_, SitewiseError>>()?;
    let count = |f: fn(&(bool, bool, bool, bool)) -> bool| rows.iter().filter(|r| !f(r)).count();
    let mut report = SuiteReport {
        suite: "abelian".into(),
        seed,
        checks: Vec::new(),
    };
    for (name, failures) in [
        ("local-abelianness", count(|r| r.0)),
        ("global-abelianness", count(|r| r.1)),
        ("particle-conservation", count(|r| r.2)),
        ("clock-independence", count(|r| r.3)),
    ] {
        report.push(name, failures == 0, format!("{failures} of {instances} instances failed"));
    }
    Ok(report)
}

/// Ordered means of M_U from coupled trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicitySummary {
    pub replicas: u64,
    /// Means under P_[U], P_{U'}, P_{U''}.
    pub means: [f64; 3],
    pub std_errors: [f64; 3],
    /// Paired differences (U' − [U], U'' − U'): mean and standard error.
    pub differences: [(f64, f64); 2],
    /// Neither difference is significantly negative (one-sided 99%).
    pub ordered: bool,
}

/// Coupled trials with U = V_1 ⊂ U' = V_2 ⊂ U'' = V_4 in d = 1.
pub fn monotonicity_experiment(
    kernel: &JumpKernel,
    lambda: f64,
    law: &InitialLaw,
    replicas: u64,
    seed: u64,
) -> MonotonicitySummary {
    let dim = kernel.dim();
    let trials: Vec<_> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, &[r]);
            let field = InitialField::new(law.clone(), s);
            coupled_monotonicity_trial(
                kernel,
                lambda,
                &field,
                BoxRegion::new(1, dim),
                BoxRegion::new(2, dim),
                BoxRegion::new(4, dim),
                f64::INFINITY,
                s,
            )
        })
        .collect();
    let col = |f: &dyn Fn(&crate::couplings::MonotonicityTrial) -> f64| {
        Moments::from_slice(&trials.iter().map(f).collect::<Vec<_>>())
    };
    let m = [
        col(&|t| t.restricted as f64),
        col(&|t| t.middle as f64),
        col(&|t| t.outer as f64),
    ];
    let d1 = col(&|t| t.middle as f64 - t.restricted as f64);
    let d2 = col(&|t| t.outer as f64 - t.middle as f64);
    let ok = |d: &Moments| d.mean + Z99_ONE_SIDED * d.std_error() >= 0.0;
    MonotonicitySummary {
        replicas,
        means: [m[0].mean, m[1].mean, m[2].mean],
        std_errors: [m[0].std_error(), m[1].std_error(), m[2].std_error()],
        differences: [(d1.mean, d1.std_error()), (d2.mean, d2.std_error())],
        ordered: ok(&d1) && ok(&d2),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdometerSummary {
    pub instances: u64,
    /// Instances where some h_t decreased at some event time.
    pub violated_in_time: u64,
    /// Instances where the final odometers are not ordered.
    pub violated_at_absorption: u64,
    /// Smallest violating instance index, if any.
    pub first_violation: Option<u64>,
}

/// Compares the toppling-count processes (h^B_t, h^R_t) of the U' and U''
/// systems of [`coupled_runs`] at every event time and at absorption.
pub fn odometer_monotonicity(
    kernel: &JumpKernel,
    lambda: f64,
    law: &InitialLaw,
    instances: u64,
    seed: u64,
) -> OdometerSummary {
    let dim = kernel.dim();
    let outcomes: Vec<(bool, bool)> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let s = replica_seed(seed, &[k, 1]);
            let field = InitialField::new(law.clone(), s);
            let [_, middle, outer] = coupled_runs(
                kernel,
                lambda,
                &field,
                BoxRegion::new(1, dim),
                BoxRegion::new(2, dim),
                BoxRegion::new(4, dim),
                f64::INFINITY,
                s,
            );
            let dominated = |lo: &BTreeMap<Site, u64>, hi: &BTreeMap<Site, u64>| {
                lo.iter().all(|(s, &h)| hi.get(s).copied().unwrap_or(0) >= h)
            };
            let in_time = middle.first_undominated_time(&outer).is_some();
            let at_end =
                !(dominated(&middle.h_blue, &outer.h_blue) && dominated(&middle.h_red, &outer.h_red));
            (in_time, at_end)
        })
        .collect();
    OdometerSummary {
        instances,
        violated_in_time: outcomes.iter().filter(|o| o.0).count() as u64,
        violated_at_absorption: outcomes.iter().filter(|o| o.1).count() as u64,
        first_violation: outcomes.iter().position(|o| o.0 || o.1).map(|k| k as u64),
    }
}

/// Coupling checks: ordered exit means and pathwise odometer monotonicity.
pub fn coupling_suite(replicas: u64, instances: u64, seed: u64) -> SuiteReport {
    let kernel = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    let summary = monotonicity_experiment(&kernel, 1.0, &InitialLaw::constant(1), replicas, seed);
    let mut report = SuiteReport {
        suite: "coupling".into(),
        seed,
        checks: Vec::new(),
    };
    report.push(
        "exit-means-ordered",
        summary.ordered,
        format!(
            "E[M_U] restricted {:.4} <= U' {:.4} <= U'' {:.4} ({} replicas)",
            summary.means[0], summary.means[1], summary.means[2], replicas
        ),
    );
    let odo = odometer_monotonicity(&kernel, 1.0, &InitialLaw::constant(1), instances, seed);
    report.push(
        "odometer-monotone-in-red",
        odo.violated_in_time == 0 && odo.violated_at_absorption == 0,
        format!(
            "{} of {} instances violated in time, {} at absorption",
            odo.violated_in_time, instances, odo.violated_at_absorption
        ),
    );
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingSummary {
    pub lambda: f64,
    pub t: f64,
    pub runs: u64,
    pub mean_sites: f64,
    pub std_error: f64,
    pub mean_population: f64,
    /// e^{2(1+λ)t}.
    pub bound: f64,
}

pub fn branching_experiment(
    kernel: &JumpKernel,
    lambda: f64,
    t: f64,
    runs: u64,
    seed: u64,
    cap: u64,
) -> Result<BranchingSummary, BranchingError> {
    let rows: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let run = run_branching_dominator(kernel, lambda, t, cap, replica_seed(seed, &[r]))?;
            Ok((run.sites.len() as f64, run.population() as f64))
        })
        .collect::<Result<_, BranchingError>>()?;
    let sites = Moments::from_slice(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let pop = Moments::from_slice(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(BranchingSummary {
        lambda,
        t,
        runs,
        mean_sites: sites.mean,
        std_error: sites.std_error(),
        mean_population: pop.mean,
        bound: (2.0 * (1.0 + lambda) * t).exp(),
    })
}

pub fn branching_suite(runs: u64, seed: u64) -> Result<SuiteReport, BranchingError> {
    let kernel = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    let mut report = SuiteReport {
        suite: "branching".into(),
        seed,
        checks: Vec::new(),
    };
    for lambda in [0.5, 1.0] {
        for t in [0.5, 1.0] {
            let s = branching_experiment(&kernel, lambda, t, runs, seed, crate::couplings::DEFAULT_POPULATION_CAP)?;
            report.push(
                &format!("mean-sites-below-bound-lambda-{lambda}-t-{t}"),
                s.mean_sites + 3.0 * s.std_error <= s.bound,
                format!(
                    "mean |Z_t| = {:.4} +/- {:.4}, bound e^(2(1+lambda)t) = {:.4}",
                    s.mean_sites, s.std_error, s.bound
                ),
            );
        }
    }
    Ok(report)
}

type FinalKey = (Vec<u32>, Vec<bool>, Vec<(Site, u64)>);

fn final_key(c: &SiteConfiguration) -> FinalKey {
    (
        c.counts().to_vec(),
        c.sleeping().to_vec(),
        c.exited().iter().map(|(s, &n)| (s.clone(), n)).collect(),
    )
}

/// Final configurations of the restricted process on `config`'s window from
/// site-wise stabilization and from the labeled dynamics with freezing,
/// with independent samples; returns the TV distance between the laws.
pub fn law_agreement(kernel: &JumpKernel, lambda: f64, config: &SiteConfiguration, samples: u64, seed: u64) -> f64 {
    let window = *config.window();
    let site: Vec<FinalKey> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, &[0, r]);
            let rep = stabilize(kernel, config.clone(), RandomTape::new(kernel, lambda, window, s), Strategy::GreedySweep, DEFAULT_TOPPLING_BUDGET)
                .expect("finite stabilization");
            final_key(&rep.final_config)
        })
        .collect();
    let inits = particles_from_config(config);
    let labeled: Vec<FinalKey> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, &[1, r]);
            let run = simulate_labeled(&inits, &ParticleRandomness::new(kernel.clone(), lambda, s), f64::INFINITY, Some(&window));
            final_key(&run.counting_projection(window, f64::INFINITY))
        })
        .collect();
    let hist = |v: Vec<FinalKey>| {
        let mut h = BTreeMap::new();
        for k in v {
            *h.entry(k).or_insert(0u64) += 1;
        }
        h
    };
    tv_distance(&hist(site), &hist(labeled))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub samples: u64,
    pub not_stabilized: u64,
    /// Largest stabilization index seen.
    pub max_index: usize,
    pub order_pairs: u64,
    pub order_mismatches: u64,
}

/// Well-definedness probe at z = 0 in d = 1 with two exhaustion orders.
pub fn probe_experiment(
    kernel: &JumpKernel,
    lambda: f64,
    law: &InitialLaw,
    horizon: f64,
    max_n: usize,
    samples: u64,
    pairs: u64,
    seed: u64,
) -> ProbeSummary {
    let radius = (max_n / 2 + 1) as u32;
    let z = Site::origin(kernel.dim());
    let lex = VolumeSequence::spiral(kernel.dim(), &z, radius, ShellOrder::Lexicographic);
    let rev = VolumeSequence::spiral(kernel.dim(), &z, radius, ShellOrder::ReverseLexicographic);
    let rows: Vec<(Option<usize>, Option<bool>)> = (0..samples)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, &[r]);
            let field = InitialField::new(law.clone(), s);
            let randomness = ParticleRandomness::new(kernel.clone(), lambda, s);
            let a = well_definedness_probe(&field, &lex, &z, horizon, max_n, &randomness);
            let index = match a.stabilization {
                Stabilization::At(n) => Some(n),
                Stabilization::NotStabilized => None,
            };
            let pair = (r < pairs).then(|| {
                let b = well_definedness_probe(&field, &rev, &z, horizon, max_n, &randomness);
                match (a.stabilization, b.stabilization) {
                    (Stabilization::At(_), Stabilization::At(_)) => a.history == b.history,
                    _ => true,
                }
            });
            (index, pair)
        })
        .collect();
    ProbeSummary {
        samples,
        not_stabilized: rows.iter().filter(|r| r.0.is_none()).count() as u64,
        max_index: rows.iter().filter_map(|r| r.0).max().unwrap_or(0),
        order_pairs: rows.iter().filter(|r| r.1.is_some()).count() as u64,
        order_mismatches: rows.iter().filter(|r| r.1 == Some(false)).count() as u64,
    }
}

pub fn particlewise_suite(samples: u64, seed: u64) -> SuiteReport {
    let kernel = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
    let mut report = SuiteReport {
        suite: "particlewise".into(),
        seed,
        checks: Vec::new(),
    };
    let config = SiteConfiguration::from_counts(BoxRegion::new(1, 1), vec![1, 1, 1]).unwrap();
    let tv = law_agreement(&kernel, 1.0, &config, samples, seed);
    report.push("law-agreement", tv <= 0.02, format!("TV = {tv:.5} over {samples} samples each"));
    let probe = probe_experiment(&kernel, 0.5, &InitialLaw::bernoulli(0.3).unwrap(), 2.0, 200, samples / 100, samples / 1000, seed);
    report.push(
        "well-definedness",
        (probe.not_stabilized as f64) < 0.01 * probe.samples as f64 && probe.order_mismatches == 0,
        format!(
            "{} of {} not stabilized at n = 200; {} order mismatches in {} pairs",
            probe.not_stabilized, probe.samples, probe.order_mismatches, probe.order_pairs
        ),
    );
    report
}
