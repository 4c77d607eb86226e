//! Estimators for F_v(λ), the exit density E[M_n]/|V_n| and the rolling
//! lower bound.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::sample_initial;
use crate::experiment::{ExperimentSpec, SpecError};
use crate::lattice::{BoxRegion, HalfSpace, JumpKernel, Site};
use crate::occupation::{Occupation, OccupationSampler};
use crate::rng::{Lineage, Purpose, RngStream};
use crate::sitewise::{stabilize, RandomTape, SitewiseError, Strategy};
use crate::stats::{replica_seed, Moments, Z95};

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("projected kernel has steps outside {{-1, 0, 1}}")]
    NotNearestNeighbor,
    #[error("half-space normal has dimension {0}, kernel has dimension {1}")]
    Dimension(usize, usize),
    #[error(transparent)]
    Sitewise(#[from] SitewiseError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FMethod {
    MonteCarlo,
    AbsorbingChain,
}

/// Estimate of F_v(λ) = E[(1+λ)^{-ℓ}].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FEstimate {
    pub method: FMethod,
    pub lambda: f64,
    /// Point estimate; truncated walks count as ℓ = ∞ (the lower bracket).
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    pub truncated: u64,
    /// Bracket from treating truncated walks as ℓ = ∞ (lower) or ℓ =
    /// observed visits (upper).
    pub lower: f64,
    pub upper: f64,
    /// Projected drift E[step]·v is not positive.
    pub drift_warning: bool,
    /// Bound on the error of the absorbing-chain solution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_bound: Option<f64>,
}

/// Occupation times of sampled walks, grouped by value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub counts: BTreeMap<u64, u64>,
    /// Observed visits of walks stopped at the step cap.
    pub truncated: BTreeMap<u64, u64>,
    pub drift_warning: bool,
}

impl OccupationHistogram {
    pub fn samples(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.truncated.values().sum::<u64>()
    }

    fn merge(mut self, other: Self) -> Self {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
        for (k, v) in other.truncated {
            *self.truncated.entry(k).or_insert(0) += v;
        }
        self.drift_warning |= other.drift_warning;
        self
    }

    /// Monte Carlo estimate of F at `lambda` from these walks.
    pub fn estimate(&self, lambda: f64) -> FEstimate {
        let n = self.samples();
        let nf = n.max(1) as f64;
        let w = |l: u64| (1.0 + lambda).powi(-(l.min(i32::MAX as u64) as i32));
        let mut first = 0.0;
        let mut second = 0.0;
        for (&l, &c) in &self.counts {
            let p = c as f64 / nf;
            first += p * w(l);
            second += p * w(l) * w(l);
        }
        let upper_extra: f64 = self
            .truncated
            .iter()
            .map(|(&l, &c)| c as f64 / nf * w(l))
            .sum();
        let var = if n > 1 {
            (second - first * first).max(0.0) * nf / (nf - 1.0)
        } else {
            0.0
        };
        FEstimate {
            method: FMethod::MonteCarlo,
            lambda,
            estimate: first,
            std_error: (var / nf).sqrt(),
            samples: n,
            truncated: self.truncated.values().sum(),
            lower: first,
            upper: (first + upper_extra).min(1.0),
            drift_warning: self.drift_warning,
            residual_bound: None,
        }
    }
}

/// Samples `samples` walks from the origin; walk k uses its own stream.
pub fn sample_occupations(
    kernel: &JumpKernel,
    hs: &HalfSpace,
    samples: u64,
    max_steps: u64,
    seed: u64,
) -> Result<OccupationHistogram, EstimatorError> {
    if hs.normal().len() != kernel.dim() {
        return Err(EstimatorError::Dimension(hs.normal().len(), kernel.dim()));
    }
    let sampler = OccupationSampler::new(kernel, hs);
    let origin = Site::origin(kernel.dim());
    const CHUNK: u64 = 4096;
    let chunks = samples.div_ceil(CHUNK);
    let hist = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut h = OccupationHistogram {
                drift_warning: sampler.drift_warning(),
                ..Default::default()
            };
            for k in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let mut rng = RngStream::new(Lineage::indexed(seed, Purpose::Walk, &[k]));
                match sampler.sample(&origin, max_steps, &mut rng) {
                    Occupation::Count(l) => *h.counts.entry(l).or_insert(0) += 1,
                    Occupation::Truncated { observed } => {
                        *h.truncated.entry(observed).or_insert(0) += 1
                    }
                }
            }
            h
        })
        .reduce(
            || OccupationHistogram {
                drift_warning: sampler.drift_warning(),
                ..Default::default()
            },
            OccupationHistogram::merge,
        );
    Ok(hist)
}

/// Monte Carlo estimate of F_v(λ).
#[allow(non_snake_case)]
pub fn estimate_F(
    kernel: &JumpKernel,
    lambda: f64,
    hs: &HalfSpace,
    samples: u64,
    max_steps: u64,
    seed: u64,
) -> Result<FEstimate, EstimatorError> {
    Ok(sample_occupations(kernel, hs, samples, max_steps, seed)?.estimate(lambda))
}

/// F_v on a grid of λ values from one shared set of walks.
#[allow(non_snake_case)]
pub fn estimate_F_grid(
    kernel: &JumpKernel,
    lambdas: &[f64],
    hs: &HalfSpace,
    samples: u64,
    max_steps: u64,
    seed: u64,
) -> Result<Vec<FEstimate>, EstimatorError> {
    let hist = sample_occupations(kernel, hs, samples, max_steps, seed)?;
    Ok(lambdas.iter().map(|&l| hist.estimate(l)).collect())
}

/// Smallest depth whose boundary error bound is below `tol`.
pub fn exact_depth_for(kernel: &JumpKernel, lambda: f64, hs: &HalfSpace, tol: f64) -> usize {
    let (down, _, up) = match nearest_neighbor_projection(kernel, hs) {
        Ok(p) => p,
        Err(_) => return 0,
    };
    let r = if up > 0.0 { down / up } else { 1.0 };
    let rate = r.max(1.0 / (1.0 + lambda));
    if rate >= 1.0 {
        return 0;
    }
    ((tol.ln() / rate.ln()).ceil() as usize).max(1)
}

fn nearest_neighbor_projection(
    kernel: &JumpKernel,
    hs: &HalfSpace,
) -> Result<(f64, f64, f64), EstimatorError> {
    if hs.normal().len() != kernel.dim() {
        return Err(EstimatorError::Dimension(hs.normal().len(), kernel.dim()));
    }
    let (mut down, mut stay, mut up) = (0.0, 0.0, 0.0);
    for (s, p) in kernel.projected_steps(hs.normal()) {
        match s {
            -1 => down += p,
            0 => stay += p,
            1 => up += p,
            _ => return Err(EstimatorError::NotNearestNeighbor),
        }
    }
    Ok((down, stay, up))
}

/// F_v(λ) from the linear system f(x) = c(x) Σ_s q(s) f(x+s) on
/// {−depth, …, depth}, with c = (1+λ)^{-1} on x ≤ 0 and 1 elsewhere,
/// f = 1 past the right end and f = 0 past the left end.
#[allow(non_snake_case)]
pub fn estimate_F_exact_1d(
    kernel: &JumpKernel,
    lambda: f64,
    hs: &HalfSpace,
    depth: usize,
) -> Result<FEstimate, EstimatorError> {
    let (down, stay, up) = nearest_neighbor_projection(kernel, hs)?;
    let w = 1.0 / (1.0 + lambda);
    let mut out = FEstimate {
        method: FMethod::AbsorbingChain,
        lambda,
        estimate: 0.0,
        std_error: 0.0,
        samples: 0,
        truncated: 0,
        lower: 0.0,
        upper: 0.0,
        drift_warning: up <= down,
        residual_bound: Some(0.0),
    };
    if up <= down {
        // ℓ = ∞ almost surely
        return Ok(out);
    }
    if down == 0.0 {
        // the walk never moves left: ℓ ~ Geometric on {x = 0} visits
        let f = w * (1.0 - stay) / (1.0 - w * stay);
        out.estimate = f;
        out.lower = f;
        out.upper = f;
        return Ok(out);
    }
    let d = depth as i64;
    let n = (2 * d + 1) as usize;
    // rows: f(x) (1 − c q0) − c q− f(x−1) − c q+ f(x+1) = boundary terms
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for (k, x) in (-d..=d).enumerate() {
        let cx = if x <= 0 { w } else { 1.0 };
        a[k] = -cx * down;
        b[k] = 1.0 - cx * stay;
        c[k] = -cx * up;
        if x == d {
            rhs[k] = cx * up;
        }
    }
    // Thomas algorithm
    for k in 1..n {
        let m = a[k] / b[k - 1];
        b[k] -= m * c[k - 1];
        rhs[k] -= m * rhs[k - 1];
    }
    let mut f = vec![0.0; n];
    f[n - 1] = rhs[n - 1] / b[n - 1];
    for k in (0..n - 1).rev() {
        f[k] = (rhs[k] - c[k] * f[k + 1]) / b[k];
    }
    let value = f[d as usize];
    let bound = (down / up).powi(d as i32 + 1).max(w.powi(d as i32 + 1));
    out.estimate = value;
    out.lower = (value - bound).max(0.0);
    out.upper = (value + bound).min(1.0);
    out.residual_bound = Some(bound);
    Ok(out)
}

/// μ against 1 − F_v(λ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityCriterion {
    pub mu: f64,
    pub lambda: f64,
    pub direction: Vec<i64>,
    pub f: FEstimate,
    /// μ − (1 − F).
    pub margin: f64,
}

impl DensityCriterion {
    pub fn new(mu: f64, direction: Vec<i64>, f: FEstimate) -> Self {
        DensityCriterion {
            mu,
            lambda: f.lambda,
            direction,
            margin: mu - 1.0 + f.estimate,
            f,
        }
    }

    pub fn recomputed_margin(&self) -> f64 {
        self.mu - 1.0 + self.f.estimate
    }

    /// μ > 1 − F_v(λ) at the point estimate.
    pub fn satisfied(&self) -> bool {
        self.margin > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: u32,
    pub volume: u64,
    /// Mean of M_n/|V_n| over replicas.
    pub mean: f64,
    pub std_error: f64,
    pub ci_half_width: f64,
    pub replicas: u64,
    /// Per-replica M_n in replica order.
    pub exits: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitDensityCurve {
    pub points: Vec<CurvePoint>,
    pub strategy: Strategy,
    pub seed: u64,
    pub spec_fingerprint: u64,
}

impl ExitDensityCurve {
    /// Columns: n, volume, mean, stderr, replicas, strategy, seed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,volume,mean,stderr,replicas,strategy,seed\n");
        let strategy = strategy_name(&self.strategy);
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{:.12e},{:.12e},{},{},{}",
                p.n, p.volume, p.mean, p.std_error, p.replicas, strategy, self.seed
            );
        }
        out
    }
}

pub fn strategy_name(s: &Strategy) -> String {
    match s {
        Strategy::GreedySweep => "greedy-sweep".into(),
        Strategy::Rolling => "rolling".into(),
        Strategy::RandomOrder { seed } => format!("random-order-{seed}"),
    }
}

/// Initial configuration and tape for replica `r` at radius `n`.
pub fn replica_inputs(
    spec: &ExperimentSpec,
    kernel: &JumpKernel,
    n: u32,
    r: u64,
) -> (crate::config::SiteConfiguration, RandomTape) {
    let window = BoxRegion::new(n, kernel.dim());
    let seed = replica_seed(spec.seed, &[n as u64, r]);
    let mut config = sample_initial(&spec.law, window, seed);
    if let Some(k) = spec.truncation {
        let capped: Vec<u32> = config.counts().iter().map(|&c| c.min(k)).collect();
        config = crate::config::SiteConfiguration::from_counts(window, capped).expect("same window");
    }
    (config, RandomTape::new(kernel, spec.lambda, window, seed))
}

/// M_n statistics at one radius from `replicas` fresh samples.
pub fn exit_density_point(
    spec: &ExperimentSpec,
    n: u32,
    replicas: u64,
) -> Result<CurvePoint, EstimatorError> {
    let kernel = spec.biased_kernel()?;
    let volume = BoxRegion::new(n, kernel.dim()).volume() as u64;
    let exits: Vec<u64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let (config, tape) = replica_inputs(spec, &kernel, n, r);
            stabilize(&kernel, config, tape, spec.strategy, spec.guards.toppling_budget)
                .map(|rep| rep.exit_count)
        })
        .collect::<Result<_, _>>()?;
    let m = Moments::from_slice(&exits.iter().map(|&e| e as f64 / volume as f64).collect::<Vec<_>>());
    Ok(CurvePoint {
        n,
        volume,
        mean: m.mean,
        std_error: m.std_error(),
        ci_half_width: Z95 * m.std_error(),
        replicas,
        exits,
    })
}

/// E[M_n]/|V_n| over the spec's radii.
pub fn exit_density_sweep(
    spec: &ExperimentSpec,
    radii: &[u32],
    replicas: u64,
) -> Result<ExitDensityCurve, EstimatorError> {
    let points = radii
        .iter()
        .map(|&n| exit_density_point(spec, n, replicas))
        .collect::<Result<_, _>>()?;
    Ok(ExitDensityCurve {
        points,
        strategy: spec.strategy,
        seed: spec.seed,
        spec_fingerprint: spec.fingerprint(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RollingBoundReport {
    pub n: u32,
    pub replicas: u64,
    pub mean_exit_density: f64,
    pub exit_density_std_error: f64,
    pub mean_left_behind_density: f64,
    /// Replicas in which M_n ≥ Σ η_0 − N_n.
    pub inequality_holds: u64,
    pub steps: u64,
    pub sleeps: u64,
    /// Pooled fraction of stage-2 steps ending with the particle asleep.
    pub sleep_frequency: f64,
    pub sleep_frequency_ci_half_width: f64,
    /// 1 − F_v(λ).
    pub quit_bound: f64,
    pub frequency_within_bound: bool,
    /// Margin μ − (1 − F_v(λ)).
    pub margin: f64,
}

/// Runs the rolling strategy on V_n and checks M_n ≥ Σ η_0 − N_n per
/// replica, comparing the stage-2 sleep frequency with 1 − F_v(λ).
pub fn rolling_lower_bound_report(
    spec: &ExperimentSpec,
    n: u32,
    replicas: u64,
) -> Result<RollingBoundReport, EstimatorError> {
    let kernel = spec.biased_kernel()?;
    let v = spec.direction().ok_or(SpecError::MissingBias)?;
    let volume = BoxRegion::new(n, kernel.dim()).volume() as f64;
    let rows: Vec<(u64, u64, u64, u64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let (config, tape) = replica_inputs(spec, &kernel, n, r);
            let total = config.interior_total();
            let rep = crate::sitewise::stabilize_rolling(&kernel, config, tape, &v, spec.guards.toppling_budget)?;
            let tally = rep.rolling.expect("rolling tally");
            Ok((total, rep.exit_count, tally.left_behind, tally.steps_with_particle))
        })
        .collect::<Result<_, SitewiseError>>()?;
    let mut exits = Moments::new();
    let mut left = Moments::new();
    let (mut holds, mut steps, mut sleeps) = (0, 0, 0);
    for &(total, m, nn, s) in &rows {
        exits.push(m as f64 / volume);
        left.push(nn as f64 / volume);
        holds += u64::from(m + nn >= total);
        steps += s;
        sleeps += nn;
    }
    let hs = HalfSpace::new(v.clone()).map_err(SpecError::from)?;
    let f = match estimate_F_exact_1d(&kernel, spec.lambda, &hs, exact_depth_for(&kernel, spec.lambda, &hs, 1e-10)) {
        Ok(f) => f,
        Err(EstimatorError::NotNearestNeighbor) => {
            estimate_F(&kernel, spec.lambda, &hs, spec.samples, spec.guards.max_steps, spec.seed)?
        }
        Err(e) => return Err(e),
    };
    let freq = sleeps as f64 / steps.max(1) as f64;
    let half = Z95 * (freq * (1.0 - freq) / steps.max(1) as f64).sqrt();
    Ok(RollingBoundReport {
        n,
        replicas,
        mean_exit_density: exits.mean,
        exit_density_std_error: exits.std_error(),
        mean_left_behind_density: left.mean,
        inequality_holds: holds,
        steps,
        sleeps,
        sleep_frequency: freq,
        sleep_frequency_ci_half_width: half,
        quit_bound: 1.0 - f.estimate,
        frequency_within_bound: freq - half <= 1.0 - f.estimate,
        margin: spec.law.mean() - 1.0 + f.estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::InitialLaw;

    fn hs() -> HalfSpace {
        HalfSpace::new(vec![1]).unwrap()
    }

    #[test]
    fn right_walk_is_exact() {
        let k = JumpKernel::nearest_neighbor_1d(1.0).unwrap();
        for lambda in [0.1, 0.25, 1.0] {
            let e = estimate_F_exact_1d(&k, lambda, &hs(), 10).unwrap();
            assert_eq!(e.estimate, 1.0 / (1.0 + lambda));
            let mc = estimate_F(&k, lambda, &hs(), 1000, 100, 1).unwrap();
            assert_eq!(mc.estimate, 1.0 / (1.0 + lambda));
            assert_eq!(mc.std_error, 0.0);
        }
    }

    #[test]
    fn symmetric_walk_gives_zero() {
        let k = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
        let e = estimate_F_exact_1d(&k, 1.0, &hs(), 50).unwrap();
        assert_eq!(e.estimate, 0.0);
        assert!(e.drift_warning);
        let mc = estimate_F(&k, 1.0, &hs(), 200, 2000, 1).unwrap();
        assert!(mc.drift_warning);
        assert_eq!(mc.truncated, 200);
        assert_eq!(mc.estimate, 0.0);
        assert!(mc.upper > 0.0);
    }

    #[test]
    fn wide_steps_rejected() {
        let k = JumpKernel::new(1, vec![(Site(vec![2]), 0.6), (Site(vec![-1]), 0.4)], Some(vec![1])).unwrap();
        assert!(matches!(
            estimate_F_exact_1d(&k, 1.0, &hs(), 10),
            Err(EstimatorError::NotNearestNeighbor)
        ));
    }

    #[test]
    fn grid_is_monotone() {
        let k = JumpKernel::nearest_neighbor_1d(0.7).unwrap();
        let lambdas = [0.05, 0.1, 0.3, 1.0, 3.0];
        let est = estimate_F_grid(&k, &lambdas, &hs(), 5000, 100_000, 4).unwrap();
        assert!(est.windows(2).all(|w| w[1].estimate <= w[0].estimate));
    }

    #[test]
    fn criterion_margin() {
        let k = JumpKernel::nearest_neighbor_1d(1.0).unwrap();
        let f = estimate_F_exact_1d(&k, 0.1, &hs(), 1).unwrap();
        let c = DensityCriterion::new(1.0, vec![1], f);
        assert_eq!(c.margin, c.recomputed_margin());
        assert!((c.margin - (1.0 - 0.1 / 1.1)).abs() < 1e-15);
        assert!(c.satisfied());
    }

    #[test]
    fn zero_density_curve() {
        let mut spec = ExperimentSpec::new(
            JumpKernel::nearest_neighbor_1d(0.5).unwrap(),
            1.0,
            InitialLaw::constant(0),
        );
        spec.seed = 3;
        let curve = exit_density_sweep(&spec, &[0, 2, 5], 10).unwrap();
        assert!(curve.points.iter().all(|p| p.mean == 0.0));
        assert!(curve.to_csv().starts_with("n,volume,mean,stderr,replicas,strategy,seed\n0,1,"));
    }
}
