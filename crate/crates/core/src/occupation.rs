//! Occupation time of a half-space by a discrete-time random walk.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{HalfSpace, JumpKernel, Site};

/// Target bound on the probability that a walk stopped at the escape level
/// would still have re-entered the half-space.
pub const REENTRY_TOLERANCE: f64 = 1e-6;

/// Outcome of following one walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupation {
    /// The walk passed the escape level; `ℓ` visits to the half-space.
    Count(u64),
    /// The step cap was reached first; `observed` visits so far.
    Truncated { observed: u64 },
}

impl Occupation {
    pub fn observed(&self) -> u64 {
        match *self {
            Occupation::Count(l) | Occupation::Truncated { observed: l } => l,
        }
    }

    pub fn is_truncated(&self) -> bool {
        matches!(self, Occupation::Truncated { .. })
    }
}

/// Smallest θ > 0 with E[exp(−θ S)] = 1 for the projected step S, when the
/// drift is positive and S takes negative values.
pub fn lundberg_exponent(steps: &[(i64, f64)]) -> Option<f64> {
    let drift: f64 = steps.iter().map(|&(s, p)| s as f64 * p).sum();
    if drift <= 0.0 || steps.iter().all(|&(s, _)| s >= 0) {
        return None;
    }
    let phi = |t: f64| -> f64 { steps.iter().map(|&(s, p)| p * (-t * s as f64).exp()).sum() };
    let mut hi = 1.0;
    while phi(hi) <= 1.0 {
        hi *= 2.0;
    }
    // φ is convex with φ(0) = 1 and φ'(0) < 0: the root in (0, hi] is unique
    // and φ < 1 to its left.
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Level (in units of x·v) from which the probability of ever returning to
/// {x·v ≤ 0} is below `tolerance`. `None` when the projected drift is not
/// positive, in which case no finite level works.
pub fn escape_level(steps: &[(i64, f64)], tolerance: f64) -> Option<i64> {
    let drift: f64 = steps.iter().map(|&(s, p)| s as f64 * p).sum();
    if drift <= 0.0 {
        return None;
    }
    if steps.iter().all(|&(s, _)| s >= 0) {
        return Some(1);
    }
    // optional stopping of exp(−θ L_n): P(return from level c) ≤ exp(−θ c)
    let theta = lundberg_exponent(steps)?;
    Some(((1.0 / tolerance).ln() / theta).ceil().max(1.0) as i64)
}

/// Samples ℓ_H, the number of times k ≥ 0 with X_k ∈ H, for walks with a
/// fixed kernel and half-space.
#[derive(Clone, Debug)]
pub struct OccupationSampler {
    steps: Vec<i64>,
    cumulative: Vec<f64>,
    escape: Option<i64>,
    drift: f64,
    normal: Vec<i64>,
}

impl OccupationSampler {
    pub fn new(kernel: &JumpKernel, hs: &HalfSpace) -> Self {
        let projected = kernel.projected_steps(hs.normal());
        let drift = kernel.drift(hs.normal());
        let escape = escape_level(&projected, REENTRY_TOLERANCE);
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = projected
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        *cumulative.last_mut().expect("nonempty kernel") = 1.0;
        OccupationSampler {
            steps: projected.iter().map(|&(s, _)| s).collect(),
            cumulative,
            escape,
            drift,
            normal: hs.normal().to_vec(),
        }
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// True when the projected drift is not positive: ℓ is then infinite
    /// almost surely and every sample ends truncated.
    pub fn drift_warning(&self) -> bool {
        self.drift <= 0.0
    }

    pub fn escape_level(&self) -> Option<i64> {
        self.escape
    }

    pub fn sample<R: Rng + ?Sized>(&self, start: &Site, max_steps: u64, rng: &mut R) -> Occupation {
        let mut level = start.dot(&self.normal);
        let mut visits = 0u64;
        let mut k = 0u64;
        loop {
            if let Some(esc) = self.escape {
                if level >= esc {
                    return Occupation::Count(visits);
                }
            }
            if level <= 0 {
                visits += 1;
            }
            if k == max_steps {
                return Occupation::Truncated { observed: visits };
            }
            let u: f64 = rng.random();
            let j = self.cumulative.partition_point(|&c| c <= u).min(self.steps.len() - 1);
            level += self.steps[j];
            k += 1;
        }
    }
}

/// One sample of the half-space occupation time started from `start`.
pub fn half_space_occupation<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    hs: &HalfSpace,
    start: &Site,
    max_steps: u64,
    rng: &mut R,
) -> Occupation {
    OccupationSampler::new(kernel, hs).sample(start, max_steps, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Lineage, Purpose, RngStream};

    fn rng() -> RngStream {
        RngStream::new(Lineage::indexed(3, Purpose::Walk, &[0]))
    }

    #[test]
    fn deterministic_right_walk() {
        let k = JumpKernel::nearest_neighbor_1d(1.0).unwrap();
        let hs = HalfSpace::new(vec![1]).unwrap();
        let mut r = rng();
        for _ in 0..100 {
            assert_eq!(
                half_space_occupation(&k, &hs, &Site(vec![0]), 1000, &mut r),
                Occupation::Count(1)
            );
            assert_eq!(
                half_space_occupation(&k, &hs, &Site(vec![1]), 1000, &mut r),
                Occupation::Count(0)
            );
        }
    }

    #[test]
    fn recurrent_walk_truncates() {
        let k = JumpKernel::nearest_neighbor_1d(0.5).unwrap();
        let hs = HalfSpace::new(vec![1]).unwrap();
        let s = OccupationSampler::new(&k, &hs);
        assert!(s.drift_warning());
        assert!(s.escape_level().is_none());
        let o = s.sample(&Site(vec![0]), 500, &mut rng());
        assert!(o.is_truncated());
        assert!(o.observed() >= 1);
    }

    #[test]
    fn lundberg_root_for_three_to_one_walk() {
        // E[e^{-θS}] = .75 e^{-θ} + .25 e^{θ} = 1 at e^{θ} = 3
        let t = lundberg_exponent(&[(-1, 0.25), (1, 0.75)]).unwrap();
        assert!((t - 3f64.ln()).abs() < 1e-12);
        let c = escape_level(&[(-1, 0.25), (1, 0.75)], 1e-6).unwrap();
        assert_eq!(c, 13); // 3^-13 < 1e-6 < 3^-12
    }

    #[test]
    fn truncation_at_step_cap() {
        let k = JumpKernel::nearest_neighbor_1d(1.0).unwrap();
        let hs = HalfSpace::new(vec![1]).unwrap();
        let o = half_space_occupation(&k, &hs, &Site(vec![-5]), 3, &mut rng());
        assert_eq!(o, Occupation::Truncated { observed: 4 });
    }
}
