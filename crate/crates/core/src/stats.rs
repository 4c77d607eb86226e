//! Replica seeding and small statistical helpers.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::rng::{Lineage, Purpose, RngStream};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;
/// One-sided 99% normal quantile.
pub const Z99_ONE_SIDED: f64 = 2.326_347_874_040_841;

/// Seed of replica `index` of an experiment with root `seed`.
pub fn replica_seed(seed: u64, index: &[u64]) -> u64 {
    RngStream::new(Lineage::indexed(seed, Purpose::Replica, index)).next_u64()
}

/// Running mean and variance (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::new();
        for &x in xs {
            m.push(x);
        }
        m
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Total-variation distance between two empirical distributions.
pub fn tv_distance<K: Ord>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let pa = |k: &K| a.get(k).map_or(0.0, |&c| c as f64 / na.max(1) as f64);
    let pb = |k: &K| b.get(k).map_or(0.0, |&c| c as f64 / nb.max(1) as f64);
    let mut sum = 0.0;
    for k in a.keys() {
        sum += (pa(k) - pb(k)).abs();
    }
    for k in b.keys() {
        if !a.contains_key(k) {
            sum += pb(k);
        }
    }
    0.5 * sum
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let all = Moments::from_slice(&xs);
        let mut a = Moments::from_slice(&xs[..17]);
        a.merge(&Moments::from_slice(&xs[17..]));
        assert_eq!(a.count, all.count);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn tv_of_disjoint_supports_is_one() {
        let a = BTreeMap::from([(0, 5u64)]);
        let b = BTreeMap::from([(1, 3u64)]);
        assert_eq!(tv_distance(&a, &b), 1.0);
        assert_eq!(tv_distance(&a, &a), 0.0);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&xs, |x| x) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn replica_seeds_differ() {
        assert_ne!(replica_seed(1, &[0]), replica_seed(1, &[1]));
        assert_eq!(replica_seed(1, &[4, 2]), replica_seed(1, &[4, 2]));
    }
}
