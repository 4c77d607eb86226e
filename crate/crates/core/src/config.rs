//! Site configurations: per-site particle counts with the single-sleeper
//! flag, restricted to a box, plus particles frozen outside it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::lattice::{BoxRegion, InitialLaw, Site};
use crate::rng::{Lineage, Purpose, RngStream};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("expected {expected} counts for the window, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("site {0} lies outside the window")]
    OutsideWindow(Site),
    #[error("a sleeping site must hold exactly one particle")]
    BadSleeper,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteConfiguration {
    window: BoxRegion,
    counts: Vec<u32>,
    sleeping: Vec<bool>,
    exited: BTreeMap<Site, u64>,
}

impl SiteConfiguration {
    pub fn empty(window: BoxRegion) -> Self {
        let n = window.volume();
        SiteConfiguration {
            window,
            counts: vec![0; n],
            sleeping: vec![false; n],
            exited: BTreeMap::new(),
        }
    }

    /// All-active configuration from counts listed in window index order.
    pub fn from_counts(window: BoxRegion, counts: Vec<u32>) -> Result<Self, ConfigError> {
        if counts.len() != window.volume() {
            return Err(ConfigError::WrongLength {
                expected: window.volume(),
                got: counts.len(),
            });
        }
        let n = counts.len();
        Ok(SiteConfiguration {
            window,
            counts,
            sleeping: vec![false; n],
            exited: BTreeMap::new(),
        })
    }

    pub fn window(&self) -> &BoxRegion {
        &self.window
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, index: usize) -> u32 {
        self.counts[index]
    }

    pub fn count_at(&self, x: &Site) -> Option<u32> {
        self.window.index_of(x).map(|i| self.counts[i])
    }

    pub fn is_sleeping(&self, index: usize) -> bool {
        self.sleeping[index]
    }

    pub fn sleeping(&self) -> &[bool] {
        &self.sleeping
    }

    /// Number of active particles at a window site.
    pub fn active(&self, index: usize) -> u32 {
        if self.sleeping[index] {
            0
        } else {
            self.counts[index]
        }
    }

    pub fn is_unstable(&self, index: usize) -> bool {
        self.counts[index] > 0 && !self.sleeping[index]
    }

    pub fn is_stable(&self) -> bool {
        (0..self.counts.len()).all(|i| !self.is_unstable(i))
    }

    pub fn exited(&self) -> &BTreeMap<Site, u64> {
        &self.exited
    }

    pub fn interior_total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn exited_total(&self) -> u64 {
        self.exited.values().sum()
    }

    pub fn total(&self) -> u64 {
        self.interior_total() + self.exited_total()
    }

    pub fn add_particles(&mut self, x: &Site, n: u32) -> Result<(), ConfigError> {
        let i = self
            .window
            .index_of(x)
            .ok_or_else(|| ConfigError::OutsideWindow(x.clone()))?;
        self.counts[i] += n;
        if n > 0 {
            self.sleeping[i] = false;
        }
        Ok(())
    }

    /// Marks a window site as holding one sleeping particle.
    pub fn set_sleeping(&mut self, index: usize) -> Result<(), ConfigError> {
        if self.counts[index] != 1 {
            return Err(ConfigError::BadSleeper);
        }
        self.sleeping[index] = true;
        Ok(())
    }

    pub(crate) fn counts_mut(&mut self) -> &mut [u32] {
        &mut self.counts
    }

    pub(crate) fn sleeping_mut(&mut self) -> &mut [bool] {
        &mut self.sleeping
    }

    pub(crate) fn record_exit(&mut self, x: Site) {
        *self.exited.entry(x).or_insert(0) += 1;
    }

    /// Stable state of a window site: `None` if it is unstable, otherwise
    /// `Some(true)` for a sleeper and `Some(false)` for an empty site.
    pub fn stable_symbol(&self, index: usize) -> Option<bool> {
        if self.is_unstable(index) {
            None
        } else {
            Some(self.sleeping[index])
        }
    }

    /// CSV grid: one row per window site with its coordinates, count and
    /// sleeping flag, plus an optional odometer column.
    pub fn to_csv(&self, odometer: Option<&[u64]>) -> String {
        let mut out = String::new();
        for k in 0..self.window.dim {
            let _ = write!(out, "x{k},");
        }
        out.push_str("count,sleeping");
        if odometer.is_some() {
            out.push_str(",odometer");
        }
        out.push('\n');
        for (i, site) in self.window.sites().enumerate() {
            for c in site.coords() {
                let _ = write!(out, "{c},");
            }
            let _ = write!(out, "{},{}", self.counts[i], u8::from(self.sleeping[i]));
            if let Some(h) = odometer {
                let _ = write!(out, ",{}", h[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Samples i.i.d. initial counts on `window`, all particles active. The count
/// at each site comes from the stream keyed by that site, so the same seed on
/// a larger box reproduces the counts of a smaller one.
pub fn sample_initial(law: &InitialLaw, window: BoxRegion, seed: u64) -> SiteConfiguration {
    let counts = window
        .sites()
        .map(|x| {
            let mut rng = RngStream::new(Lineage::site(seed, Purpose::Initial, &x));
            law.sample(&mut rng)
        })
        .collect();
    SiteConfiguration::from_counts(window, counts).expect("window-sized counts")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_law_fills_box() {
        let w = BoxRegion::new(2, 1);
        let c = sample_initial(&InitialLaw::constant(1), w, 99);
        assert!(c.counts().iter().all(|&n| n == 1));
        assert!(c.sleeping().iter().all(|&s| !s));
        assert_eq!(c.total(), 5);
        assert_eq!(c.count_at(&Site(vec![3])), None);
    }

    #[test]
    fn zero_bernoulli_is_empty() {
        let w = BoxRegion::new(3, 2);
        let c = sample_initial(&InitialLaw::bernoulli(0.0).unwrap(), w, 5);
        assert_eq!(c.total(), 0);
        assert!(c.is_stable());
    }

    #[test]
    fn restriction_is_consistent() {
        let law = InitialLaw::poisson(1.3).unwrap();
        let small = sample_initial(&law, BoxRegion::new(2, 2), 11);
        let big = sample_initial(&law, BoxRegion::new(5, 2), 11);
        for x in small.window().sites() {
            assert_eq!(small.count_at(&x), big.count_at(&x));
        }
    }

    #[test]
    fn empirical_entries_validated() {
        assert!(InitialLaw::empirical(&[0.0, 2.0, 1.0]).is_ok());
        assert!(InitialLaw::empirical(&[1.0, -1.0]).is_err());
        assert!(InitialLaw::empirical(&[0.5]).is_err());
        assert!(InitialLaw::empirical(&[]).is_err());
    }

    #[test]
    fn sleeper_needs_single_particle() {
        let w = BoxRegion::new(1, 1);
        let mut c = SiteConfiguration::from_counts(w, vec![2, 1, 0]).unwrap();
        assert_eq!(c.set_sleeping(0), Err(ConfigError::BadSleeper));
        assert_eq!(c.set_sleeping(2), Err(ConfigError::BadSleeper));
        c.set_sleeping(1).unwrap();
        assert!(!c.is_unstable(1));
        assert_eq!(c.active(1), 0);
    }

    #[test]
    fn csv_layout() {
        let w = BoxRegion::new(1, 1);
        let c = SiteConfiguration::from_counts(w, vec![0, 2, 1]).unwrap();
        assert_eq!(
            c.to_csv(Some(&[0, 3, 1])),
            "x0,count,sleeping,odometer\n-1,0,0,0\n0,2,0,3\n1,1,0,1\n"
        );
    }
}
