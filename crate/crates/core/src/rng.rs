//! Hierarchical seeded randomness.
//!
//! Every random object in the crate (instruction tapes, clocks, putative
//! trajectories, initial counts) owns a stream derived from a root seed, a
//! purpose tag and a key (site coordinates or particle label). Streams with
//! different keys never share state, so enlarging a window or adding
//! particles leaves existing streams untouched.

use rand::{RngCore, SeedableRng};
use rand_pcg::Pcg64Mcg;

use crate::lattice::Site;

/// What a stream is used for. The discriminant is mixed into the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Initial = 1,
    Tape = 2,
    Clock = 3,
    TapeRed = 4,
    ClockRed = 5,
    Trajectory = 6,
    SleepClock = 7,
    Walk = 8,
    Replica = 9,
    Branching = 10,
    Strategy = 11,
    Instance = 12,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of a stream: root seed, purpose and a list of integer words.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub seed: u64,
    pub purpose: Purpose,
    pub words: Vec<i64>,
}

impl Lineage {
    pub fn new(seed: u64, purpose: Purpose, words: Vec<i64>) -> Self {
        Lineage {
            seed,
            purpose,
            words,
        }
    }

    pub fn site(seed: u64, purpose: Purpose, x: &Site) -> Self {
        Lineage::new(seed, purpose, x.0.clone())
    }

    /// Stream attached to particle (x, i).
    pub fn particle(seed: u64, purpose: Purpose, x: &Site, i: u32) -> Self {
        let mut words = x.0.clone();
        words.push(i as i64);
        Lineage::new(seed, purpose, words)
    }

    pub fn indexed(seed: u64, purpose: Purpose, index: &[u64]) -> Self {
        Lineage::new(seed, purpose, index.iter().map(|&w| w as i64).collect())
    }

    fn digest(&self) -> (u64, u64) {
        let mut h = splitmix64(self.seed ^ splitmix64(self.purpose as u64));
        h = splitmix64(h ^ self.words.len() as u64);
        for &w in &self.words {
            h = splitmix64(h ^ splitmix64(w as u64));
        }
        let lo = splitmix64(h ^ 0x5851_f42d_4c95_7f2d);
        (h, lo)
    }
}

/// A deterministic random stream identified by its [`Lineage`].
#[derive(Clone, Debug)]
pub struct RngStream {
    rng: Pcg64Mcg,
}

impl RngStream {
    pub fn new(lineage: Lineage) -> Self {
        let (hi, lo) = lineage.digest();
        let mut seed = [0u8; 16];
        seed[..8].copy_from_slice(&hi.to_le_bytes());
        seed[8..].copy_from_slice(&lo.to_le_bytes());
        RngStream {
            rng: Pcg64Mcg::from_seed(seed),
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Exponential variate with the given rate from one uniform draw.
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    // 1 - u lies in (0, 1]
    let u: f64 = 1.0 - rand::Rng::random::<f64>(rng);
    -u.ln() / rate
}
