//! Geometry of Z^d: sites, jump kernels, half-spaces, boxes and initial laws.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Deserializer, Serialize};

use crate::rng::{Lineage, Purpose, RngStream};

/// Absolute tolerance on the total mass of a jump kernel.
pub const KERNEL_MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LatticeError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("offset {0} has dimension {1}, expected {2}")]
    DimensionMismatch(Site, usize, usize),
    #[error("empty kernel support")]
    EmptySupport,
    #[error("probability {1} of offset {0} is outside (0, 1]")]
    BadProbability(Site, f64),
    #[error("kernel mass {0} differs from 1")]
    MassNotOne(f64),
    #[error("offset {0} appears twice in the kernel support")]
    DuplicateOffset(Site),
    #[error("kernel is degenerate: p(o) = 1")]
    Degenerate,
    #[error("bias vector must be nonzero")]
    ZeroBias,
    #[error("bias component {0:?} is not a rational number")]
    BadBiasComponent(String),
    #[error("initial law parameter {0} is invalid")]
    BadLawParameter(f64),
    #[error("empirical law entry {0} is not a nonnegative integer")]
    BadEmpiricalEntry(f64),
    #[error("empirical law needs at least one entry")]
    EmptyEmpirical,
}

/// A point of Z^d.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn origin(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn offset(&self, by: &Site) -> Site {
        Site(self.0.iter().zip(&by.0).map(|(a, b)| a + b).collect())
    }

    pub fn minus(&self, by: &Site) -> Site {
        Site(self.0.iter().zip(&by.0).map(|(a, b)| a - b).collect())
    }

    pub fn dot(&self, v: &[i64]) -> i64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn sup_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<i64>> for Site {
    fn from(v: Vec<i64>) -> Self {
        Site(v)
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Parses one rational bias component: an integer, a float with integral
/// value, or a `"p/q"` string. Returns (numerator, denominator > 0).
fn parse_rational(value: &serde_json::Value) -> Result<(i64, i64), LatticeError> {
    let bad = || LatticeError::BadBiasComponent(value.to_string());
    match value {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok((i, 1))
            } else {
                let f = n.as_f64().ok_or_else(bad)?;
                if f.fract() == 0.0 && f.abs() < 1e15 {
                    Ok((f as i64, 1))
                } else {
                    Err(bad())
                }
            }
        }
        serde_json::Value::String(s) => {
            let (p, q) = match s.split_once('/') {
                Some((p, q)) => (p.trim(), q.trim()),
                None => (s.trim(), "1"),
            };
            let p: i64 = p.parse().map_err(|_| bad())?;
            let q: i64 = q.parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            Ok(if q < 0 { (-p, -q) } else { (p, q) })
        }
        _ => Err(bad()),
    }
}

/// Integer direction vector obtained from rational components, scaled to the
/// primitive integer vector with the same direction.
pub fn normalize_rational_direction(parts: &[(i64, i64)]) -> Result<Vec<i64>, LatticeError> {
    let lcm = parts
        .iter()
        .fold(1i64, |acc, &(_, q)| acc / gcd(acc, q) * q);
    let scaled: Vec<i64> = parts.iter().map(|&(p, q)| p * (lcm / q)).collect();
    normalize_direction(scaled)
}

fn normalize_direction(v: Vec<i64>) -> Result<Vec<i64>, LatticeError> {
    let g = v.iter().fold(0i64, |acc, &c| gcd(acc, c));
    if g == 0 {
        return Err(LatticeError::ZeroBias);
    }
    Ok(v.into_iter().map(|c| c / g).collect())
}

/// Deserializes a direction given as a list of rationals.
fn deserialize_direction<'de, D>(de: D) -> Result<Option<Vec<i64>>, D::Error>
where
    D: Deserializer<'de>,
{
    let raw: Option<Vec<serde_json::Value>> = Option::deserialize(de)?;
    raw.map(|vals| {
        let parts = vals
            .iter()
            .map(parse_rational)
            .collect::<Result<Vec<_>, _>>()?;
        normalize_rational_direction(&parts)
    })
    .transpose()
    .map_err(serde::de::Error::custom)
}

/// Finite-support jump distribution p(·) on Z^d with an optional drift
/// direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct JumpKernel {
    dim: usize,
    support: Vec<(Site, f64)>,
    bias: Option<Vec<i64>>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawKernel {
    dim: usize,
    support: Vec<(Vec<i64>, f64)>,
    #[serde(
        default,
        deserialize_with = "deserialize_direction",
        skip_serializing_if = "Option::is_none"
    )]
    bias: Option<Vec<i64>>,
}

impl TryFrom<RawKernel> for JumpKernel {
    type Error = LatticeError;

    fn try_from(raw: RawKernel) -> Result<Self, Self::Error> {
        JumpKernel::new(
            raw.dim,
            raw.support.into_iter().map(|(s, p)| (Site(s), p)).collect(),
            raw.bias,
        )
    }
}

impl From<JumpKernel> for RawKernel {
    fn from(k: JumpKernel) -> Self {
        RawKernel {
            dim: k.dim,
            support: k.support.into_iter().map(|(s, p)| (s.0, p)).collect(),
            bias: k.bias,
        }
    }
}

impl JumpKernel {
    pub fn new(
        dim: usize,
        support: Vec<(Site, f64)>,
        bias: Option<Vec<i64>>,
    ) -> Result<Self, LatticeError> {
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        if support.is_empty() {
            return Err(LatticeError::EmptySupport);
        }
        let mut seen = BTreeMap::new();
        for (offset, p) in &support {
            if offset.dim() != dim {
                return Err(LatticeError::DimensionMismatch(
                    offset.clone(),
                    offset.dim(),
                    dim,
                ));
            }
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(LatticeError::BadProbability(offset.clone(), *p));
            }
            if seen.insert(offset.clone(), ()).is_some() {
                return Err(LatticeError::DuplicateOffset(offset.clone()));
            }
        }
        let mass: f64 = support.iter().map(|(_, p)| p).sum();
        if (mass - 1.0).abs() > KERNEL_MASS_TOLERANCE {
            return Err(LatticeError::MassNotOne(mass));
        }
        if support.len() == 1 && support[0].0.is_origin() {
            return Err(LatticeError::Degenerate);
        }
        let bias = match bias {
            Some(v) => {
                if v.len() != dim {
                    return Err(LatticeError::DimensionMismatch(Site(v.clone()), v.len(), dim));
                }
                Some(normalize_direction(v)?)
            }
            None => None,
        };
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = support
            .iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(JumpKernel {
            dim,
            support,
            bias,
            cumulative,
        })
    }

    /// One-dimensional nearest-neighbour kernel with p(+1) = `right`,
    /// biased towards +1 when `right > 1/2`.
    pub fn nearest_neighbor_1d(right: f64) -> Result<Self, LatticeError> {
        let mut support = Vec::new();
        if right > 0.0 {
            support.push((Site(vec![1]), right));
        }
        if right < 1.0 {
            support.push((Site(vec![-1]), 1.0 - right));
        }
        let bias = if right > 0.5 {
            Some(vec![1])
        } else if right < 0.5 {
            Some(vec![-1])
        } else {
            None
        };
        JumpKernel::new(1, support, bias)
    }

    /// Simple symmetric random walk on Z^d.
    pub fn simple_symmetric(dim: usize) -> Result<Self, LatticeError> {
        let p = 1.0 / (2 * dim) as f64;
        let mut support = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            for s in [1, -1] {
                let mut e = vec![0; dim];
                e[k] = s;
                support.push((Site(e), p));
            }
        }
        JumpKernel::new(dim, support, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[(Site, f64)] {
        &self.support
    }

    pub fn offset(&self, index: usize) -> &Site {
        &self.support[index].0
    }

    pub fn bias(&self) -> Option<&[i64]> {
        self.bias.as_deref()
    }

    pub fn with_bias(mut self, bias: Vec<i64>) -> Result<Self, LatticeError> {
        if bias.len() != self.dim {
            return Err(LatticeError::DimensionMismatch(Site(bias.clone()), bias.len(), self.dim));
        }
        self.bias = Some(normalize_direction(bias)?);
        Ok(self)
    }

    /// Index of the support entry selected by a uniform variate in [0, 1).
    pub fn index_for(&self, u: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.support.len() - 1)
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index_for(rng.random::<f64>())
    }

    /// Distribution of the projected step y·v, merged over equal values and
    /// sorted by step.
    pub fn projected_steps(&self, v: &[i64]) -> Vec<(i64, f64)> {
        let mut merged: BTreeMap<i64, f64> = BTreeMap::new();
        for (y, p) in &self.support {
            *merged.entry(y.dot(v)).or_insert(0.0) += p;
        }
        merged.into_iter().collect()
    }

    /// Mean projected step E[Y·v].
    pub fn drift(&self, v: &[i64]) -> f64 {
        self.support.iter().map(|(y, p)| p * y.dot(v) as f64).sum()
    }
}

/// The half-space {x : x·v ≤ 0} for an integer direction v.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfSpace {
    normal: Vec<i64>,
}

impl HalfSpace {
    pub fn new(normal: Vec<i64>) -> Result<Self, LatticeError> {
        Ok(HalfSpace {
            normal: normalize_direction(normal)?,
        })
    }

    /// Half-space from rational components (numerator, denominator).
    pub fn from_rational(parts: &[(i64, i64)]) -> Result<Self, LatticeError> {
        Ok(HalfSpace {
            normal: normalize_rational_direction(parts)?,
        })
    }

    pub fn normal(&self) -> &[i64] {
        &self.normal
    }

    pub fn level(&self, x: &Site) -> i64 {
        x.dot(&self.normal)
    }

    pub fn contains(&self, x: &Site) -> bool {
        self.level(x) <= 0
    }
}

/// The sup-norm ball V_n = {-n, …, n}^d. Sites are indexed in lexicographic
/// order with the first coordinate most significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxRegion {
    pub radius: u32,
    pub dim: usize,
}

impl BoxRegion {
    pub fn new(radius: u32, dim: usize) -> Self {
        BoxRegion { radius, dim }
    }

    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn volume(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.dim() == self.dim && x.sup_norm() <= self.radius as u64
    }

    pub fn index_of(&self, x: &Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let side = self.side() as i64;
        let r = self.radius as i64;
        Some(x.0.iter().fold(0i64, |acc, &c| acc * side + (c + r)) as usize)
    }

    pub fn site_at(&self, mut index: usize) -> Site {
        let side = self.side();
        let r = self.radius as i64;
        let mut coords = vec![0i64; self.dim];
        for k in (0..self.dim).rev() {
            coords[k] = (index % side) as i64 - r;
            index /= side;
        }
        Site(coords)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.volume()).map(move |i| self.site_at(i))
    }

    /// V_{n-by}, clamped at radius 0.
    pub fn shrink(&self, by: u32) -> BoxRegion {
        BoxRegion::new(self.radius.saturating_sub(by), self.dim)
    }

    pub fn is_subset_of(&self, other: &BoxRegion) -> bool {
        self.dim == other.dim && self.radius <= other.radius
    }
}

/// Law of the i.i.d. initial particle counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", try_from = "RawLaw")]
pub enum InitialLaw {
    Constant { value: u32 },
    Bernoulli { mean: f64 },
    Poisson { mean: f64 },
    Empirical { values: Vec<u32> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum RawLaw {
    Constant { value: u32 },
    Bernoulli { mean: f64 },
    Poisson { mean: f64 },
    Empirical { values: Vec<f64> },
}

impl TryFrom<RawLaw> for InitialLaw {
    type Error = LatticeError;

    fn try_from(raw: RawLaw) -> Result<Self, Self::Error> {
        match raw {
            RawLaw::Constant { value } => Ok(InitialLaw::Constant { value }),
            RawLaw::Bernoulli { mean } => InitialLaw::bernoulli(mean),
            RawLaw::Poisson { mean } => InitialLaw::poisson(mean),
            RawLaw::Empirical { values } => InitialLaw::empirical(&values),
        }
    }
}

impl InitialLaw {
    pub fn constant(value: u32) -> Self {
        InitialLaw::Constant { value }
    }

    pub fn bernoulli(mean: f64) -> Result<Self, LatticeError> {
        if !(0.0..=1.0).contains(&mean) {
            return Err(LatticeError::BadLawParameter(mean));
        }
        Ok(InitialLaw::Bernoulli { mean })
    }

    pub fn poisson(mean: f64) -> Result<Self, LatticeError> {
        if !(mean >= 0.0 && mean.is_finite()) {
            return Err(LatticeError::BadLawParameter(mean));
        }
        Ok(InitialLaw::Poisson { mean })
    }

    /// Uniform draw from a list of observed counts.
    pub fn empirical(values: &[f64]) -> Result<Self, LatticeError> {
        if values.is_empty() {
            return Err(LatticeError::EmptyEmpirical);
        }
        let values = values
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(LatticeError::BadEmpiricalEntry(v))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(InitialLaw::Empirical { values })
    }

    pub fn mean(&self) -> f64 {
        match self {
            InitialLaw::Constant { value } => *value as f64,
            InitialLaw::Bernoulli { mean } | InitialLaw::Poisson { mean } => *mean,
            InitialLaw::Empirical { values } => {
                values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
            }
        }
    }

    /// E[(η_0 − K)_+], the tail mass beyond a truncation level K.
    pub fn excess_mean(&self, k: u32) -> f64 {
        match self {
            InitialLaw::Constant { value } => value.saturating_sub(k) as f64,
            InitialLaw::Bernoulli { mean } => {
                if k == 0 {
                    *mean
                } else {
                    0.0
                }
            }
            InitialLaw::Poisson { mean } => {
                // E[(X-K)+] = E[X] - K + Σ_{j<K} (K-j) P(X=j)
                let mut pj = (-mean).exp();
                let mut below = 0.0;
                for j in 0..k {
                    below += (k - j) as f64 * pj;
                    pj *= mean / (j + 1) as f64;
                }
                (mean - k as f64 + below).max(0.0)
            }
            InitialLaw::Empirical { values } => {
                values
                    .iter()
                    .map(|&v| v.saturating_sub(k) as f64)
                    .sum::<f64>()
                    / values.len() as f64
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            InitialLaw::Constant { value } => *value,
            InitialLaw::Bernoulli { mean } => u32::from(rng.random::<f64>() < *mean),
            InitialLaw::Poisson { mean } => {
                if *mean == 0.0 {
                    0
                } else {
                    Poisson::new(*mean).expect("validated mean").sample(rng) as u32
                }
            }
            InitialLaw::Empirical { values } => values[rng.random_range(0..values.len())],
        }
    }
}

/// The i.i.d. initial field η_0 on all of Z^d, with the count at each site
/// drawn from its own stream so that any finite restriction is consistent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialField {
    pub law: InitialLaw,
    pub seed: u64,
}

impl InitialField {
    pub fn new(law: InitialLaw, seed: u64) -> Self {
        InitialField { law, seed }
    }

    pub fn count(&self, x: &Site) -> u32 {
        let mut rng = RngStream::new(Lineage::site(self.seed, Purpose::Initial, x));
        self.law.sample(&mut rng)
    }
}
