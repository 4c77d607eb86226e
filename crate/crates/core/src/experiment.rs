//! Reproducible experiment descriptions.

use serde::{Deserialize, Serialize};

use crate::lattice::{InitialLaw, JumpKernel, LatticeError};
use crate::sitewise::{Strategy, DEFAULT_TOPPLING_BUDGET};

pub const SCHEMA: &str = "arw.experiment/1";

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("unsupported schema {0:?}")]
    Schema(String),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("lambda must be finite and nonnegative, got {0}")]
    Lambda(f64),
    #[error("horizon must be nonnegative, got {0}")]
    Horizon(f64),
    #[error("bias direction has dimension {0}, kernel has dimension {1}")]
    BiasDimension(usize, usize),
    #[error("rolling strategy needs a bias direction")]
    MissingBias,
    #[error("{0} must be positive")]
    Zero(&'static str),
}

/// Rule giving the reach distance L_n for window radius n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistanceRule {
    /// ⌊ln n⌋.
    Log,
    Fixed { value: u64 },
}

impl DistanceRule {
    pub fn distance(&self, n: u32) -> u64 {
        match *self {
            DistanceRule::Log => {
                if n == 0 {
                    0
                } else {
                    (n as f64).ln().floor() as u64
                }
            }
            DistanceRule::Fixed { value } => value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guards {
    pub toppling_budget: u64,
    pub population_cap: u64,
    pub max_steps: u64,
}

impl Default for Guards {
    fn default() -> Self {
        Guards {
            toppling_budget: DEFAULT_TOPPLING_BUDGET,
            population_cap: crate::couplings::DEFAULT_POPULATION_CAP,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<String>,
}

fn schema() -> String {
    SCHEMA.to_string()
}

fn default_strategy() -> Strategy {
    Strategy::GreedySweep
}

fn default_distance() -> DistanceRule {
    DistanceRule::Log
}

fn default_samples() -> u64 {
    1000
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "schema")]
    pub schema: String,
    pub kernel: JumpKernel,
    pub lambda: f64,
    /// Direction v; the kernel's bias when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<i64>>,
    pub law: InitialLaw,
    #[serde(default)]
    pub radii: Vec<u32>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Time horizon T; absent means run to absorption.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_distance")]
    pub distance_rule: DistanceRule,
    /// K: initial counts are capped at K when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<u32>,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_samples")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputPaths,
    #[serde(default)]
    pub guards: Guards,
}

impl ExperimentSpec {
    pub fn new(kernel: JumpKernel, lambda: f64, law: InitialLaw) -> Self {
        ExperimentSpec {
            schema: schema(),
            kernel,
            lambda,
            bias: None,
            law,
            radii: Vec::new(),
            strategy: default_strategy(),
            horizon: None,
            distance_rule: default_distance(),
            truncation: None,
            samples: default_samples(),
            replicas: default_samples(),
            seed: 0,
            outputs: OutputPaths::default(),
            guards: Guards::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.schema != SCHEMA {
            return Err(SpecError::Schema(self.schema.clone()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(SpecError::Lambda(self.lambda));
        }
        if let Some(t) = self.horizon {
            if t.is_nan() || t < 0.0 {
                return Err(SpecError::Horizon(t));
            }
        }
        if let Some(v) = &self.bias {
            if v.len() != self.kernel.dim() {
                return Err(SpecError::BiasDimension(v.len(), self.kernel.dim()));
            }
            if v.iter().all(|&c| c == 0) {
                return Err(LatticeError::ZeroBias.into());
            }
        }
        if self.strategy == Strategy::Rolling && self.direction().is_none() {
            return Err(SpecError::MissingBias);
        }
        if self.guards.toppling_budget == 0 {
            return Err(SpecError::Zero("toppling budget"));
        }
        Ok(())
    }

    /// Bias direction v used by the rolling strategy and F_v.
    pub fn direction(&self) -> Option<Vec<i64>> {
        self.bias
            .clone()
            .or_else(|| self.kernel.bias().map(<[i64]>::to_vec))
    }

    /// Kernel carrying the effective bias direction.
    pub fn biased_kernel(&self) -> Result<JumpKernel, SpecError> {
        match &self.bias {
            Some(v) => Ok(self.kernel.clone().with_bias(v.clone())?),
            None => Ok(self.kernel.clone()),
        }
    }

    pub fn horizon_or_infinity(&self) -> f64 {
        self.horizon.unwrap_or(f64::INFINITY)
    }

    /// Stable 64-bit fingerprint of the canonical JSON form.
    pub fn fingerprint(&self) -> u64 {
        let text = serde_json::to_string(self).expect("spec serializes");
        // FNV-1a
        text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentSpec {
        let mut s = ExperimentSpec::new(
            JumpKernel::nearest_neighbor_1d(0.75).unwrap(),
            0.2,
            InitialLaw::bernoulli(0.5).unwrap(),
        );
        s.radii = vec![4, 8];
        s.strategy = Strategy::Rolling;
        s.horizon = Some(2.5);
        s.truncation = Some(3);
        s.seed = 17;
        s
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let text = s.to_json();
        let back = ExperimentSpec::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.fingerprint(), s.fingerprint());
    }

    #[test]
    fn minimal_document() {
        let s = ExperimentSpec::from_json(
            r#"{"kernel":{"dim":1,"support":[[[1],0.75],[[-1],0.25]],"bias":[1]},
                "lambda":0.5,"law":{"kind":"constant","value":1}}"#,
        )
        .unwrap();
        assert_eq!(s.schema, SCHEMA);
        assert_eq!(s.direction(), Some(vec![1]));
        assert_eq!(s.distance_rule.distance(20), 2);
    }

    #[test]
    fn rejects_bad_documents() {
        let lazy = r#"{"kernel":{"dim":1,"support":[[[0],1.0]]},"lambda":1,"law":{"kind":"constant","value":1}}"#;
        assert!(matches!(ExperimentSpec::from_json(lazy), Err(SpecError::Json(_))));
        let mut s = sample();
        s.schema = "arw.experiment/0".into();
        assert!(matches!(s.validate(), Err(SpecError::Schema(_))));
        let mut s = sample();
        s.lambda = -1.0;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(JumpKernel::simple_symmetric(1).unwrap(), 1.0, InitialLaw::constant(1));
        s.strategy = Strategy::Rolling;
        assert!(matches!(s.validate(), Err(SpecError::MissingBias)));
    }
}
