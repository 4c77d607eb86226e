//! Spec loading and flag overrides shared by the experiment commands.

use std::path::PathBuf;

use arw_core::experiment::ExperimentSpec;
use arw_core::lattice::{InitialLaw, JumpKernel};
use arw_core::sitewise::Strategy;
use clap::Args;

use crate::Failure;

/// Spec file plus overrides; every flag replaces the matching spec field.
#[derive(Args, Debug, Clone, Default)]
pub struct SpecArgs {
    /// Experiment spec (JSON)
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Kernel as JSON, `nn:P` (d = 1, P = p(+1), bias +1) or `srw:D`
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Bias direction v, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bias: Option<Vec<i64>>,
    /// Initial law: constant, bernoulli or poisson [default without a spec: poisson]
    #[arg(long)]
    pub law: Option<String>,
    /// Mean of the initial law [default without a spec: 1]
    #[arg(long)]
    pub mu: Option<f64>,
    /// Box radius; repeat for several
    #[arg(long = "radius")]
    pub radii: Vec<u32>,
    /// greedy-sweep, rolling or random-order:SEED
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Cap K on initial counts
    #[arg(long)]
    pub truncation: Option<u32>,
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub toppling_budget: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
}

fn invalid(msg: impl std::fmt::Display) -> Failure {
    Failure::Spec(msg.to_string())
}

pub fn parse_kernel(text: &str) -> Result<JumpKernel, Failure> {
    if let Some(p) = text.strip_prefix("nn:") {
        let p: f64 = p.parse().map_err(|_| invalid(format!("bad kernel {text:?}")))?;
        JumpKernel::nearest_neighbor_1d(p).map_err(invalid)
    } else if let Some(d) = text.strip_prefix("srw:") {
        let d: usize = d.parse().map_err(|_| invalid(format!("bad kernel {text:?}")))?;
        JumpKernel::simple_symmetric(d).map_err(invalid)
    } else {
        serde_json::from_str(text).map_err(invalid)
    }
}

pub fn parse_strategy(text: &str) -> Result<Strategy, Failure> {
    match text {
        "greedy-sweep" | "greedy" => Ok(Strategy::GreedySweep),
        "rolling" => Ok(Strategy::Rolling),
        _ => match text.strip_prefix("random-order:").map(str::parse) {
            Some(Ok(seed)) => Ok(Strategy::RandomOrder { seed }),
            _ => Err(invalid(format!("unknown strategy {text:?}"))),
        },
    }
}

fn build_law(kind: &str, mu: f64) -> Result<InitialLaw, Failure> {
    match kind {
        "constant" => {
            if mu < 0.0 || mu.fract() != 0.0 || mu > u32::MAX as f64 {
                return Err(invalid(format!("constant law needs an integer mean, got {mu}")));
            }
            Ok(InitialLaw::constant(mu as u32))
        }
        "bernoulli" => InitialLaw::bernoulli(mu).map_err(invalid),
        "poisson" => InitialLaw::poisson(mu).map_err(invalid),
        _ => Err(invalid(format!("unknown law {kind:?}"))),
    }
}

fn law_kind(law: &InitialLaw) -> &'static str {
    match law {
        InitialLaw::Constant { .. } => "constant",
        InitialLaw::Bernoulli { .. } => "bernoulli",
        InitialLaw::Poisson { .. } => "poisson",
        InitialLaw::Empirical { .. } => "empirical",
    }
}

impl SpecArgs {
    pub fn resolve(&self) -> Result<ExperimentSpec, Failure> {
        let mut spec = match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                ExperimentSpec::from_json(&text).map_err(invalid)?
            }
            None => {
                let kernel = self.kernel.as_deref().ok_or_else(|| invalid("--kernel or --spec is required"))?;
                let lambda = self.lambda.ok_or_else(|| invalid("--lambda or --spec is required"))?;
                let law = build_law(self.law.as_deref().unwrap_or("poisson"), self.mu.unwrap_or(1.0))?;
                ExperimentSpec::new(parse_kernel(kernel)?, lambda, law)
            }
        };
        if self.spec.is_some() {
            if let Some(k) = &self.kernel {
                spec.kernel = parse_kernel(k)?;
            }
            if let Some(l) = self.lambda {
                spec.lambda = l;
            }
            if self.law.is_some() || self.mu.is_some() {
                let kind = self.law.as_deref().unwrap_or(law_kind(&spec.law));
                spec.law = build_law(kind, self.mu.unwrap_or(spec.law.mean()))?;
            }
        }
        if let Some(v) = &self.bias {
            spec.bias = Some(v.clone());
        }
        if !self.radii.is_empty() {
            spec.radii = self.radii.clone();
        }
        if let Some(s) = &self.strategy {
            spec.strategy = parse_strategy(s)?;
        }
        if let Some(t) = self.horizon {
            spec.horizon = Some(t);
        }
        if let Some(k) = self.truncation {
            spec.truncation = Some(k);
        }
        if let Some(n) = self.samples {
            spec.samples = n;
        }
        if let Some(n) = self.replicas {
            spec.replicas = n;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(b) = self.toppling_budget {
            spec.guards.toppling_budget = b;
        }
        if let Some(m) = self.max_steps {
            spec.guards.max_steps = m;
        }
        spec.validate().map_err(invalid)?;
        Ok(spec)
    }
}
