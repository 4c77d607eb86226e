//! `arw`: seeded activated random walk experiments.
//!
//! Every command is a pure function of its spec and seed. Wall-clock time
//! appears only under `metadata.wall_time_secs` in JSON output; CSV output
//! carries no timing at all.
//!
//! Exit codes: 0 pass, 1 suite failure, 2 invalid spec, 3 guard tripped.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use arw_core::config::SiteConfiguration;
use arw_core::couplings::BranchingError;
use arw_core::estimators::{
    estimate_F, estimate_F_exact_1d, exact_depth_for, exit_density_point, replica_inputs, CurvePoint,
    DensityCriterion, EstimatorError, ExitDensityCurve,
};
use arw_core::experiment::ExperimentSpec;
use arw_core::lattice::HalfSpace;
use arw_core::sitewise::{run_continuous, stabilize, SitewiseError};
use arw_core::verify::{abelian_suite, branching_suite, coupling_suite, particlewise_suite, SuiteReport};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use args::SpecArgs;

/// Depth used by the chain solve when the walk has no positive drift.
const RECURRENT_DEPTH: usize = 1000;

#[derive(Debug)]
pub enum Failure {
    Suite,
    Spec(String),
    Guard(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Suite | Failure::Io(_) => 1,
            Failure::Spec(_) => 2,
            Failure::Guard(_) => 3,
        }
    }
}

impl From<SitewiseError> for Failure {
    fn from(e: SitewiseError) -> Self {
        match e {
            SitewiseError::BudgetExceeded(_) => Failure::Guard(e.to_string()),
            _ => Failure::Spec(e.to_string()),
        }
    }
}

impl From<EstimatorError> for Failure {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Sitewise(s) => s.into(),
            _ => Failure::Spec(e.to_string()),
        }
    }
}

impl From<BranchingError> for Failure {
    fn from(e: BranchingError) -> Self {
        Failure::Guard(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "arw", version, about = "Activated random walk experiments")]
struct Cli {
    /// Worker threads for replica pools [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stabilize one sampled configuration per radius.
    ///
    /// JSON report (schema arw.stabilize/1) on stdout or --out. With --csv,
    /// writes final configurations with columns n,x0[,x1..],count,sleeping,odometer.
    /// With a horizon, runs the clock dynamics up to T instead.
    Stabilize {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exit density curve E[M_n]/|V_n| over the radii.
    ///
    /// CSV columns: n,volume,mean,stderr,replicas,strategy,seed (stdout or --csv).
    /// JSON (schema arw.sweep/1) with per-replica exits goes to --out.
    /// With a checkpoint directory, finished radii are stored as
    /// point-n<N>.json and reused by later runs of the same spec.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// Estimate F_v(λ) by Monte Carlo and, for nearest-neighbour projections,
    /// the absorbing-chain solve (JSON, schema arw.fv/1).
    Fv {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite with fixed seeds (JSON, schema arw.verify/1).
    Verify {
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Suite size: instances, replicas, runs or samples [default: acceptance size]
        #[arg(long)]
        samples: Option<u64>,
        /// Pathwise instances for the coupling suite
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write reference fixtures as <name>.json into a directory.
    Oracle {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Abelian,
    Coupling,
    Branching,
    Particlewise,
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

fn metadata(started: Instant) -> Value {
    json!({ "wall_time_secs": started.elapsed().as_secs_f64() })
}

fn require_radii(spec: &ExperimentSpec) -> Result<(), Failure> {
    if spec.radii.is_empty() {
        return Err(Failure::Spec("no radii given".into()));
    }
    Ok(())
}

fn cmd_stabilize(spec: &ExperimentSpec, out: Option<&Path>, csv: Option<&Path>) -> Result<(), Failure> {
    let started = Instant::now();
    require_radii(spec)?;
    let kernel = spec.biased_kernel().map_err(|e| Failure::Spec(e.to_string()))?;
    let mut runs = Vec::new();
    let mut table = String::new();
    for &n in &spec.radii {
        let (config, tape) = replica_inputs(spec, &kernel, n, 0);
        let initial_total = config.interior_total();
        let (final_config, odometer, mut row): (SiteConfiguration, Vec<u64>, Value) = match spec.horizon {
            Some(t) => {
                let run = run_continuous(&kernel, config, tape, spec.lambda, spec.seed, t)?;
                let row = json!({ "absorbed": run.absorbed, "events": run.events.len() });
                (run.final_config, run.odometer, row)
            }
            None => {
                let rep = stabilize(&kernel, config, tape, spec.strategy, spec.guards.toppling_budget)?;
                let row = json!({
                    "absorbed": true,
                    "left_behind": rep.left_behind,
                    "tally": rep.tally,
                });
                (rep.final_config, rep.odometer, row)
            }
        };
        let extra = row.as_object_mut().expect("object");
        extra.insert("n".into(), json!(n));
        extra.insert("volume".into(), json!(final_config.window().volume()));
        extra.insert("initial_total".into(), json!(initial_total));
        extra.insert("exit_count".into(), json!(final_config.exited_total()));
        extra.insert("final_total".into(), json!(final_config.interior_total()));
        extra.insert("topplings".into(), json!(odometer.iter().sum::<u64>()));
        runs.push(row);
        let grid = final_config.to_csv(Some(&odometer));
        let mut lines = grid.lines();
        let header = lines.next().expect("header");
        if table.is_empty() {
            table = format!("n,{header}\n");
        }
        for line in lines {
            table.push_str(&format!("{n},{line}\n"));
        }
    }
    if let Some(p) = csv.or(spec.outputs.csv.as_deref().map(Path::new)) {
        emit(Some(p), &table)?;
    }
    let report = json!({
        "schema": "arw.stabilize/1",
        "spec": spec,
        "spec_fingerprint": spec.fingerprint(),
        "runs": runs,
        "metadata": metadata(started),
    });
    emit(out.or(spec.outputs.report.as_deref().map(Path::new)), &to_json(&report))
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema: String,
    key: u64,
    point: CurvePoint,
}

/// Identifies the runs a checkpoint can stand in for: everything but the
/// radius list and the output paths.
fn checkpoint_key(spec: &ExperimentSpec) -> u64 {
    let mut s = spec.clone();
    s.radii.clear();
    s.outputs = Default::default();
    s.fingerprint()
}

fn load_checkpoint(path: &Path, key: u64, n: u32, replicas: u64) -> Option<CurvePoint> {
    let text = std::fs::read_to_string(path).ok()?;
    let c: Checkpoint = serde_json::from_str(&text).ok()?;
    (c.schema == "arw.checkpoint/1" && c.key == key && c.point.n == n && c.point.replicas == replicas)
        .then_some(c.point)
}

fn cmd_sweep(
    spec: &ExperimentSpec,
    out: Option<&Path>,
    csv: Option<&Path>,
    checkpoint_dir: Option<&Path>,
) -> Result<(), Failure> {
    let started = Instant::now();
    require_radii(spec)?;
    let dir = checkpoint_dir.or(spec.outputs.checkpoint_dir.as_deref().map(Path::new));
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| Failure::Io(format!("{}: {e}", d.display())))?;
    }
    let key = checkpoint_key(spec);
    let mut points = Vec::new();
    for (k, &n) in spec.radii.iter().enumerate() {
        let file = dir.map(|d| d.join(format!("point-n{n}.json")));
        let resumed = file.as_deref().and_then(|f| load_checkpoint(f, key, n, spec.replicas));
        let point = match resumed {
            Some(p) => {
                eprintln!("[{}/{}] n = {n}: resumed from checkpoint", k + 1, spec.radii.len());
                p
            }
            None => {
                let p = exit_density_point(spec, n, spec.replicas)?;
                eprintln!(
                    "[{}/{}] n = {n}: mean M_n/|V_n| = {:.6} +/- {:.6}",
                    k + 1,
                    spec.radii.len(),
                    p.mean,
                    p.std_error
                );
                if let Some(f) = &file {
                    let c = Checkpoint {
                        schema: "arw.checkpoint/1".into(),
                        key,
                        point: p.clone(),
                    };
                    emit(Some(f), &serde_json::to_string(&c).expect("checkpoint serializes"))?;
                }
                p
            }
        };
        points.push(point);
    }
    let curve = ExitDensityCurve {
        points,
        strategy: spec.strategy,
        seed: spec.seed,
        spec_fingerprint: spec.fingerprint(),
    };
    emit(csv.or(spec.outputs.csv.as_deref().map(Path::new)), &curve.to_csv())?;
    if let Some(p) = out.or(spec.outputs.report.as_deref().map(Path::new)) {
        let report = json!({
            "schema": "arw.sweep/1",
            "spec": spec,
            "curve": curve,
            "metadata": metadata(started),
        });
        emit(Some(p), &to_json(&report))?;
    }
    Ok(())
}

#[allow(non_snake_case)]
fn cmd_fv(spec: &ExperimentSpec, out: Option<&Path>) -> Result<(), Failure> {
    let started = Instant::now();
    let kernel = spec.biased_kernel().map_err(|e| Failure::Spec(e.to_string()))?;
    let v = spec
        .direction()
        .ok_or_else(|| Failure::Spec("F_v needs a direction: give --bias or a biased kernel".into()))?;
    let hs = HalfSpace::new(v.clone()).map_err(|e| Failure::Spec(e.to_string()))?;
    let mc = estimate_F(&kernel, spec.lambda, &hs, spec.samples, spec.guards.max_steps, spec.seed)?;
    let depth = match exact_depth_for(&kernel, spec.lambda, &hs, 1e-10) {
        0 => RECURRENT_DEPTH,
        d => d,
    };
    let chain = match estimate_F_exact_1d(&kernel, spec.lambda, &hs, depth) {
        Ok(f) => Some(f),
        Err(EstimatorError::NotNearestNeighbor) => None,
        Err(e) => return Err(e.into()),
    };
    let best = chain.clone().unwrap_or_else(|| mc.clone());
    if best.drift_warning {
        eprintln!("warning: projected drift along v is not positive; F_v vanishes");
    }
    let criterion = DensityCriterion::new(spec.law.mean(), v.clone(), best.clone());
    let report = json!({
        "schema": "arw.fv/1",
        "lambda": spec.lambda,
        "direction": v,
        "estimate": best.estimate,
        "method": best.method,
        "drift_warning": best.drift_warning,
        "monte_carlo": mc,
        "absorbing_chain": chain,
        "criterion": {
            "mu": criterion.mu,
            "margin": criterion.margin,
            "satisfied": criterion.satisfied(),
        },
        "seed": spec.seed,
        "metadata": metadata(started),
    });
    emit(out, &to_json(&report))
}

fn cmd_verify(suite: Suite, seed: u64, samples: Option<u64>, instances: u64, out: Option<&Path>) -> Result<(), Failure> {
    let started = Instant::now();
    let report: SuiteReport = match suite {
        Suite::Abelian => abelian_suite(samples.unwrap_or(500), seed)?,
        Suite::Coupling => coupling_suite(samples.unwrap_or(10_000), instances, seed),
        Suite::Branching => branching_suite(samples.unwrap_or(10_000), seed)?,
        Suite::Particlewise => particlewise_suite(samples.unwrap_or(100_000), seed),
    };
    for c in &report.checks {
        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let doc = json!({
        "schema": "arw.verify/1",
        "suite": report.suite,
        "seed": report.seed,
        "passed": report.passed(),
        "checks": report.checks,
        "metadata": metadata(started),
    });
    emit(out, &to_json(&doc))?;
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Suite)
    }
}

fn cmd_oracle(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    for f in arw_oracle::all_fixtures() {
        let path = dir.join(format!("{}.json", f.name));
        let doc = json!({
            "schema": "arw.fixture/1",
            "name": f.name,
            "description": f.description,
            "value": f.value,
        });
        emit(Some(&path), &to_json(&doc))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    match cli.command {
        Command::Stabilize { spec, out, csv } => cmd_stabilize(&spec.resolve()?, out.as_deref(), csv.as_deref()),
        Command::Sweep {
            spec,
            out,
            csv,
            checkpoint_dir,
        } => cmd_sweep(&spec.resolve()?, out.as_deref(), csv.as_deref(), checkpoint_dir.as_deref()),
        Command::Fv { spec, out } => cmd_fv(&spec.resolve()?, out.as_deref()),
        Command::Verify {
            suite,
            seed,
            samples,
            instances,
            out,
        } => cmd_verify(suite, seed, samples, instances, out.as_deref()),
        Command::Oracle { out } => cmd_oracle(&out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Suite => {}
                Failure::Spec(m) => eprintln!("invalid spec: {m}"),
                Failure::Guard(m) => eprintln!("guard tripped: {m}"),
                Failure::Io(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
