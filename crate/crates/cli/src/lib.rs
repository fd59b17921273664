//! Command-line driver: argument parsing, experiment orchestration and
//! result persistence.

pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use statrs::function::erf::erfc;
use sglab_core::continuum::{
    continuum_pairing, continuum_trace, robin_kernel, sas_kernel, ContinuumModel, Numerics,
};
use sglab_core::couplings::{boundary_lt_experiment, fiber_check, occupation_split_experiment};
use sglab_core::ensembles::{sample, EnsembleKind, ModelParams};
use sglab_core::randomness::{map_replicas, SeedSpec, DEFAULT_SEED};
use sglab_core::semigroup::{pairing, trace_spectral, Boundary, SemigroupQuery};
use sglab_core::spectra::edge_statistics;
use sglab_core::stats::McEstimate;
use sglab_core::tridiag::{cell_averages, GridFunction};
use sglab_core::walk_fk::{mc_pairing, mc_trace};

use config::{Experiment, ExperimentConfig};
use report::{read_rows, report_convergence, write_rows, Family, ResultRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<sglab_core::Error> for CliError {
    fn from(e: sglab_core::Error) -> Self {
        match e {
            sglab_core::Error::InvalidParameter { .. } | sglab_core::Error::Unsupported(_) => Self::Config(e.to_string()),
            other => Self::Runtime(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "sglab", version, about = "Random tridiagonal semigroup experiments")]
pub struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory receiving result files and the manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one matrix and write its entries as CSV.
    Ensemble(EnsembleArgs),
    /// Exact semigroup pairings and traces from the matrix.
    Semigroup(SemigroupArgs),
    /// Random-walk Monte Carlo estimates next to the exact matrix value.
    WalkFk(WalkArgs),
    /// Continuum kernel, pairing or trace estimates.
    Continuum(ContinuumArgs),
    /// Coupling exactness and rate experiments.
    Coupling(CouplingArgs),
    /// Smallest eigenvalues over many samples.
    Spectra(SpectraArgs),
    /// Run a configured sweep.
    Sweep(SweepArgs),
    /// Summarise sweep results against the continuum.
    Report(ReportArgs),
}

fn parse_kind(s: &str) -> std::result::Result<EnsembleKind, String> {
    s.parse().map_err(|e: sglab_core::Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// hermite, spiked_hermite, laguerre, spiked_laguerre or nonsym_hermite.
    #[arg(long, value_parser = parse_kind, default_value = "hermite")]
    pub kind: EnsembleKind,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Spike parameter.
    #[arg(long, default_value_t = 0.0)]
    pub w: f64,
    /// Laguerre aspect ratio n/p.
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        let p = ModelParams::new(self.kind, self.n, self.beta).with_w(self.w).with_nu(self.nu);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryArg {
    Dirichlet,
    Robin,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Dirichlet => Boundary::Dirichlet,
            BoundaryArg::Robin => Boundary::Robin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixQuantity {
    Pairing,
    Trace,
}

#[derive(Debug, Args, Serialize)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "sample.csv")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SemigroupArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
    pub boundary: BoundaryArg,
    #[arg(long, value_enum, default_value_t = MatrixQuantity::Trace)]
    pub quantity: MatrixQuantity,
    /// Centre of the Gaussian bump `exp(-(x - c)^2)` used as f = g.
    #[arg(long, default_value_t = 1.0)]
    pub center: f64,
    /// Independent matrices to average over.
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    #[arg(long, default_value = "semigroup.json")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct WalkArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
    pub boundary: BoundaryArg,
    #[arg(long, value_enum, default_value_t = MatrixQuantity::Trace)]
    pub quantity: MatrixQuantity,
    #[arg(long, default_value_t = 1.0)]
    pub center: f64,
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 100_000)]
    pub replicas: usize,
    #[arg(long, default_value = "walk_fk.json")]
    pub out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuumQuantity {
    Kernel,
    Pairing,
    Trace,
}

#[derive(Debug, Args, Serialize)]
pub struct ContinuumArgs {
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Drop the potential and the noise.
    #[arg(long)]
    pub free: bool,
    #[arg(long, value_enum, default_value_t = ContinuumQuantity::Kernel)]
    pub quantity: ContinuumQuantity,
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    #[arg(long, default_value_t = 1.0)]
    pub y: f64,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
    pub boundary: BoundaryArg,
    #[arg(long, default_value_t = 0.0)]
    pub w: f64,
    #[arg(long, default_value_t = 1.0)]
    pub center: f64,
    /// Right end of the pairing integration range.
    #[arg(long, default_value_t = 8.0)]
    pub x_max: f64,
    #[arg(long)]
    pub ds: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: usize,
    #[arg(long, default_value = "continuum.json")]
    pub out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingExperiment {
    Fibers,
    OccupationSplit,
    BoundaryLt,
}

#[derive(Debug, Args, Serialize)]
pub struct CouplingArgs {
    #[arg(long, value_enum)]
    pub experiment: CouplingExperiment,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    pub m_list: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Largest path length for the fiber check.
    #[arg(long, default_value_t = 8)]
    pub theta_max: usize,
    #[arg(long, default_value = "rates.csv")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectraArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value = "edge.csv")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Result CSV files written by `sweep`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "report.json")]
    pub out: String,
    /// Exit with status 1 when the overall verdict is FAIL.
    #[arg(long)]
    pub strict: bool,
}

/// Collected output files, written together with a manifest.
struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<(String, Vec<u8>)>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        if name.is_empty() || name.contains(['/', '\\']) || name == "manifest.json" {
            return Err(CliError::Config(format!("`{name}` is not a valid output file name")));
        }
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn add_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::runtime)?;
        bytes.push(b'\n');
        self.add(name, bytes)
    }

    fn finish(self, command: &str, args: serde_json::Value, seed: u64, started: Instant) -> Result<()> {
        fs::create_dir_all(self.dir).map_err(|e| CliError::Runtime(format!("{}: {e}", self.dir.display())))?;
        let mut hashes = serde_json::Map::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            hashes.insert(name.clone(), json!(sha256_hex(bytes)));
        }
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "args": args,
            "outputs": hashes,
            "threads": rayon::current_num_threads(),
            "wall_time_s": started.elapsed().as_secs_f64(),
        });
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(CliError::runtime)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes).map_err(CliError::runtime)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn bump(center: f64) -> impl Fn(f64) -> f64 + Sync + Copy {
    move |x| (-(x - center) * (x - center)).exp()
}

fn bump_grid(center: f64, m_n: f64, n: usize) -> Result<GridFunction> {
    Ok(cell_averages(bump(center), m_n, n, 4)?)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::Config(format!("--{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_robin(kind: EnsembleKind, boundary: BoundaryArg, quantity: MatrixQuantity) -> Result<()> {
    if boundary == BoundaryArg::Robin {
        if quantity == MatrixQuantity::Trace {
            return Err(CliError::Config(
                "traces are not available for the robin boundary; the limiting Robin trace is only conjectured".into(),
            ));
        }
        if !kind.is_spiked() {
            return Err(CliError::Config("the robin boundary needs a spiked ensemble".into()));
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Entry point used by the binary.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(CliError::runtime)?;
    }
    let started = Instant::now();
    let mut out = Outputs::new(&cli.out_dir);
    let seed = cli.seed;
    let (name, args) = match &cli.command {
        Command::Ensemble(a) => {
            run_ensemble(a, seed, &mut out)?;
            ("ensemble", to_json(a))
        }
        Command::Semigroup(a) => {
            run_semigroup(a, seed, &mut out)?;
            ("semigroup", to_json(a))
        }
        Command::WalkFk(a) => {
            run_walk(a, seed, &mut out)?;
            ("walk-fk", to_json(a))
        }
        Command::Continuum(a) => {
            run_continuum(a, seed, &mut out)?;
            ("continuum", to_json(a))
        }
        Command::Coupling(a) => {
            run_coupling(a, seed, &mut out)?;
            ("coupling", to_json(a))
        }
        Command::Spectra(a) => {
            run_spectra(a, seed, &mut out)?;
            ("spectra", to_json(a))
        }
        Command::Sweep(a) => {
            let text = fs::read_to_string(&a.config)
                .map_err(|e| CliError::Config(format!("{}: {e}", a.config.display())))?;
            let cfg = ExperimentConfig::parse(&text)?;
            let seed = cfg.seed.unwrap_or(seed);
            let rows = run_experiment(&cfg, seed)?;
            let mut bytes = Vec::new();
            write_rows(&mut bytes, &rows)?;
            out.add(&cfg.output.file, bytes)?;
            let args = json!({ "config": to_json(&cfg) });
            out.finish("sweep", args, seed, started)?;
            eprintln!("wrote {} rows to {}", rows.len(), cli.out_dir.join(&cfg.output.file).display());
            return Ok(());
        }
        Command::Report(a) => {
            let pass = run_report(a, &mut out)?;
            let inputs: Vec<String> = a.inputs.iter().map(|p| p.display().to_string()).collect();
            out.finish("report", json!({ "inputs": inputs, "strict": a.strict }), seed, started)?;
            if a.strict && !pass {
                return Err(CliError::Runtime("convergence report: FAIL".into()));
            }
            return Ok(());
        }
    };
    out.finish(name, args, seed, started)
}

fn run_ensemble(a: &EnsembleArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    let params = a.model.params()?;
    let s = sample(&params, &mut SeedSpec::new(seed, "ensemble").stream(0))?;
    let mut bytes = Vec::new();
    s.write_csv(&mut bytes).map_err(CliError::runtime)?;
    out.add(&a.out, bytes)?;
    println!(
        "{}",
        json!({ "kind": params.kind, "n": s.n, "m_n": s.m_n, "w_n": s.w_n, "gershgorin_bound": s.gershgorin_bound() })
    );
    Ok(())
}

fn matrix_value(
    params: &ModelParams,
    q: &SemigroupQuery,
    quantity: MatrixQuantity,
    center: f64,
    st: &mut sglab_core::randomness::RngStream,
) -> Result<f64> {
    let s = sample(params, st)?;
    Ok(match quantity {
        MatrixQuantity::Trace => trace_spectral(&s, q)?,
        MatrixQuantity::Pairing => {
            let f = bump_grid(center, s.m_n, s.n)?;
            pairing(&s, q, &f, &f)?
        }
    })
}

fn run_semigroup(a: &SemigroupArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    check_positive("t", a.t)?;
    check_robin(a.model.kind, a.boundary, a.quantity)?;
    if a.replicas == 0 {
        return Err(CliError::Config("--replicas must be at least 1".into()));
    }
    let params = a.model.params()?;
    let q = SemigroupQuery::new(a.t).with_boundary(a.boundary.into());
    let spec = SeedSpec::new(seed, "semigroup");
    let values = map_replicas(&spec, 0..a.replicas as u64, |_, st| matrix_value(&params, &q, a.quantity, a.center, st))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let est = McEstimate::from_samples(&values, &spec);
    let value = json!({ "quantity": a.quantity, "t": a.t, "n": a.model.n, "mean": est.mean, "stderr": est.stderr, "replicas": a.replicas });
    println!("{value}");
    out.add_json(&a.out, &value)
}

fn run_walk(a: &WalkArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    check_positive("t", a.t)?;
    check_robin(a.model.kind, a.boundary, a.quantity)?;
    let params = a.model.params()?;
    let q = SemigroupQuery::new(a.t).with_boundary(a.boundary.into());
    let spec = SeedSpec::new(seed, "walk-fk");
    let s = sample(&params, &mut spec.child("matrix").stream(0))?;
    let (exact, est) = match a.quantity {
        MatrixQuantity::Trace => (trace_spectral(&s, &q)?, mc_trace(&s, &q, a.replicas, &spec.child("paths"))?),
        MatrixQuantity::Pairing => {
            let f = bump_grid(a.center, s.m_n, s.n)?;
            (pairing(&s, &q, &f, &f)?, mc_pairing(&s, &q, &f, &f, a.replicas, &spec.child("paths"))?)
        }
    };
    let z = if est.stderr > 0.0 { (est.mean - exact) / est.stderr } else { 0.0 };
    let value = json!({
        "quantity": a.quantity, "t": a.t, "n": a.model.n,
        "estimate": est.mean, "stderr": est.stderr, "replicas": est.n_replicas,
        "exact": exact, "z": z,
    });
    println!("{value}");
    out.add_json(&a.out, &value)
}

/// `int_{x_max}^inf exp(-(x - c)^2) dx`.
fn bump_tail(center: f64, x_max: f64) -> f64 {
    0.5 * std::f64::consts::PI.sqrt() * erfc(x_max - center)
}

const TAIL_TOLERANCE: f64 = 1e-6;

fn run_continuum(a: &ContinuumArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    check_positive("t", a.t)?;
    let model = if a.free { ContinuumModel::free() } else { ContinuumModel::airy(a.beta)? };
    let mut numerics = Numerics::default_for(a.t);
    if let Some(ds) = a.ds {
        numerics.ds = ds;
    }
    if let Some(h) = a.h {
        numerics.h = h;
    }
    let spec = SeedSpec::new(seed, "continuum");
    let boundary: Boundary = a.boundary.into();
    let (est, tail) = match a.quantity {
        ContinuumQuantity::Kernel => {
            let est = match boundary {
                Boundary::Dirichlet => sas_kernel(a.t, a.x, a.y, &model, &numerics, a.replicas, &spec)?,
                Boundary::Robin => robin_kernel(a.t, a.x, a.y, &model, a.w, &numerics, a.replicas, &spec)?,
            };
            (est, 0.0)
        }
        ContinuumQuantity::Pairing => {
            let f = bump(a.center);
            let est = continuum_pairing(a.t, &f, &f, a.x_max, &model, boundary, a.w, &numerics, a.replicas, &spec)?;
            (est, bump_tail(a.center, a.x_max))
        }
        ContinuumQuantity::Trace => {
            if boundary == Boundary::Robin {
                return Err(CliError::Config(
                    "traces are not available for the robin boundary; the limiting Robin trace is only conjectured".into(),
                ));
            }
            // Starts are importance sampled over the whole half-line.
            (continuum_trace(a.t, &model, &numerics, a.replicas, &spec)?, 0.0)
        }
    };
    let warning = (tail > TAIL_TOLERANCE).then(|| format!("mass of f beyond x_max is {tail:.2e}"));
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    let value = json!({
        "quantity": a.quantity, "t": a.t, "value": est.mean, "stderr": est.stderr,
        "replicas": est.n_replicas, "numerics": numerics, "tail_bound": tail, "warning": warning,
    });
    println!("{value}");
    out.add_json(&a.out, &value)
}

fn run_coupling(a: &CouplingArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    let spec = SeedSpec::new(seed, "coupling");
    let mut w = csv::Writer::from_writer(Vec::new());
    let summary = match a.experiment {
        CouplingExperiment::Fibers => {
            w.write_record(["theta", "images", "preimage_total", "expected_total", "mismatches", "unreached"])
                .map_err(CliError::runtime)?;
            let mut exact = true;
            for th in 0..=a.theta_max {
                let r = fiber_check(th)?;
                exact &= r.is_exact();
                w.serialize((th, r.images, r.preimage_total.to_string(), 3u128.pow(th as u32).to_string(), r.mismatches, r.unreached))
                    .map_err(CliError::runtime)?;
            }
            json!({ "experiment": a.experiment, "exact": exact })
        }
        CouplingExperiment::OccupationSplit => {
            let fit = occupation_split_experiment(&a.m_list, a.t, a.reps, &spec)?;
            w.write_record(["m_n", "statistic", "stderr"]).map_err(CliError::runtime)?;
            for p in &fit.points {
                w.serialize((p.m_n, p.error, p.stderr)).map_err(CliError::runtime)?;
            }
            json!({ "experiment": a.experiment, "slope": fit.slope, "slope_stderr": fit.slope_stderr, "intercept": fit.intercept })
        }
        CouplingExperiment::BoundaryLt => {
            let rows = boundary_lt_experiment(&a.m_list, a.t, a.reps, &spec)?;
            w.write_record(["m_n", "statistic", "stderr", "ks_p_value", "mean", "pathwise_p99", "pathwise_ratio"])
                .map_err(CliError::runtime)?;
            for r in &rows {
                w.serialize((r.m_n, r.ks_statistic, r.mean_stderr, r.ks_p_value, r.mean, r.pathwise_p99, r.pathwise_ratio))
                    .map_err(CliError::runtime)?;
            }
            json!({ "experiment": a.experiment, "rows": rows.len() })
        }
    };
    out.add(&a.out, w.into_inner().map_err(CliError::runtime)?)?;
    println!("{summary}");
    Ok(())
}

fn run_spectra(a: &SpectraArgs, seed: u64, out: &mut Outputs) -> Result<()> {
    if a.k == 0 || a.k > a.model.n + 1 {
        return Err(CliError::Config(format!("--k must lie in 1..={}", a.model.n + 1)));
    }
    let params = a.model.params()?;
    let edge = edge_statistics(&params, a.k, a.reps, &SeedSpec::new(seed, "spectra"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["replica".to_string()];
    header.extend((1..=a.k).map(|j| format!("lambda_{j}")));
    w.write_record(&header).map_err(CliError::runtime)?;
    for (i, row) in edge.values.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(CliError::runtime)?;
    }
    out.add(&a.out, w.into_inner().map_err(CliError::runtime)?)?;
    println!("{}", json!({ "kind": params.kind, "n": a.model.n, "k": a.k, "reps": a.reps }));
    Ok(())
}

/// Run a configured sweep and return its result rows.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let spec = SeedSpec::new(seed, cfg.label.clone().unwrap_or_else(|| "sweep".into()));
    let center = 1.0;
    let quantity = match cfg.experiment {
        Experiment::ConvergenceSweep => MatrixQuantity::Trace,
        Experiment::PairingSweep => MatrixQuantity::Pairing,
    };
    let qname = match quantity {
        MatrixQuantity::Trace => "trace",
        MatrixQuantity::Pairing => "pairing",
    };
    let mut rows = Vec::new();
    for (qi, q) in cfg.queries.iter().enumerate() {
        let qspec = spec.child(&format!("q{qi}"));
        for &n in &cfg.model.n_values {
            let params = cfg.params(n);
            let sub = qspec.child(&format!("matrix/n{n}"));
            let values = map_replicas(&sub, 0..cfg.replicas.matrix as u64, |_, st| matrix_value(&params, q, quantity, center, st))
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
            let est = McEstimate::from_samples(&values, &sub);
            rows.push(ResultRow {
                family: Family::Matrix,
                quantity: qname.into(),
                n: Some(n),
                t: q.t,
                value: est.mean,
                stderr: est.stderr,
                replicas: values.len(),
                reference: None,
            });
            if cfg.replicas.walk > 0 {
                let wspec = qspec.child(&format!("walk/n{n}"));
                let s = sample(&params, &mut wspec.stream(0))?;
                let (exact, mc) = match quantity {
                    MatrixQuantity::Trace => (trace_spectral(&s, q)?, mc_trace(&s, q, cfg.replicas.walk, &wspec.child("paths"))?),
                    MatrixQuantity::Pairing => {
                        let f = bump_grid(center, s.m_n, s.n)?;
                        (pairing(&s, q, &f, &f)?, mc_pairing(&s, q, &f, &f, cfg.replicas.walk, &wspec.child("paths"))?)
                    }
                };
                rows.push(ResultRow {
                    family: Family::Walk,
                    quantity: qname.into(),
                    n: Some(n),
                    t: q.t,
                    value: mc.mean,
                    stderr: mc.stderr,
                    replicas: mc.n_replicas,
                    reference: Some(exact),
                });
            }
        }
        let model = ContinuumModel::airy(cfg.model.beta)?;
        let mut numerics = Numerics::default_for(q.t);
        numerics.ds = cfg.numerics.ds.unwrap_or(numerics.ds);
        numerics.h = cfg.numerics.h.unwrap_or(numerics.h);
        let cspec = qspec.child("continuum");
        let est = match quantity {
            MatrixQuantity::Trace => continuum_trace(q.t, &model, &numerics, cfg.replicas.continuum, &cspec)?,
            MatrixQuantity::Pairing => {
                let f = bump(center);
                continuum_pairing(q.t, &f, &f, 8.0, &model, q.boundary, cfg.model.w, &numerics, cfg.replicas.continuum, &cspec)?
            }
        };
        rows.push(ResultRow {
            family: Family::Continuum,
            quantity: qname.into(),
            n: None,
            t: q.t,
            value: est.mean,
            stderr: est.stderr,
            replicas: est.n_replicas,
            reference: None,
        });
    }
    Ok(rows)
}

fn run_report(a: &ReportArgs, out: &mut Outputs) -> Result<bool> {
    let mut rows = Vec::new();
    for p in &a.inputs {
        let f = fs::File::open(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        rows.extend(read_rows(f)?);
    }
    let report = report_convergence(&rows)?;
    print!("{}", report.render());
    out.add_json(&a.out, &report)?;
    Ok(report.pass)
}
