//! The `qstein` command line.
//!
//! Exit codes: 0 success, 1 runtime or identity failure, 2 usage or
//! configuration error.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use qstein_core::battery::{Battery, TestFunction};
use qstein_core::estimators::{self, Baseline, GradEstimate, Reweighted, SteinVariant, ValueShape};
use qstein_core::linalg::LowerTriangular;
use qstein_core::oracle::{Quadrature, QuadratureSpec, MAX_DIM};
use qstein_core::qgauss::QGaussianRecord;
use qstein_core::sampler::{sample, Source};
use qstein_core::{Error, LogDensity, QGaussian};
use serde::Serialize;
use serde_json::json;

use crate::exec::Threaded;
use crate::experiments::{run_experiments, ExperimentConfig, LogRegConfig, RadiusConfig, TrainingConfig};
use crate::io::{self, real};
use crate::verify::verify_law;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration: exit 2.
    Usage(String),
    /// Failure while running: exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parameter errors are configuration errors; everything else is a runtime failure.
fn from_core(e: Error) -> CliError {
    match e {
        Error::DimensionMismatch { .. }
        | Error::EmptyDimension
        | Error::NonPositiveDiagonal { .. }
        | Error::NotLowerTriangular { .. }
        | Error::NotPositiveDefinite
        | Error::HeavyTailedRegime { .. }
        | Error::QTooCloseToOne { .. }
        | Error::OracleDimension { .. }
        | Error::EmptySample
        | Error::GaussianLimit { .. }
        | Error::MissingDerivative { .. } => usage(e),
        _ => runtime(e),
    }
}

#[derive(Parser, Debug)]
#[command(name = "qstein", version, about = "Bounded-support q-Gaussian sampling, Stein-identity checks and gradient estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a batch from a q-Gaussian or its escort law and write it as CSV or JSON.
    Sample(SampleArgs),
    /// Evaluate the log density at given points.
    Density(DensityArgs),
    /// Check the Stein, Bonnet and Price identities against the quadrature oracle (D ≤ 2).
    Verify(VerifyArgs),
    /// Run one gradient estimator on a built-in test function and write JSON.
    Estimate(EstimateArgs),
    /// Run the experiment suite from a JSON config or a preset.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Clone)]
struct DistArgs {
    /// Dimension D (implied by --mu or --dist when given).
    #[arg(long = "d")]
    d: Option<usize>,
    /// Entropic index q ≤ 1; q = 1 is the Gaussian limit.
    #[arg(long, allow_negative_numbers = true)]
    q: Option<f64>,
    /// Location μ: comma-separated reals or a path to a JSON array. Defaults to 0.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Scale factor L with Σ = LLᵀ: "identity" or a path to JSON rows (lower triangular).
    #[arg(long, default_value = "identity")]
    sigma_factor: String,
    /// Distribution file {"mu": [...], "sigma_factor_rows": [[...]], "q": ...}; replaces the flags above.
    #[arg(long)]
    dist: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    dist: DistArgs,
    /// Number of draws.
    #[arg(long = "s", default_value_t = 1000)]
    samples: usize,
    /// Seed of the draw stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw from the escort law instead of the base law.
    #[arg(long)]
    escort: bool,
    /// Output file; standard output when absent. CSV output also gets a `<out>.config.json` config echo.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    dist: DistArgs,
    /// CSV file with columns x_1..x_D (other columns ignored).
    #[arg(long)]
    points: Option<PathBuf>,
    /// A single point as comma-separated reals; repeatable.
    #[arg(long = "x", allow_hyphen_values = true)]
    x: Vec<String>,
    /// Evaluate the escort density instead.
    #[arg(long)]
    escort: bool,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    dist: DistArgs,
    /// Monte Carlo draws per estimator.
    #[arg(long = "s", default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gauss–Legendre nodes in 1-D.
    #[arg(long, default_value_t = 2048)]
    nodes_1d: usize,
    /// Radial Gauss–Legendre nodes in 2-D.
    #[arg(long, default_value_t = 512)]
    radial_nodes: usize,
    /// Angular trapezoid nodes in 2-D.
    #[arg(long, default_value_t = 256)]
    angular_nodes: usize,
    /// Also write the full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum EstimatorName {
    /// E_p[(x − μ) f(x)] from base draws.
    SteinLhs,
    /// Cov·E_{p★}[∇f] from escort draws.
    SteinRhsEscort,
    /// Cov·E_p[(R² − s)∇f]/M from base draws.
    SteinRhsPOnly,
    /// ∇_μ E[f] = E_p[∇f].
    QBonnet,
    /// ∇_Σ E[f] = (E_p[s]/D)·½·E_{p★}[∇²f].
    QPrice,
    /// Reweighted gradient estimator ĝ.
    PropGrad,
    /// Reweighted Hessian estimator Ĥ.
    PropHess,
    /// Gaussian E[∇f] under N(μ, Σ).
    GaussianBonnet,
    /// Gaussian ½E[∇²f] under N(μ, Σ).
    GaussianPrice,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, value_enum)]
    estimator: EstimatorName,
    /// Test function: poly2, poly4, sine, tanh_sum or logistic_loss.
    #[arg(long)]
    function: String,
    #[arg(long = "s", default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constant of the (uncertified) operator-norm diagnostic for prop_hess.
    #[arg(long, default_value_t = estimators::DEFAULT_C3)]
    c3: f64,
    /// Output JSON; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Gradient-variance study on D ∈ {10, 50, 200}, q ∈ {0, 0.5, 0.8, 1}, S = 8, 50 repetitions.
    Logreg,
    /// R(q, D) for D = 1..200.
    Radius,
    /// Optimizer comparison on two moons over 5 seeds.
    Toy,
    /// All three.
    All,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON experiment config with optional sections "logreg", "radius", "training".
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Report JSON; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat CSV view of the report.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Record wall-clock timings (makes the output run-dependent).
    #[arg(long)]
    include_timings: bool,
}

fn parse_reals(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("not a real number: {t:?}"))))
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

impl DistArgs {
    fn resolve(&self) -> CliResult<QGaussian> {
        if let Some(path) = &self.dist {
            let rec: QGaussianRecord = read_json(path)?;
            let law = QGaussian::try_from(rec).map_err(from_core)?;
            if let Some(d) = self.d {
                if d != law.dim() {
                    return Err(usage(format!("--d {d} disagrees with {} (D = {})", path.display(), law.dim())));
                }
            }
            return Ok(law);
        }
        let q = self.q.ok_or_else(|| usage("--q is required (or pass --dist)"))?;
        let mu = match &self.mu {
            Some(m) if Path::new(m).is_file() => read_json::<Vec<f64>>(Path::new(m))?,
            Some(m) => parse_reals(m)?,
            None => vec![0.0; self.d.ok_or_else(|| usage("--d is required when --mu is absent"))?],
        };
        if let Some(d) = self.d {
            if d != mu.len() {
                return Err(usage(format!("--d {d} disagrees with --mu of length {}", mu.len())));
            }
        }
        let factor = if self.sigma_factor == "identity" {
            LowerTriangular::identity(mu.len())
        } else {
            let rows: Vec<Vec<f64>> = read_json(Path::new(&self.sigma_factor))?;
            LowerTriangular::from_rows(&rows).map_err(from_core)?
        };
        QGaussian::new(mu, factor, q).map_err(from_core)
    }
}

fn executor() -> CliResult<Threaded> {
    Threaded::from_env().map_err(usage)
}

/// Writes `text` to `out`, or to standard output.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(runtime),
    }
}

fn dist_echo(law: &QGaussian) -> serde_json::Value {
    serde_json::to_value(QGaussianRecord::from(law)).unwrap_or_default()
}

fn cmd_sample(a: &SampleArgs) -> CliResult<()> {
    let law = a.dist.resolve()?;
    if a.samples == 0 {
        return Err(usage("--s must be at least 1"));
    }
    let source = if a.escort { Source::Escort } else { Source::Base };
    let batch = sample(&law, a.samples, a.seed, source, &executor()?).map_err(from_core)?;
    let echo = json!({
        "command": "sample",
        "distribution": dist_echo(&law),
        "S": a.samples,
        "seed": a.seed,
        "source": source,
        "sampled_source": batch.source(),
        "note": batch.note(),
        "format": a.format,
    });
    match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            io::write_batch_csv(&batch, &mut buf).map_err(runtime)?;
            emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))?;
            if let Some(out) = &a.out {
                io::write_json(&io::sidecar_path(out), &echo).map_err(runtime)?;
            }
        }
        Format::Json => {
            let points: Vec<&[f64]> = batch.rows().collect();
            let doc = json!({ "config": echo, "points": points, "s": batch.s_values() });
            emit(a.out.as_deref(), &io::to_json(&doc).map_err(runtime)?)?;
        }
    }
    Ok(())
}

fn cmd_density(a: &DensityArgs) -> CliResult<()> {
    let law = a.dist.resolve()?;
    let d = law.dim();
    let mut points = Vec::new();
    if let Some(p) = &a.points {
        let (pd, pts) = io::read_points_csv(p).map_err(usage)?;
        if pd != d {
            return Err(usage(format!("{} has D = {pd}, distribution has D = {d}", p.display())));
        }
        points.extend(pts);
    }
    for x in &a.x {
        let v = parse_reals(x)?;
        if v.len() != d {
            return Err(usage(format!("--x {x:?} has {} entries, expected {d}", v.len())));
        }
        points.extend(v);
    }
    if points.is_empty() {
        return Err(usage("no points given (use --points or --x)"));
    }
    let escort = law.escort(1);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.extend(["log_density".into(), "density".into()]);
    w.write_record(&header).map_err(runtime)?;
    for x in points.chunks_exact(d) {
        let ld = if a.escort { escort.log_density(x) } else { law.log_density(x) };
        let (l, p) = match ld {
            LogDensity::Inside(v) => (v.to_string(), v.exp().to_string()),
            LogDensity::OutsideSupport => (real::NEG_INF.to_string(), "0".to_string()),
        };
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.extend([l, p]);
        w.write_record(&rec).map_err(runtime)?;
    }
    let buf = w.into_inner().map_err(runtime)?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&buf))
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    if let Some(d) = a.dist.d.filter(|d| *d > MAX_DIM) {
        return Err(usage(format!(
            "verify supports D ≤ {MAX_DIM}: the quadrature oracle is restricted to one and two dimensions (got D = {d})"
        )));
    }
    let law = a.dist.resolve()?;
    if law.dim() > MAX_DIM {
        return Err(usage(format!(
            "verify supports D ≤ {MAX_DIM}: the quadrature oracle is restricted to one and two dimensions (got D = {})",
            law.dim()
        )));
    }
    if a.samples < 2 {
        return Err(usage("--s must be at least 2"));
    }
    let spec = QuadratureSpec {
        nodes_1d: a.nodes_1d,
        radial_nodes: a.radial_nodes,
        angular_nodes: a.angular_nodes,
        ..QuadratureSpec::default()
    };
    let report = verify_law(&law, a.samples, a.seed, &Quadrature::new(spec), &executor()?).map_err(from_core)?;
    let header = format!(
        "verify q={} D={} S={} seed={} quadrature=({}, {}x{})\n",
        law.q(),
        law.dim(),
        a.samples,
        a.seed,
        spec.nodes_1d,
        spec.radial_nodes,
        spec.angular_nodes
    );
    emit(None, &(header + &report.table()))?;
    if let Some(out) = &a.out {
        let doc = json!({
            "config": { "command": "verify", "distribution": dist_echo(&law), "quadrature": spec },
            "report": report,
        });
        io::write_json(out, &doc).map_err(runtime)?;
    }
    if report.all_pass() {
        Ok(())
    } else {
        let names: Vec<String> = report.failures().map(|r| format!("{} [{}]", r.identity, r.function)).collect();
        Err(runtime(format!("identity check failed: {}", names.join(", "))))
    }
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    estimator: EstimatorName,
    shape: &'static str,
    #[serde(with = "real::vec")]
    value: Vec<f64>,
    #[serde(with = "real::vec")]
    stderr: Vec<f64>,
    bound: Option<serde_json::Value>,
    #[serde(rename = "S")]
    samples: usize,
    seed: u64,
    config: &'a serde_json::Value,
}

fn run_estimator(a: &EstimateArgs, law: &QGaussian, f: &dyn TestFunction, exec: &Threaded) -> Result<GradEstimate, Error> {
    use EstimatorName::*;
    let (s, seed) = (a.samples, a.seed);
    match a.estimator {
        SteinLhs => estimators::stein_lhs(law, f, &sample(law, s, seed, Source::Base, exec)?, exec),
        SteinRhsEscort => {
            let batch = sample(law, s, seed, Source::Escort, exec)?;
            estimators::stein_rhs(law, f, SteinVariant::EscortBatch, &batch, exec)
        }
        SteinRhsPOnly => {
            let batch = sample(law, s, seed, Source::Base, exec)?;
            estimators::stein_rhs(law, f, SteinVariant::POnlyReweighted, &batch, exec)
        }
        QBonnet => estimators::grad_mu(law, f, s, seed, exec),
        QPrice => estimators::grad_sigma(law, f, s, seed, exec),
        PropGrad => estimators::prop_estimator(law, f, Reweighted::Gradient, s, seed, exec),
        PropHess => {
            let batch = sample(law, s, seed, Source::Base, exec)?;
            estimators::prop_estimator_on(law, f, Reweighted::Hessian, &batch, a.c3, exec)
        }
        GaussianBonnet => estimators::gaussian_baseline(law.mu(), law.factor(), f, s, seed, Baseline::Location, exec),
        GaussianPrice => estimators::gaussian_baseline(law.mu(), law.factor(), f, s, seed, Baseline::Scale, exec),
    }
}

fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let law = a.dist.resolve()?;
    let battery = Battery::from_name(&a.function).ok_or_else(|| {
        let names: Vec<&str> = Battery::ALL.iter().map(|b| b.name()).collect();
        usage(format!("unknown function {:?}; expected one of {}", a.function, names.join(", ")))
    })?;
    if a.samples == 0 {
        return Err(usage("--s must be at least 1"));
    }
    let f = battery.instantiate(law.dim());
    let est = run_estimator(a, &law, &f, &executor()?).map_err(from_core)?;
    let config = json!({
        "command": "estimate",
        "distribution": dist_echo(&law),
        "estimator": a.estimator,
        "function": battery.name(),
        "S": a.samples,
        "seed": a.seed,
        "c3": a.c3,
    });
    let bound = est.bound.map(|b| {
        let mut m = serde_json::Map::new();
        m.insert("per_entry".into(), json!(b.per_entry));
        if let Some(fro) = b.frobenius {
            m.insert("frobenius".into(), json!(fro));
        }
        if let Some(op) = b.op_norm {
            m.insert("op_norm_diagnostic".into(), json!({ "c3": op.c3, "value": op.value, "certified": false }));
        }
        serde_json::Value::Object(m)
    });
    let rec = EstimateRecord {
        estimator: a.estimator,
        shape: match est.shape {
            ValueShape::Vector => "vector",
            ValueShape::Matrix => "matrix",
        },
        stderr: est.std_error(),
        value: est.value,
        bound,
        samples: est.samples,
        seed: est.seed,
        config: &config,
    };
    emit(a.out.as_deref(), &io::to_json(&rec).map_err(runtime)?)
}

fn preset(p: Preset) -> ExperimentConfig {
    let logreg = || Some(LogRegConfig::default());
    let radius = || Some(RadiusConfig::default());
    let training = || Some(TrainingConfig::default());
    match p {
        Preset::Logreg => ExperimentConfig { logreg: logreg(), ..Default::default() },
        Preset::Radius => ExperimentConfig { radius: radius(), ..Default::default() },
        Preset::Toy => ExperimentConfig { training: training(), ..Default::default() },
        Preset::All => ExperimentConfig { logreg: logreg(), radius: radius(), training: training() },
    }
}

fn cmd_experiment(a: &ExperimentArgs) -> CliResult<()> {
    let cfg = match (&a.config, a.preset) {
        (Some(path), _) => read_json::<ExperimentConfig>(path)?,
        (None, Some(p)) => preset(p),
        (None, None) => return Err(usage("pass --config <file> or --preset <name>")),
    };
    cfg.validate().map_err(usage)?;
    let report = run_experiments(&cfg, a.include_timings, &executor()?).map_err(usage)?;
    if let Some(path) = &a.csv {
        let file = std::fs::File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        report.write_csv(std::io::BufWriter::new(file)).map_err(runtime)?;
    }
    emit(a.out.as_deref(), &io::to_json(&report).map_err(runtime)?)
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Density(a) => cmd_density(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qstein: {e}");
            e.exit_code()
        }
    }
}
