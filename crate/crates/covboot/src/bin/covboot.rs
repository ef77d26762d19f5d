//! Command line front end: synthetic data generation, single-shot tests on
//! CSV series, adaptive block length selection, and Monte Carlo
//! experiments.
//!
//! stdout carries only machine-readable payload (JSON reports, CSV, a bare
//! integer); resolved seeds and progress go to stderr. Exit codes: 0 on
//! success, 2 for usage or validation problems, 3 for runtime IO failures.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use covboot::bootstrap::{BlockMethod, CrossCentering};
use covboot::datagen::{
    changepoint_series, correlated_pair, model_series, ChangeSpec, CrossPairSpec, ModelKind,
    ModelSpec, DEFAULT_BURNIN,
};
use covboot::fspace::{FunctionalSeries, HSOperator};
use covboot::harness::{run_experiment, ExperimentConfig};
use covboot::htest::{
    changepoint_test, cross_covariance_test, one_sample_test, BlockLength, CusumStat, TestConfig,
};
use covboot::{Error, Result};

#[derive(Parser)]
#[command(
    name = "covboot",
    version,
    about = "Bootstrap inference for covariance operators of functional time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic series and write them as CSV
    Generate(GenerateArgs),
    /// Test two series for zero cross-covariance
    TestCross(TestCrossArgs),
    /// Test one series for a covariance changepoint
    TestCp(TestCpArgs),
    /// Test the covariance of one series against a fixed operator
    TestOneSample(TestOneSampleArgs),
    /// Print the data adaptive block length for a series
    BlockLength(BlockLengthArgs),
    /// Run a Monte Carlo experiment described by a JSON config
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Iid,
    Far1,
}

impl From<ModelArg> for ModelKind {
    fn from(v: ModelArg) -> ModelKind {
        match v {
            ModelArg::Iid => ModelKind::Iid,
            ModelArg::Far1 => ModelKind::Far1,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Nonoverlapping,
    Moving,
}

impl From<MethodArg> for BlockMethod {
    fn from(v: MethodArg) -> BlockMethod {
        match v {
            MethodArg::Nonoverlapping => BlockMethod::Nonoverlapping,
            MethodArg::Moving => BlockMethod::Moving,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CenteringArg {
    Estimate,
    Zero,
}

impl From<CenteringArg> for CrossCentering {
    fn from(v: CenteringArg) -> CrossCentering {
        match v {
            CenteringArg::Estimate => CrossCentering::Estimate,
            CenteringArg::Zero => CrossCentering::Zero,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    Cs,
    Ci,
}

impl From<StatArg> for CusumStat {
    fn from(v: StatArg) -> CusumStat {
        match v {
            StatArg::Cs => CusumStat::Cs,
            StatArg::Ci => CusumStat::Ci,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Base model of the series
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Number of observations
    #[arg(long)]
    n: usize,
    /// Grid resolution
    #[arg(long)]
    m: usize,
    /// Generate a correlated pair with this common-component weight
    #[arg(long)]
    alpha: Option<f64>,
    /// Uniform covariance change size (changepoint series)
    #[arg(long)]
    d1: Option<f64>,
    /// Sinusoidal covariance change size (changepoint series)
    #[arg(long)]
    d2: Option<f64>,
    /// First changed row, 1-based; defaults to n/2 + 1
    #[arg(long)]
    kstar: Option<usize>,
    /// RNG seed; drawn from entropy when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// AR burn-in steps
    #[arg(long, default_value_t = DEFAULT_BURNIN)]
    burnin: usize,
    /// Output CSV path; pair mode derives _x/_y names from it
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by the single-shot tests.
#[derive(Args)]
struct CommonTestArgs {
    /// Fixed block length p
    #[arg(long, conflicts_with = "adaptive")]
    block: Option<usize>,
    /// Choose the block length adaptively (the default)
    #[arg(long)]
    adaptive: bool,
    /// Bootstrap replicates B
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// RNG seed; drawn from entropy when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// Significance levels, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.10])]
    levels: Vec<f64>,
    /// Block resampling scheme
    #[arg(long, value_enum, default_value_t = MethodArg::Nonoverlapping)]
    method: MethodArg,
}

impl CommonTestArgs {
    fn test_config(&self, centering: CrossCentering) -> TestConfig {
        TestConfig {
            replicates: self.replicates,
            block: match self.block {
                Some(p) => BlockLength::Fixed(p),
                None => BlockLength::Adaptive,
            },
            levels: self.levels.clone(),
            seed: resolve_seed(self.seed),
            centering,
            method: self.method.into(),
            ..TestConfig::default()
        }
    }
}

#[derive(Args)]
struct TestCrossArgs {
    /// CSV with the X series
    #[arg(long)]
    x_file: PathBuf,
    /// CSV with the Y series
    #[arg(long)]
    y_file: PathBuf,
    /// Replicate centering: at the estimate or at zero
    #[arg(long, value_enum, default_value_t = CenteringArg::Estimate)]
    centering: CenteringArg,
    #[command(flatten)]
    common: CommonTestArgs,
}

#[derive(Args)]
struct TestCpArgs {
    /// CSV with the series
    #[arg(long)]
    file: PathBuf,
    /// CUSUM functional
    #[arg(long, value_enum, default_value_t = StatArg::Cs)]
    statistic: StatArg,
    #[command(flatten)]
    common: CommonTestArgs,
}

#[derive(Args)]
struct TestOneSampleArgs {
    /// CSV with the series
    #[arg(long)]
    file: PathBuf,
    /// CSV with the null covariance kernel; zero operator when omitted
    #[arg(long)]
    null_operator: Option<PathBuf>,
    #[command(flatten)]
    common: CommonTestArgs,
}

#[derive(Args)]
struct BlockLengthArgs {
    /// CSV with the series
    #[arg(long)]
    file: PathBuf,
    /// Initial bandwidth override; defaults to ceil(n^(1/5))
    #[arg(long)]
    h0: Option<usize>,
    /// Multiplier on the plug-in rate
    #[arg(long, default_value_t = 1.0)]
    constant: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Directory for result CSV and manifest
    #[arg(long)]
    out_dir: PathBuf,
    /// Worker thread cap; results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e);
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::TestCross(args) => cmd_test_cross(args),
        Command::TestCp(args) => cmd_test_cp(args),
        Command::TestOneSample(args) => cmd_test_one_sample(args),
        Command::BlockLength(args) => cmd_block_length(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

/// Use the given seed or draw one, and always echo it to stderr so the run
/// can be reproduced.
fn resolve_seed(seed: Option<u64>) -> u64 {
    let s = seed.unwrap_or_else(|| rand::thread_rng().gen());
    eprintln!("seed: {}", s);
    s
}

/// Read an input file, treating unreadable paths as usage errors.
fn read_input(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {}", path.display(), e)))
}

fn read_series(path: &Path) -> Result<FunctionalSeries> {
    FunctionalSeries::from_csv_str(&read_input(path)?)
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// "data.csv" -> "data_x.csv"; extensionless paths get a plain suffix.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{}{}.{}", stem, suffix, ext.to_string_lossy()),
        None => format!("{}{}", stem, suffix),
    };
    path.with_file_name(name)
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    if args.alpha.is_some() && (args.d1.is_some() || args.d2.is_some() || args.kstar.is_some()) {
        return Err(Error::InvalidArgument(
            "--alpha (pair mode) cannot be combined with --d1/--d2/--kstar".into(),
        ));
    }
    let seed = resolve_seed(args.seed);
    let model = ModelSpec {
        kind: args.model.into(),
        m: args.m,
        burnin: args.burnin,
        seed,
    };
    let mut spec_json = serde_json::json!({
        "model": model,
        "n": args.n,
    });
    let obj = spec_json.as_object_mut().expect("spec json is an object");

    if let Some(alpha) = args.alpha {
        let spec = CrossPairSpec::new(alpha, args.n, model)?;
        let (x, y) = correlated_pair(&spec)?;
        let x_path = with_suffix(&args.out, "_x");
        let y_path = with_suffix(&args.out, "_y");
        x.write_csv(&x_path)?;
        y.write_csv(&y_path)?;
        obj.insert("alpha".into(), serde_json::json!(alpha));
        obj.insert(
            "files".into(),
            serde_json::json!([x_path.display().to_string(), y_path.display().to_string()]),
        );
    } else if args.d1.is_some() || args.d2.is_some() || args.kstar.is_some() {
        let k_star = args.kstar.unwrap_or(args.n / 2 + 1);
        let spec = ChangeSpec::new(
            args.d1.unwrap_or(0.0),
            args.d2.unwrap_or(0.0),
            k_star,
            args.n,
            model,
        )?;
        let series = changepoint_series(&spec)?;
        series.write_csv(&args.out)?;
        obj.insert("d1".into(), serde_json::json!(spec.d1));
        obj.insert("d2".into(), serde_json::json!(spec.d2));
        obj.insert("kStar".into(), serde_json::json!(k_star));
        obj.insert("files".into(), serde_json::json!([args.out.display().to_string()]));
    } else {
        let series = model_series(args.n, &model)?;
        series.write_csv(&args.out)?;
        obj.insert("files".into(), serde_json::json!([args.out.display().to_string()]));
    }
    print_json(&spec_json)
}

fn cmd_test_cross(args: TestCrossArgs) -> Result<()> {
    let x = read_series(&args.x_file)?;
    let y = read_series(&args.y_file)?;
    let cfg = args.common.test_config(args.centering.into());
    let report = cross_covariance_test(&x, &y, &cfg)?;
    print_json(&report.to_json())
}

fn cmd_test_cp(args: TestCpArgs) -> Result<()> {
    let x = read_series(&args.file)?;
    let cfg = args.common.test_config(CrossCentering::Estimate);
    let report = changepoint_test(&x, args.statistic.into(), &cfg)?;
    print_json(&report.to_json())
}

fn cmd_test_one_sample(args: TestOneSampleArgs) -> Result<()> {
    let x = read_series(&args.file)?;
    let v0 = match &args.null_operator {
        Some(path) => HSOperator::from_csv_str(&read_input(path)?)?,
        None => HSOperator::zeros(x.grid(), x.grid()),
    };
    let cfg = args.common.test_config(CrossCentering::Estimate);
    let report = one_sample_test(&x, &v0, &cfg)?;
    print_json(&report.to_json())
}

fn cmd_block_length(args: BlockLengthArgs) -> Result<()> {
    let series = read_series(&args.file)?;
    let cfg = covboot::bootstrap::BandwidthConfig { constant: args.constant, h0: args.h0 };
    let p = covboot::bootstrap::adaptive_block_length(&series, &cfg)?;
    println!("{}", p);
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::read_json(&args.config)?;
    eprintln!("seed: {}", cfg.master_seed);
    let start = Instant::now();
    let table = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {}", e)))?
            .install(|| run_experiment(&cfg)),
        None => run_experiment(&cfg),
    }?;
    let runtime = start.elapsed().as_secs_f64();

    std::fs::create_dir_all(&args.out_dir)?;
    let stem = args
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "results".to_string());
    let csv_name = format!("{}.csv", stem);
    table.write_csv(args.out_dir.join(&csv_name))?;

    let manifest = serde_json::json!({
        "config": cfg,
        "configPath": args.config.display().to_string(),
        "outputs": [csv_name],
        "masterSeed": cfg.master_seed,
        "runtimeSeconds": runtime,
    });
    std::fs::write(
        args.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    print_json(&manifest)
}
