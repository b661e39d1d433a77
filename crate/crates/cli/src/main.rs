//! `kerf` command-line tool.
//!
//! Exit codes: 0 success, 2 bad flags, 3 data or I/O error, 4 a checked
//! bound was violated.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kerf::kernel::{centred_kernel, uniform_kernel_lifted};
use kerf::{
    check_unit_point, convergence_curve, minmax_scale, run_experiment, run_suite, suggest_level, ConvergenceSpec,
    ExperimentSpec, Forest, ForestConfig, KernelFamily, LevelPolicy, PredictMode, RawTable, SavedModel, Strategy,
    Suite, TreeKind, TreeSpec, VerifyOptions,
};
use serde::de::DeserializeOwned;

const MAX_GRID_ROWS: usize = 10_000_000;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn flag(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<kerf::Error> for Failure {
    fn from(e: kerf::Error) -> Self {
        Self { code: 3, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        kerf::Error::from(e).into()
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        kerf::Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        kerf::Error::from(e).into()
    }
}

type Outcome = Result<(), Failure>;

/// Parse a kebab-case name into one of the library's serde enums.
fn named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| format!("unknown value `{s}`"))
}

#[derive(Parser)]
#[command(name = "kerf", version, about = "Kernel-based random forests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a forest on a CSV table and save it as JSON.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Tabulate a connection kernel on a grid of cell midpoints.
    KernelEval(KernelEvalArgs),
    /// Run a battery of bound checks and write a JSON report.
    Verify(VerifyArgs),
    /// Run a simulation study from a TOML file or a named preset.
    Experiment(ExperimentArgs),
    /// Risk of finite KeRF as the number of trees grows, against infinite KeRF.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    /// centred, uniform, median or breiman.
    #[arg(long, value_parser = named::<TreeKind>)]
    kind: TreeKind,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trees: u64,
    #[arg(long, conflicts_with = "auto_level")]
    level: Option<u32>,
    /// Pick the level from the sample size (see --level-policy).
    #[arg(long)]
    auto_level: bool,
    /// experiment, centred-rate or uniform-rate.
    #[arg(long, value_parser = named::<LevelPolicy>, default_value = "experiment")]
    level_policy: LevelPolicy,
    #[arg(long)]
    bootstrap: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Min-max scale the features onto [0,1] before fitting.
    #[arg(long)]
    scale: bool,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    #[arg(long, default_value_t = 0.333)]
    max_features: f64,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// forest, kerf or kerf-infinite.
    #[arg(long, value_parser = named::<PredictMode>, default_value = "kerf")]
    mode: PredictMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KernelEvalArgs {
    /// centred or uniform.
    #[arg(long, value_parser = named::<KernelFamily>)]
    family: KernelFamily,
    #[arg(long)]
    k: u32,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    d: u64,
    /// Cells per axis.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    grid: u64,
    /// Comma-separated reference point; defaults to the centre of the cube.
    #[arg(long, value_delimiter = ',')]
    center: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// identities, bounds, convergence or all.
    #[arg(long, value_parser = named::<Suite>, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(2..))]
    bias_grid: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Desk-scale setup of a published model, `model-1` to `model-8`.
    #[arg(long)]
    preset: Option<String>,
    /// Divide the preset's sample size by 2^SHRINK.
    #[arg(long, default_value_t = 2, requires = "preset")]
    shrink: u32,
    #[arg(long, requires = "preset")]
    repetitions: Option<usize>,
    #[arg(long, requires = "preset")]
    seed: Option<u64>,
    /// JSON report; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-repetition risks as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    /// Synthetic model number (1 to 8).
    #[arg(long, default_value_t = 1)]
    model_id: u8,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// centred or uniform.
    #[arg(long, value_parser = named::<KernelFamily>, default_value = "centred")]
    family: KernelFamily,
    /// Comma-separated increasing tree counts.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
    m_grid: Vec<usize>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })?))
}

fn read_table(path: &Path) -> Result<RawTable, Failure> {
    let file = File::open(path).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(RawTable::read_csv(file)?)
}

fn fit(args: FitArgs) -> Outcome {
    let table = read_table(&args.data)?;
    let (data, scaler) = if args.scale {
        let (d, s) = minmax_scale(&table, &args.response)?;
        (d, Some(s))
    } else {
        (table.to_dataset(&args.response)?, None)
    };
    let spec = match args.kind {
        TreeKind::Breiman => TreeSpec::Breiman {
            min_samples_split: args.min_samples_split,
            max_features: args.max_features,
            min_leaf: args.min_leaf,
        },
        kind => {
            let level = match (args.level, args.auto_level) {
                (Some(k), _) => k,
                (None, true) => suggest_level(data.len(), data.dim(), args.level_policy),
                (None, false) => return Err(Failure::flag(format!("{kind} trees need --level or --auto-level"))),
            };
            TreeSpec::with_level(kind, i64::from(level)).map_err(|e| Failure::flag(e.to_string()))?
        }
    };
    spec.validate().map_err(|e| Failure::flag(e.to_string()))?;
    let config = ForestConfig::new(spec, args.trees as usize, args.seed).with_bootstrap(args.bootstrap);
    let forest = Forest::fit(&config, &data)?;
    let model = SavedModel::new(table.feature_names(Some(&args.response)), args.response, scaler, forest)?;
    let mut w = create(&args.out)?;
    model.to_writer(&mut w)?;
    w.flush()?;
    Ok(())
}

fn predict(args: PredictArgs) -> Outcome {
    let model = SavedModel::load(&args.model)?;
    let table = read_table(&args.data)?;
    let queries = model.queries(&table)?;
    for q in &queries {
        check_unit_point(q)?;
    }
    let preds = model.forest.predict_many(args.mode, &queries)?;
    let mut w = csv::Writer::from_writer(create(&args.out)?);
    w.write_record(["prediction"])?;
    for p in preds {
        w.write_record([p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn kernel_eval(args: KernelEvalArgs) -> Outcome {
    let d = args.d as usize;
    let res = args.grid as usize;
    let rows = (0..d).try_fold(1usize, |acc, _| acc.checked_mul(res).filter(|&r| r <= MAX_GRID_ROWS));
    let Some(rows) = rows else {
        return Err(Failure::flag(format!("a {res}^{d} grid exceeds {MAX_GRID_ROWS} rows")));
    };
    let center = args.center.unwrap_or_else(|| vec![0.5; d]);
    if center.len() != d {
        return Err(Failure::flag(format!("--center has {} coordinates, expected {d}", center.len())));
    }
    check_unit_point(&center).map_err(|e| Failure::flag(e.to_string()))?;
    let mut w = csv::Writer::from_writer(create(&args.out)?);
    let mut header: Vec<String> = (1..=d).map(|j| format!("z{j}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    let mut z = vec![0.0; d];
    for flat in 0..rows {
        let mut r = flat;
        for c in z.iter_mut() {
            *c = ((r % res) as f64 + 0.5) / res as f64;
            r /= res;
        }
        let value = match args.family {
            KernelFamily::Centred => centred_kernel(&center, &z, args.k, Strategy::DpConvolution),
            KernelFamily::Uniform => uniform_kernel_lifted(&center, &z, args.k, Strategy::DpConvolution),
        };
        let mut rec: Vec<String> = z.iter().map(f64::to_string).collect();
        rec.push(value.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn verify(args: VerifyArgs) -> Outcome {
    let opts = VerifyOptions {
        bias_grid: args.bias_grid as usize,
        seed: args.seed,
    };
    let reports = run_suite(args.suite, &opts)?;
    let mut w = create(&args.out)?;
    serde_json::to_writer_pretty(&mut w, &reports)?;
    w.write_all(b"\n")?;
    w.flush()?;
    let failed = reports.iter().filter(|r| !r.satisfied).count();
    if failed > 0 {
        return Err(Failure {
            code: 4,
            message: format!("{failed} of {} checks violated", reports.len()),
        });
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Outcome {
    let spec = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure {
                code: 3,
                message: format!("{}: {e}", path.display()),
            })?;
            ExperimentSpec::from_toml(&text)?
        }
        (None, Some(name)) => {
            let mut spec = ExperimentSpec::preset(name, args.shrink).map_err(|e| Failure::flag(e.to_string()))?;
            spec.repetitions = args.repetitions.unwrap_or(spec.repetitions);
            spec.seed = args.seed.unwrap_or(spec.seed);
            spec
        }
        (None, None) => return Err(Failure::flag("give --config or --preset")),
    };
    let report = run_experiment(&spec)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{json}")?;
            w.flush()?;
        }
        None => println!("{json}"),
    }
    if let Some(path) = &args.csv {
        report.write_risks_csv(create(path)?)?;
    }
    Ok(())
}

fn convergence(args: ConvergenceArgs) -> Outcome {
    let spec = ConvergenceSpec {
        model: args.model_id,
        n: args.n,
        d: args.d,
        family: args.family,
        m_grid: args.m_grid,
        level: args.level,
        seed: args.seed,
        train_fraction: kerf::experiment::DEFAULT_TRAIN_FRACTION,
    };
    let table = convergence_curve(&spec)?;
    table.write_csv(create(&args.out)?)?;
    Ok(())
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("KERF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::flag(format!("KERF_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::flag(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::KernelEval(a) => kernel_eval(a),
        Command::Verify(a) => verify(a),
        Command::Experiment(a) => experiment(a),
        Command::Convergence(a) => convergence(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kerf: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
