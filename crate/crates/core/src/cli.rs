//! The `calibkit` command line.
//!
//! Every command writes into an output directory (`--out`) and always emits
//! a `manifest.json` recording the resolved parameters, the toolkit version
//! and SHA-256 digests of the inputs. All randomness comes from explicit
//! seeds, so re-running a manifest reproduces its outputs byte for byte.
//!
//! Exit codes: 0 on success, 1 on a data error (unreadable or invalid
//! input, training failure), 2 on a usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::benchmark::{aggregate, run_seed, BenchmarkConfig, SeedRun, SummaryRow};
use crate::error::Error;
use crate::metrics::{evaluate, BinScheme, BinSpec, Evaluation};
use crate::numerics::check_temperature;
use crate::smoothing::SmoothingConfig;
use crate::store::{read_predictions, write_predictions_to_path, Format, IngestOptions, PredictionSet, SplitTag};
use crate::temperature::{fit_temperature, Objective, ObjectiveKind, SearchGrid};
use crate::train::TrainConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_DATA: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "calibkit",
    version,
    about = "Calibration measurement for probabilistic classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Accuracy and expected calibration error of a prediction log.
    Ece(EceArgs),
    /// Reliability-diagram table of a prediction log.
    Reliability(EceArgs),
    /// Fit a temperature on a dev log by line search, then score eval logs.
    FitTemp(FitTempArgs),
    /// Synthetic shift benchmark: MLE vs label smoothing, with and without
    /// temperature scaling.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => Format::Jsonl,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    EqualWidth,
    EqualMass,
}

impl From<SchemeArg> for BinScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::EqualWidth => BinScheme::EqualWidth,
            SchemeArg::EqualMass => BinScheme::EqualMass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Ece,
    Nll,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Ece => ObjectiveKind::Ece,
            ObjectiveArg::Nll => ObjectiveKind::Nll,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Force the class count instead of inferring it from the first row.
    #[arg(long)]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BinArgs {
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, value_enum, default_value = "equal-width")]
    pub scheme: SchemeArg,
}

#[derive(Debug, Clone, Args)]
pub struct EceArgs {
    /// Prediction log (JSONL or CSV).
    pub input: PathBuf,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[command(flatten)]
    pub bin_args: BinArgs,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitTempArgs {
    /// In-domain development log used to fit the temperature.
    pub dev: PathBuf,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[arg(long, default_value_t = crate::temperature::DEFAULT_GRID_LO)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = crate::temperature::DEFAULT_GRID_HI)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = crate::temperature::DEFAULT_GRID_STEP)]
    pub grid_step: f64,
    #[arg(long, value_enum, default_value = "ece")]
    pub objective: ObjectiveArg,
    #[command(flatten)]
    pub bin_args: BinArgs,
    /// Logs to evaluate at the fitted temperature (repeatable).
    #[arg(long = "eval")]
    pub eval: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Examples per split.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 3.0)]
    pub shift: f64,
    #[arg(long, default_value_t = crate::smoothing::DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = vec![1u64, 2, 3, 4, 5])]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lr: f64,
    /// Line-search objective used for the temperature fit.
    #[arg(long, value_enum, default_value = "ece")]
    pub objective: ObjectiveArg,
    #[command(flatten)]
    pub bin_args: BinArgs,
    /// Also write every split's features as CSV.
    #[arg(long)]
    pub write_splits: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::Data(err.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    ExitCode::from(run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock()))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = err.render().to_string();
            let sink: &mut dyn Write = if err.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{rendered}");
            return code;
        }
    };
    let result = match &cli.command {
        Command::Ece(args) => cmd_ece(args, stdout, false),
        Command::Reliability(args) => cmd_ece(args, stdout, true),
        Command::FitTemp(args) => cmd_fit_temp(args, stdout),
        Command::Benchmark(args) => cmd_benchmark(args, stdout, stderr),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(err)) => {
            let _ = writeln!(stderr, "error: {err}");
            EXIT_DATA
        }
    }
}

fn usage<T>(result: crate::Result<T>) -> std::result::Result<T, Failure> {
    result.map_err(|err| Failure::Usage(err.to_string()))
}

fn resolve_format(path: &Path, format: Option<FormatArg>) -> std::result::Result<Format, Failure> {
    match format {
        Some(f) => Ok(f.into()),
        None => Format::from_path(path).ok_or_else(|| {
            Failure::Usage(format!(
                "cannot infer format of {}; pass --format jsonl|csv",
                path.display()
            ))
        }),
    }
}

fn bin_spec(args: &BinArgs) -> std::result::Result<BinSpec, Failure> {
    usage(BinSpec::new(args.bins, args.scheme.into()))
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

/// Reads an input file once, returning the parsed set and its digest.
fn load(
    path: &Path,
    format: Format,
    split_tag: SplitTag,
    args: &InputArgs,
) -> std::result::Result<(PredictionSet, InputDigest), Failure> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let options = IngestOptions {
        num_classes: args.num_classes,
    };
    let set = read_predictions(bytes.as_slice(), format, split_tag, options)
        .map_err(|err| Failure::Data(format!("{}: {err}", path.display())))?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    Ok((set, digest))
}

fn create_out_dir(dir: &Path) -> std::result::Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|source| {
        Error::Write {
            path: dir.to_path_buf(),
            source,
        }
        .into()
    })
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> std::result::Result<(), Failure> {
    let mut buf = Vec::new();
    write(&mut buf).and_then(|_| fs::write(path, &buf)).map_err(|source| {
        Error::Write {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> std::result::Result<(), Failure> {
    write_file(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value).map_err(std::io::Error::other)?;
        buf.push(b'\n');
        Ok(())
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    toolkit_version: &'a str,
    parameters: serde_json::Value,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    parameters: serde_json::Value,
    inputs: Vec<InputDigest>,
    mut outputs: Vec<String>,
) -> std::result::Result<(), Failure> {
    outputs.sort();
    let manifest = Manifest {
        command,
        toolkit_version: env!("CARGO_PKG_VERSION"),
        parameters,
        inputs,
        outputs,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn print(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> std::result::Result<(), Failure> {
    out.write_fmt(text)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|source| {
            Error::Write {
                path: PathBuf::from("<stdout>"),
                source,
            }
            .into()
        })
}

fn cmd_ece(args: &EceArgs, stdout: &mut dyn Write, reliability_only: bool) -> CmdResult {
    let spec = bin_spec(&args.bin_args)?;
    usage(check_temperature(args.temperature))?;
    let format = resolve_format(&args.input, args.input_args.format)?;
    let (set, digest) = load(&args.input, format, SplitTag::UnlabeledSplit, &args.input_args)?;
    let eval = evaluate(&set, args.temperature, spec)?;

    create_out_dir(&args.out)?;
    let mut outputs = vec!["reliability.csv".to_string()];
    write_file(&args.out.join("reliability.csv"), |buf| eval.table.write_csv(buf))?;
    if !reliability_only {
        let report = json!({
            "n": set.len(),
            "num_classes": set.num_classes(),
            "temperature": args.temperature,
            "bins": spec.num_bins(),
            "scheme": spec.scheme(),
            "accuracy": eval.accuracy,
            "ece": eval.ece,
        });
        write_json(&args.out.join("report.json"), &report)?;
        outputs.push("report.json".into());
    }
    let command = if reliability_only { "reliability" } else { "ece" };
    let parameters = json!({
        "input": args.input.display().to_string(),
        "format": format,
        "num_classes": args.input_args.num_classes,
        "bins": spec.num_bins(),
        "scheme": spec.scheme(),
        "temperature": args.temperature,
        "out": args.out.display().to_string(),
    });
    write_manifest(&args.out, command, parameters, vec![digest], outputs)?;

    if reliability_only {
        print(
            stdout,
            format_args!("reliability {}", args.out.join("reliability.csv").display()),
        )?;
    }
    print(stdout, format_args!("n {}", set.len()))?;
    print(stdout, format_args!("temperature {:.2}", args.temperature))?;
    print(stdout, format_args!("accuracy {:.4}", eval.accuracy))?;
    print(stdout, format_args!("ece {:.4}", eval.ece))
}

#[derive(Serialize)]
struct EvalReport {
    path: String,
    n: usize,
    accuracy: f64,
    ece: f64,
    reliability: String,
}

fn cmd_fit_temp(args: &FitTempArgs, stdout: &mut dyn Write) -> CmdResult {
    let spec = bin_spec(&args.bin_args)?;
    let grid = usage(SearchGrid::new(args.grid_lo, args.grid_hi, args.grid_step))?;
    let objective = Objective {
        kind: args.objective.into(),
        bin_spec: spec,
    };
    let dev_format = resolve_format(&args.dev, args.input_args.format)?;
    let eval_formats = args
        .eval
        .iter()
        .map(|p| resolve_format(p, args.input_args.format))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let (dev, dev_digest) = load(&args.dev, dev_format, SplitTag::InDomainDev, &args.input_args)?;
    let mut digests = vec![dev_digest];
    let mut eval_sets = Vec::with_capacity(args.eval.len());
    for (path, format) in args.eval.iter().zip(&eval_formats) {
        let (set, digest) = load(path, *format, SplitTag::UnlabeledSplit, &args.input_args)?;
        digests.push(digest);
        eval_sets.push(set);
    }

    let fit = fit_temperature(&dev, &grid, &objective)?;
    let evals: Vec<Evaluation> = eval_sets
        .iter()
        .map(|set| evaluate(set, fit.temperature, spec))
        .collect::<crate::Result<_>>()?;
    let dev_eval = evaluate(&dev, fit.temperature, spec)?;

    create_out_dir(&args.out)?;
    let mut outputs = vec!["curve.csv".to_string(), "fit.json".into(), "reliability_dev.csv".into()];
    write_file(&args.out.join("curve.csv"), |buf| fit.write_curve_csv(buf))?;
    write_file(&args.out.join("reliability_dev.csv"), |buf| {
        dev_eval.table.write_csv(buf)
    })?;
    let mut eval_reports = Vec::with_capacity(evals.len());
    for (i, ((path, set), eval)) in args.eval.iter().zip(&eval_sets).zip(&evals).enumerate() {
        let name = format!("reliability_eval{i}.csv");
        write_file(&args.out.join(&name), |buf| eval.table.write_csv(buf))?;
        eval_reports.push(EvalReport {
            path: path.display().to_string(),
            n: set.len(),
            accuracy: eval.accuracy,
            ece: eval.ece,
            reliability: name.clone(),
        });
        outputs.push(name);
    }
    let report = json!({
        "temperature": fit.temperature,
        "objective": objective.kind,
        "objective_value": fit.objective_value,
        "dev": { "n": dev.len(), "accuracy": dev_eval.accuracy, "ece": dev_eval.ece },
        "eval": eval_reports,
    });
    write_json(&args.out.join("fit.json"), &report)?;
    let parameters = json!({
        "dev": args.dev.display().to_string(),
        "format": dev_format,
        "num_classes": args.input_args.num_classes,
        "grid": { "lo": grid.lo(), "hi": grid.hi(), "step": grid.step() },
        "objective": objective.kind,
        "bins": spec.num_bins(),
        "scheme": spec.scheme(),
        "eval": args.eval.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "out": args.out.display().to_string(),
    });
    write_manifest(&args.out, "fit-temp", parameters, digests, outputs)?;

    print(stdout, format_args!("temperature {:.2}", fit.temperature))?;
    print(
        stdout,
        format_args!("dev_{} {:.4}", objective.kind, fit.objective_value),
    )?;
    for report in &eval_reports {
        print(
            stdout,
            format_args!(
                "eval {} accuracy {:.4} ece {:.4}",
                report.path, report.accuracy, report.ece
            ),
        )?;
    }
    Ok(())
}

fn write_seed_outputs(dir: &Path, run: &SeedRun, write_splits: bool, outputs: &mut Vec<String>) -> CmdResult {
    let seed = run.seed;
    for model in [&run.mle, &run.ls] {
        let tag = model.objective.to_string();
        for (split, set) in [
            ("dev", &model.dev),
            ("test_id", &model.test_id),
            ("test_ood", &model.test_ood),
        ] {
            let name = format!("logits_seed{seed}_{tag}_{split}.jsonl");
            write_predictions_to_path(set, Format::Jsonl, dir.join(&name))?;
            outputs.push(name);
        }
        let name = format!("curve_seed{seed}_{tag}.csv");
        write_file(&dir.join(&name), |buf| model.fit.write_curve_csv(buf))?;
        outputs.push(name);

        let name = format!("params_seed{seed}_{tag}.csv");
        write_file(&dir.join(&name), |buf| model.trained.model.write_params(buf, seed))?;
        outputs.push(name);

        for (calibration, scores) in [("ootb", &model.out_of_the_box), ("ts", &model.temperature_scaled)] {
            for (split, eval) in [("id", &scores.in_domain), ("ood", &scores.out_of_domain)] {
                let name = format!("reliability_seed{seed}_{tag}_{calibration}_{split}.csv");
                write_file(&dir.join(&name), |buf| eval.table.write_csv(buf))?;
                outputs.push(name);
            }
        }
    }
    if write_splits {
        let bench = &run.benchmark;
        for (split, data) in [
            ("train_id", &bench.train_id),
            ("dev_id", &bench.dev_id),
            ("test_id", &bench.test_id),
            ("test_ood", &bench.test_ood),
        ] {
            let name = format!("features_seed{seed}_{split}.csv");
            write_file(&dir.join(&name), |buf| data.write_csv(buf))?;
            outputs.push(name);
        }
    }
    Ok(())
}

fn write_summary(path: &Path, rows: &[SummaryRow]) -> CmdResult {
    write_file(path, |buf| {
        writeln!(
            buf,
            "seed,objective,calibration,temperature,id_accuracy,id_ece,ood_accuracy,ood_ece"
        )?;
        for r in rows {
            writeln!(
                buf,
                "{},{},{},{:?},{:?},{:?},{:?},{:?}",
                r.seed, r.objective, r.calibration, r.temperature, r.id_accuracy, r.id_ece, r.ood_accuracy, r.ood_ece
            )?;
        }
        Ok(())
    })
}

fn print_row(out: &mut dyn Write, r: &SummaryRow) -> CmdResult {
    print(
        out,
        format_args!(
            "{:>6}  {:<3}  {:<18}  T={:.2}  id_acc={:.4}  id_ece={:.4}  ood_acc={:.4}  ood_ece={:.4}",
            r.seed, r.objective, r.calibration, r.temperature, r.id_accuracy, r.id_ece, r.ood_accuracy, r.ood_ece
        ),
    )
}

fn cmd_benchmark(args: &BenchmarkArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let bins = bin_spec(&args.bin_args)?;
    usage(SmoothingConfig::new(args.alpha, args.classes.max(2)))?;
    if args.classes < 2 || args.dim == 0 || args.n < 10 {
        return Err(Failure::Usage("need --classes ≥ 2, --dim ≥ 1 and --n ≥ 10".into()));
    }
    if !(args.shift.is_finite() && args.shift >= 0.0) {
        return Err(Failure::Usage(format!("--shift must be ≥ 0, got {}", args.shift)));
    }
    if !(args.lr.is_finite() && args.lr > 0.0) || args.batch_size == 0 {
        return Err(Failure::Usage("--lr must be > 0 and --batch-size ≥ 1".into()));
    }
    if args.seeds.is_empty() {
        return Err(Failure::Usage("at least one seed is required".into()));
    }
    let config = BenchmarkConfig {
        num_classes: args.classes,
        feature_dim: args.dim,
        n_per_split: args.n,
        shift_magnitude: args.shift,
        alpha: args.alpha,
        train: TrainConfig {
            epochs: args.epochs,
            batch_size: args.batch_size,
            learning_rate: args.lr,
            seed: 0,
        },
        grid: SearchGrid::default(),
        objective: Objective {
            kind: args.objective.into(),
            bin_spec: bins,
        },
        bins,
    };

    create_out_dir(&args.out)?;
    let mut outputs = vec!["summary.csv".to_string()];
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &seed in &args.seeds {
        match run_seed(&config, seed) {
            Ok(run) => {
                write_seed_outputs(&args.out, &run, args.write_splits, &mut outputs)?;
                let seed_rows = run.summary_rows();
                for row in &seed_rows {
                    print_row(stdout, row)?;
                }
                rows.extend(seed_rows);
            }
            Err(err) => {
                let _ = writeln!(stderr, "seed {seed}: {err}");
                failed.push(json!({ "seed": seed, "error": err.to_string() }));
            }
        }
    }
    let means = aggregate(&rows);
    for row in &means {
        print_row(stdout, row)?;
    }
    rows.extend(means);
    write_summary(&args.out.join("summary.csv"), &rows)?;

    let parameters = json!({
        "classes": args.classes,
        "dim": args.dim,
        "n": args.n,
        "shift": args.shift,
        "alpha": args.alpha,
        "seeds": args.seeds,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "objective": config.objective.kind,
        "bins": bins.num_bins(),
        "scheme": bins.scheme(),
        "grid": { "lo": config.grid.lo(), "hi": config.grid.hi(), "step": config.grid.step() },
        "write_splits": args.write_splits,
        "out": args.out.display().to_string(),
        "failed_seeds": failed,
    });
    write_manifest(&args.out, "benchmark", parameters, Vec::new(), outputs)?;

    if failed.len() == args.seeds.len() {
        return Err(Failure::Data("every seed failed".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (u8, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        let (code, _, err) = run_capture(&["calibkit", "ece", "x.jsonl", "--bogus", "--out", "o"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(!err.is_empty());
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run_capture(&["calibkit", "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("fit-temp"));
    }

    #[test]
    fn format_must_be_inferable() {
        let (code, _, err) = run_capture(&["calibkit", "ece", "preds.txt", "--out", "o"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--format"));
    }
}
