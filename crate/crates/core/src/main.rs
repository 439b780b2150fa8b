#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use tailflow::data::{self, ReturnsDataset};
use tailflow::eval_metrics::TailDiagnostics;
use tailflow::flow_model::{Variant, VariantOptions};
use tailflow::harness::{self, Checkpoint, DataSource, ExperimentConfig, OUTPUT_ENV};
use tailflow::trainer::TrainConfig;
use tailflow::{verify, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "tailflow", version, about = "Normalizing flows with learnable heavy tails for return data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and save its checkpoint.
    Fit(FitArgs),
    /// Negative log-likelihood of a data file under a checkpoint.
    Eval(EvalArgs),
    /// Draw synthetic returns from a checkpoint.
    Sample(SampleArgs),
    /// Repeated training of several flows with summary tables.
    Experiment(ExperimentArgs),
    /// Run the numerical self-checks.
    Check(CheckArgs),
    /// Write a synthetic price file with Student-T log returns.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Price file: ISO date column followed by one column per ticker.
    #[arg(long)]
    data: PathBuf,
    /// Number of columns to use (the first D unless --tickers is given).
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated ticker subset.
    #[arg(long, value_delimiter = ',')]
    tickers: Option<Vec<String>>,
    /// Last date of the train/validation period; later rows form the test set.
    #[arg(long)]
    cutoff: Option<NaiveDate>,
    /// Train on raw log returns instead of per-column standardized ones.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clip the per-observation gradient norm (default on).
    #[arg(long, overrides_with = "no_clip_grad")]
    clip_grad: bool,
    #[arg(long, overrides_with = "clip_grad")]
    no_clip_grad: bool,
    #[arg(long, default_value_t = 10.0)]
    clip_norm: f64,
    /// Insert an autoregressive affine layer before the tail layer.
    #[arg(long)]
    tail_affine: bool,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            clip_norm: (!self.no_clip_grad).then_some(self.clip_norm),
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long, default_value = "exf")]
    flow: Variant,
    #[arg(long, env = OUTPUT_ENV, default_value = "tailflow-out")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated flows: rqs, gtaf, ttf, ttf_m, exf.
    #[arg(long, value_delimiter = ',', default_value = "rqs,gtaf,ttf,ttf_m,exf")]
    flow: Vec<Variant>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Concurrent repeats (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Draw a new train/validation partition for every repeat.
    #[arg(long)]
    resample_split: bool,
    /// Skip writing one checkpoint per repeat.
    #[arg(long)]
    no_checkpoints: bool,
    #[arg(long, env = OUTPUT_ENV, default_value = "tailflow-out")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Price file (or a returns file with --returns).
    #[arg(long)]
    data: PathBuf,
    /// The data file holds returns with a header row, as written by `sample`.
    #[arg(long)]
    returns: bool,
    /// Optional file for per-row NLL values.
    #[arg(long)]
    per_row: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV of raw log returns.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 2_000)]
    days: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 3.0)]
    nu: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.01)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "2010-01-04")]
    start: NaiveDate,
}

fn experiment_config(data: &DataArgs, train: &TrainArgs, flows: Vec<Variant>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        flows,
        DataSource::Prices {
            path: data.data.clone(),
            tickers: data.tickers.clone(),
        },
    );
    cfg.dim = data.dim;
    cfg.train = train.config();
    cfg.seed = train.seed;
    cfg.cutoff = data.cutoff;
    cfg.standardize = !data.no_standardize;
    cfg.options = VariantOptions {
        tail_affine: train.tail_affine,
    };
    cfg
}

fn report_failures(outcome: &harness::ExperimentOutcome) -> ExitCode {
    let failed: Vec<_> = outcome.results.iter().filter(|r| r.report.is_failed()).collect();
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    for r in failed {
        eprintln!(
            "{} repeat {} failed: {}",
            r.variant,
            r.repeat,
            r.failure_reason().unwrap_or("unknown")
        );
    }
    ExitCode::from(1)
}

fn run_fit(args: &FitArgs) -> Result<ExitCode> {
    let mut cfg = experiment_config(&args.data, &args.train, vec![args.flow]);
    cfg.repeats = 1;
    let outcome = harness::run_experiment(&cfg, Some(&args.output))?;
    let r = &outcome.results[0];
    match r.test_nll {
        Some(v) => println!(
            "{} test nll {v:.6} (raw units {:.6}), best epoch {}",
            r.variant,
            r.test_nll_raw.unwrap_or(f64::NAN),
            r.report.best_epoch.map_or("-".into(), |e| e.to_string())
        ),
        None => println!("{} failed", r.variant),
    }
    println!(
        "checkpoint: {}",
        args.output
            .join("checkpoints")
            .join(format!("{}_r0.json", r.variant.key()))
            .display()
    );
    Ok(report_failures(&outcome))
}

fn run_experiment(args: &ExperimentArgs) -> Result<ExitCode> {
    let mut cfg = experiment_config(&args.data, &args.train, args.flow.clone());
    cfg.repeats = args.repeats;
    cfg.jobs = args.jobs;
    cfg.resample_split = args.resample_split;
    cfg.save_checkpoints = !args.no_checkpoints;
    let outcome = harness::run_experiment(&cfg, Some(&args.output))?;
    print!("{}", outcome.table.to_text());
    println!("results written to {}", args.output.display());
    Ok(report_failures(&outcome))
}

fn load_rows(path: &Path, returns: bool, ck: &Checkpoint) -> Result<Vec<Vec<f64>>> {
    if returns {
        return Ok(harness::read_returns(path)?.1);
    }
    let table = data::load_prices(path)?;
    let table = if table.tickers.len() != ck.dim && ck.tickers.iter().all(|t| table.tickers.contains(t)) {
        table.select(&ck.tickers)?
    } else {
        table
    };
    if table.dim() != ck.dim {
        return Err(Error::DimensionMismatch {
            expected: ck.dim,
            got: table.dim(),
        });
    }
    data::log_returns(&table)
}

fn run_eval(args: &EvalArgs) -> Result<ExitCode> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let rows = load_rows(&args.data, args.returns, &ck)?;
    let report = harness::evaluate(&ck, &rows)?;
    println!("rows {}", report.per_row.len());
    println!("mean nll {:.6}", report.mean);
    println!("mean nll (raw units) {:.6}", report.mean_raw);
    if let Some(path) = &args.per_row {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["row", "nll"])?;
        for (i, v) in report.per_row.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_sample(args: &SampleArgs) -> Result<ExitCode> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let rows = harness::generate(&ck, args.count, args.seed)?;
    harness::write_samples(&args.output, &ck.tickers, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.output.display());
    if rows.len() > 2 * tailflow::eval_metrics::MIN_HILL_K {
        let diag = TailDiagnostics::compute(&rows, None)?;
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        println!("{:<10} {:>10} {:>10} {:>10}", "column", "hill_up", "hill_low", "kurtosis");
        for (j, t) in ck.tickers.iter().enumerate() {
            println!(
                "{:<10} {:>10} {:>10} {:>10.3}",
                t,
                fmt(diag.hill_upper[j]),
                fmt(diag.hill_lower[j]),
                diag.kurtosis[j]
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_check(args: &CheckArgs) -> Result<ExitCode> {
    let results = verify::run_checks(args.seed);
    let mut ok = true;
    for c in &results {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run_synth(args: &SynthArgs) -> Result<ExitCode> {
    let tickers = (0..args.dim).map(|j| format!("S{j:02}")).collect();
    let table = data::synthetic_prices(args.days, tickers, args.nu, args.rho, args.scale, args.seed, args.start)?;
    data::write_prices(&args.output, &table)?;
    // make sure the file is usable as experiment input
    let _ = ReturnsDataset::from_prices(&table, data::DEFAULT_FRACTIONS, 0, None)?;
    println!("wrote {} days x {} tickers to {}", table.len(), table.dim(), args.output.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Eval(a) => run_eval(a),
        Command::Sample(a) => run_sample(a),
        Command::Experiment(a) => run_experiment(a),
        Command::Check(a) => run_check(a),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
