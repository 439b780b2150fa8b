//! Experiment orchestration: repeats, aggregation, artifacts, and the
//! single-model operations behind the command line.

mod checkpoint;
mod report;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use report::{
    curves_csv, fmt_opt, mean_and_std_err, per_repeat_csv, table_from_per_repeat, timings_csv, RepeatResult, ResultTable, SummaryRow,
};

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, ReturnsDataset, Standardizer};
use crate::error::{Error, Result};
use crate::flow_model::{FlowModel, Variant, VariantOptions};
use crate::trainer::{self, TrainConfig};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "TAILFLOW_OUTPUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Wide closing-price file.
    Prices {
        path: PathBuf,
        /// Columns to keep; otherwise the first `dim` columns (or all).
        tickers: Option<Vec<String>>,
    },
    /// I.i.d. correlated Student-T rows used directly as returns.
    SyntheticT {
        rows: usize,
        nu: f64,
        rho: f64,
        scale: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variants: Vec<Variant>,
    /// Required for synthetic data; optional column count for price files.
    pub dim: Option<usize>,
    pub data: DataSource,
    pub repeats: usize,
    /// `seed` inside is ignored; repeat `r` uses `seed + r`.
    pub train: TrainConfig,
    pub seed: u64,
    /// Worker threads for repeats; 0 lets the pool decide. Never affects results.
    pub jobs: usize,
    pub fractions: [f64; 3],
    /// Draw a fresh train/validation partition for every repeat.
    pub resample_split: bool,
    pub cutoff: Option<NaiveDate>,
    pub standardize: bool,
    pub options: VariantOptions,
    pub save_checkpoints: bool,
}

impl ExperimentConfig {
    pub fn new(variants: Vec<Variant>, data: DataSource) -> Self {
        Self {
            variants,
            dim: None,
            data,
            repeats: 10,
            train: TrainConfig::default(),
            seed: 0,
            jobs: 0,
            fractions: data::DEFAULT_FRACTIONS,
            resample_split: false,
            cutoff: None,
            standardize: true,
            options: VariantOptions::default(),
            save_checkpoints: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("no flow variants requested".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if matches!(self.data, DataSource::SyntheticT { .. }) && self.dim.is_none() {
            return Err(Error::Config("synthetic data needs an explicit dimension".into()));
        }
        self.train.validate()
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add(repeat as u64)
    }
}

/// Loads the configured data and applies the shared split.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<ReturnsDataset> {
    match &cfg.data {
        DataSource::Prices { path, tickers } => {
            let table = data::load_prices(path)?;
            let table = match (tickers, cfg.dim) {
                (Some(t), Some(d)) if t.len() != d => {
                    return Err(Error::Config(format!("{} tickers given but --dim is {d}", t.len())));
                }
                (Some(t), _) => table.select(t)?,
                (None, Some(d)) => table.leading(d)?,
                (None, None) => table,
            };
            ReturnsDataset::from_prices(&table, cfg.fractions, cfg.seed, cfg.cutoff)
        }
        &DataSource::SyntheticT {
            rows,
            nu,
            rho,
            scale,
            seed,
        } => {
            let d = cfg.dim.ok_or_else(|| Error::Config("synthetic data needs a dimension".into()))?;
            let x = data::correlated_student_t(rows, d, nu, rho, scale, seed)?;
            ReturnsDataset::from_rows(x, cfg.fractions, cfg.seed)
        }
    }
}

/// Train, validation and test rows in model space, plus the map used.
pub struct PreparedSplit {
    pub train: Vec<Vec<f64>>,
    pub val: Vec<Vec<f64>>,
    pub test: Vec<Vec<f64>>,
    pub standardizer: Standardizer,
}

pub fn prepare(ds: &ReturnsDataset, standardize: bool) -> Result<PreparedSplit> {
    let train = ds.rows(&ds.split.train);
    let standardizer = if standardize {
        Standardizer::fit(&train)?
    } else {
        Standardizer::identity(ds.dim())
    };
    let map = |idx: &[usize]| ds.rows(idx).iter().map(|r| standardizer.apply(r)).collect::<Vec<_>>();
    Ok(PreparedSplit {
        train: map(&ds.split.train),
        val: map(&ds.split.val),
        test: map(&ds.split.test),
        standardizer,
    })
}

/// One training run: model `variant` initialised and shuffled with `seed`.
pub fn run_repeat(
    variant: Variant,
    repeat: usize,
    seed: u64,
    split: &PreparedSplit,
    train_cfg: &TrainConfig,
    options: VariantOptions,
) -> Result<(RepeatResult, FlowModel)> {
    let dim = split.standardizer.dim();
    let mut model = FlowModel::for_variant(variant, dim, options, seed)?;
    let cfg = TrainConfig { seed, ..train_cfg.clone() };
    let report = trainer::fit(&mut model, &split.train, &split.val, Some(&split.test), &cfg)?;
    let test_nll = report.test_nll;
    let result = RepeatResult {
        variant,
        repeat,
        seed,
        dim,
        test_nll,
        test_nll_raw: test_nll.map(|v| v + split.standardizer.log_scale_sum()),
        report,
    };
    Ok((result, model))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub table: ResultTable,
    pub results: Vec<RepeatResult>,
    pub dataset: ReturnsDataset,
}

/// Runs every (variant, repeat) pair and writes artifacts when `output` is set.
///
/// Individual failures are recorded in the table; the call itself only fails
/// on configuration, data or I/O errors.
pub fn run_experiment(cfg: &ExperimentConfig, output: Option<&Path>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    if let Some(d) = cfg.dim {
        if d != dataset.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: dataset.dim(),
            });
        }
    }
    log::info!(
        "{} rows x {} columns: train {}, validation {}, test {}",
        dataset.x.len(),
        dataset.dim(),
        dataset.split.train.len(),
        dataset.split.val.len(),
        dataset.split.test.len()
    );
    let shared = if cfg.resample_split {
        None
    } else {
        Some(prepare(&dataset, cfg.standardize)?)
    };
    let ckpt_dir = output.filter(|_| cfg.save_checkpoints).map(|o| o.join("checkpoints"));
    if let Some(dir) = &ckpt_dir {
        fs::create_dir_all(dir)?;
    }

    let jobs: Vec<(Variant, usize)> = cfg.variants.iter().flat_map(|&v| (0..cfg.repeats).map(move |r| (v, r))).collect();
    let run = |&(variant, repeat): &(Variant, usize)| -> Result<RepeatResult> {
        let seed = cfg.repeat_seed(repeat);
        let owned;
        let split = match &shared {
            Some(s) => s,
            None => {
                owned = prepare(&dataset.resplit(cfg.fractions, seed)?, cfg.standardize)?;
                &owned
            }
        };
        let (result, model) = run_repeat(variant, repeat, seed, split, &cfg.train, cfg.options)?;
        log::info!(
            "{variant} repeat {repeat}: test nll {}",
            result.test_nll.map_or_else(|| "failed".to_string(), |v| format!("{v:.5}"))
        );
        if let Some(dir) = &ckpt_dir {
            let ck = Checkpoint::new(
                &model,
                dataset.tickers.clone(),
                split.standardizer.clone(),
                seed,
                seed,
                result.report.best_epoch,
            );
            ck.save(dir.join(format!("{}_r{repeat}.json", variant.key())))?;
        }
        Ok(result)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results = pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    let table = ResultTable::from_results(&results);

    if let Some(out) = output {
        write_artifacts(out, cfg, &dataset, &table, &results)?;
    }
    Ok(ExperimentOutcome { table, results, dataset })
}

fn write_artifacts(
    out: &Path,
    cfg: &ExperimentConfig,
    dataset: &ReturnsDataset,
    table: &ResultTable,
    results: &[RepeatResult],
) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    dataset.save(out.join("dataset.json"))?;
    fs::write(out.join("per_repeat.csv"), per_repeat_csv(results)?)?;
    fs::write(out.join("curves.csv"), curves_csv(results)?)?;
    fs::write(out.join("summary.csv"), table.to_csv()?)?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(table)?)?;
    fs::write(out.join("summary.txt"), table.to_text())?;
    fs::write(out.join("timings.csv"), timings_csv(results)?)?;
    Ok(())
}

/// Draws `count` rows from a checkpoint, mapped back to raw return units.
pub fn generate(ck: &Checkpoint, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let model = ck.model()?;
    Ok(model.sample_seeded(count, seed).iter().map(|r| ck.standardizer.invert(r)).collect())
}

pub fn write_samples(path: impl AsRef<Path>, tickers: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(tickers)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a header-plus-rows numeric file as written by [`write_samples`].
pub fn read_returns(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("bad value '{c}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllReport {
    /// Per-row NLL in model (standardized) space.
    pub per_row: Vec<f64>,
    pub mean: f64,
    /// Mean NLL in raw return units.
    pub mean_raw: f64,
}

/// NLL of raw return rows under a checkpoint.
pub fn evaluate(ck: &Checkpoint, rows: &[Vec<f64>]) -> Result<NllReport> {
    let model = ck.model()?;
    if rows.is_empty() {
        return Err(Error::Data("no rows to evaluate".into()));
    }
    let per_row = rows
        .iter()
        .map(|r| {
            if r.len() != model.dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.dim(),
                    got: r.len(),
                });
            }
            Ok(-model.log_prob(&ck.standardizer.apply(r))?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = per_row.iter().sum::<f64>() / per_row.len() as f64;
    Ok(NllReport {
        mean_raw: mean + ck.standardizer.log_scale_sum(),
        per_row,
        mean,
    })
}
