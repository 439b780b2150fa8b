use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow_model::Variant;
use crate::trainer::TrainReport;

/// Outcome of one (variant, repeat) training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub variant: Variant,
    pub repeat: usize,
    pub seed: u64,
    pub dim: usize,
    pub test_nll: Option<f64>,
    /// Test NLL in the units of the unstandardized returns.
    pub test_nll_raw: Option<f64>,
    pub report: TrainReport,
}

impl RepeatResult {
    pub fn failure_reason(&self) -> Option<&str> {
        match &self.report.status {
            crate::trainer::RunStatus::Failed { reason, .. } => Some(reason),
            crate::trainer::RunStatus::Completed => None,
        }
    }
}

/// Aggregate over the repeats of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub dim: usize,
    pub repeats: usize,
    pub failures: usize,
    /// Mean over successful repeats.
    pub mean_test_nll: Option<f64>,
    /// Sample standard deviation / sqrt(successes); `None` below two successes.
    pub std_err: Option<f64>,
    pub mean_test_nll_raw: Option<f64>,
    pub per_repeat: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<SummaryRow>,
}

/// `(mean, standard error)` with the conventions of [`SummaryRow`].
pub fn mean_and_std_err(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

impl ResultTable {
    /// Groups results by variant in first-seen order; repeats sorted by index.
    pub fn from_results(results: &[RepeatResult]) -> Self {
        let mut variants: Vec<Variant> = Vec::new();
        for r in results {
            if !variants.contains(&r.variant) {
                variants.push(r.variant);
            }
        }
        let rows = variants
            .into_iter()
            .map(|v| {
                let mut runs: Vec<&RepeatResult> = results.iter().filter(|r| r.variant == v).collect();
                runs.sort_by_key(|r| r.repeat);
                let ok: Vec<f64> = runs.iter().filter_map(|r| r.test_nll).collect();
                let ok_raw: Vec<f64> = runs.iter().filter_map(|r| r.test_nll_raw).collect();
                let (mean, std_err) = mean_and_std_err(&ok);
                SummaryRow {
                    variant: v,
                    dim: runs[0].dim,
                    repeats: runs.len(),
                    failures: runs.len() - ok.len(),
                    mean_test_nll: mean,
                    std_err,
                    mean_test_nll_raw: mean_and_std_err(&ok_raw).0,
                    per_repeat: runs.iter().map(|r| r.test_nll).collect(),
                }
            })
            .collect();
        Self { rows }
    }

    pub fn row(&self, v: Variant) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    /// Fixed-width human-readable table.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.p$}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<7} {:>4} {:>8} {:>7} {:>14} {:>10} {:>14}",
            "flow", "d", "repeats", "failed", "test_nll", "std_err", "test_nll_raw"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<7} {:>4} {:>8} {:>7} {:>14} {:>10} {:>14}",
                r.variant.to_string(),
                r.dim,
                r.repeats,
                r.failures,
                opt(r.mean_test_nll, 4),
                opt(r.std_err, 4),
                opt(r.mean_test_nll_raw, 4)
            );
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "variant",
            "dim",
            "repeats",
            "failures",
            "mean_test_nll",
            "std_err",
            "mean_test_nll_raw",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.variant.key().to_string(),
                r.dim.to_string(),
                r.repeats.to_string(),
                r.failures.to_string(),
                fmt_opt(r.mean_test_nll),
                fmt_opt(r.std_err),
                fmt_opt(r.mean_test_nll_raw),
            ])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }
}

/// Shortest round-trip representation; empty when absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn per_repeat_csv(results: &[RepeatResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant",
        "dim",
        "repeat",
        "seed",
        "status",
        "best_epoch",
        "best_val_nll",
        "test_nll",
        "test_nll_raw",
        "reason",
    ])?;
    for r in results {
        w.write_record([
            r.variant.key().to_string(),
            r.dim.to_string(),
            r.repeat.to_string(),
            r.seed.to_string(),
            if r.report.is_failed() { "failed" } else { "ok" }.to_string(),
            r.report.best_epoch.map_or_else(String::new, |e| e.to_string()),
            fmt_opt(r.report.best_val_nll),
            fmt_opt(r.test_nll),
            fmt_opt(r.test_nll_raw),
            r.failure_reason().unwrap_or("").to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

pub fn curves_csv(results: &[RepeatResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "repeat", "epoch", "train_nll", "val_nll", "clipped_batches"])?;
    for r in results {
        for e in &r.report.epochs {
            w.write_record([
                r.variant.key().to_string(),
                r.repeat.to_string(),
                e.epoch.to_string(),
                e.train_nll.to_string(),
                e.val_nll.to_string(),
                e.clipped_batches.to_string(),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

pub fn timings_csv(results: &[RepeatResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "repeat", "wall_clock_secs"])?;
    for r in results {
        w.write_record([
            r.variant.key().to_string(),
            r.repeat.to_string(),
            format!("{:.3}", r.report.wall_clock_secs),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

/// Rebuilds the table from a `per_repeat.csv` file.
pub fn table_from_per_repeat(path: impl AsRef<Path>) -> Result<ResultTable> {
    let bytes = fs::read(path)?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let mut results = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Option<f64> { Some(field(i)).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok()) };
        let int = |i: usize, what: &str| -> Result<u64> {
            field(i)
                .parse()
                .map_err(|_| crate::Error::Data(format!("bad {what} '{}'", field(i))))
        };
        let status = match field(4) {
            "failed" => crate::trainer::RunStatus::Failed {
                epoch: 0,
                reason: field(9).to_string(),
            },
            _ => crate::trainer::RunStatus::Completed,
        };
        let test = num(7);
        results.push(RepeatResult {
            variant: field(0).parse()?,
            dim: int(1, "dim")? as usize,
            repeat: int(2, "repeat")? as usize,
            seed: int(3, "seed")?,
            test_nll: test,
            test_nll_raw: num(8),
            report: TrainReport {
                epochs: vec![],
                best_epoch: Some(field(5)).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok()),
                best_val_nll: num(6),
                test_nll: test,
                status,
                wall_clock_secs: 0.0,
            },
        });
    }
    Ok(ResultTable::from_results(&results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_has_no_std_err() {
        assert_eq!(mean_and_std_err(&[2.0]), (Some(2.0), None));
        let (m, s) = mean_and_std_err(&[1.0, 2.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_std_err(&[]), (None, None));
    }
}
