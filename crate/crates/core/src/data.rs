//! Price ingestion, log returns and the temporal train/validation/test split.

use std::fs;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_ROWS: usize = 10;
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.4, 0.2, 0.4];

/// Closing prices, one row per date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub prices: Vec<Vec<f64>>,
}

impl PriceTable {
    /// Checks: rows match dates, each row has one price per ticker, dates
    /// strictly increasing, prices finite and positive.
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: Vec<Vec<f64>>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::Data(format!("{} dates but {} price rows", dates.len(), prices.len())));
        }
        if tickers.is_empty() {
            return Err(Error::Data("no ticker columns".into()));
        }
        for (row, date) in prices.iter().zip(&dates) {
            if row.len() != tickers.len() {
                return Err(Error::Data(format!(
                    "row {date} has {} prices for {} tickers",
                    row.len(),
                    tickers.len()
                )));
            }
            for (p, t) in row.iter().zip(&tickers) {
                if !(p.is_finite() && *p > 0.0) {
                    return Err(Error::Data(format!("non-positive or non-finite price {p} for {t} on {date}")));
                }
            }
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Data(format!("dates not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self { dates, tickers, prices })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tickers.len()
    }

    /// Keeps the named columns in the requested order.
    pub fn select(&self, tickers: &[String]) -> Result<PriceTable> {
        let cols = tickers
            .iter()
            .map(|t| {
                self.tickers
                    .iter()
                    .position(|c| c.eq_ignore_ascii_case(t))
                    .ok_or_else(|| Error::Data(format!("ticker '{t}' not in table")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PriceTable {
            dates: self.dates.clone(),
            tickers: cols.iter().map(|&c| self.tickers[c].clone()).collect(),
            prices: self.prices.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
        })
    }

    /// First `d` columns.
    pub fn leading(&self, d: usize) -> Result<PriceTable> {
        if d == 0 || d > self.dim() {
            return Err(Error::Data(format!("requested {d} columns from a table with {}", self.dim())));
        }
        self.select(&self.tickers[..d])
    }
}

fn sniff_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else if header.contains(';') && !header.contains(',') {
        b';'
    } else {
        b','
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = s.split(['T', ' ']).next().unwrap_or(s);
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "nan" | "null" | "none" | "-"
    )
}

/// Reads a wide price table: header `date,TICKER1,TICKER2,...`, one ISO date
/// per row. Comma, semicolon and tab delimiters are recognised. Rows with a
/// missing price are dropped; rows are sorted by date.
pub fn load_prices(path: impl AsRef<Path>) -> Result<PriceTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let header = text
        .lines()
        .next()
        .filter(|l| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(header))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let tickers: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_string).collect();
    if tickers.is_empty() {
        return Err(parse_err(1, "header needs a date column and at least one ticker".into()));
    }

    let mut rows: Vec<(NaiveDate, Vec<f64>, u64)> = Vec::new();
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if record.len() != tickers.len() + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", tickers.len() + 1, record.len()),
            ));
        }
        let date = parse_date(&record[0]).ok_or_else(|| parse_err(line, format!("bad date '{}'", &record[0])))?;
        if record.iter().skip(1).any(is_missing) {
            dropped += 1;
            continue;
        }
        let prices = record
            .iter()
            .skip(1)
            .zip(&tickers)
            .map(|(c, t)| {
                c.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("bad price '{c}' for {t}")))
                    .and_then(|p| {
                        if p.is_finite() && p > 0.0 {
                            Ok(p)
                        } else {
                            Err(parse_err(line, format!("non-positive price {p} for {t} on {date}")))
                        }
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((date, prices, line));
    }
    if dropped > 0 {
        log::info!("{}: dropped {dropped} rows with missing prices", path.display());
    }
    if rows.is_empty() {
        return Err(parse_err(2, "no complete price rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(w[1].2, format!("duplicate date {}", w[1].0)));
    }
    let (dates, prices) = rows.into_iter().map(|(d, p, _)| (d, p)).unzip();
    PriceTable::new(dates, tickers, prices)
}

/// Writes the table in the format read by [`load_prices`]; prices use the
/// shortest representation that round-trips.
pub fn write_prices(path: impl AsRef<Path>, table: &PriceTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(table.tickers.iter().cloned());
    w.write_record(&header)?;
    for (date, row) in table.dates.iter().zip(&table.prices) {
        let mut rec = vec![date.format("%Y-%m-%d").to_string()];
        rec.extend(row.iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Row `j` is `ln(S_{j+1} / S_j)` per column.
pub fn log_returns(table: &PriceTable) -> Result<Vec<Vec<f64>>> {
    for (row, date) in table.prices.iter().zip(&table.dates) {
        for (p, t) in row.iter().zip(&table.tickers) {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::Data(format!("non-positive price {p} for {t} on {date}")));
            }
        }
    }
    Ok(table
        .prices
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| (b / a).ln()).collect())
        .collect())
}

/// Row indices of the three parts; all sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Last row index allowed in train or validation.
    pub cutoff: usize,
}

impl Split {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    if fractions[0] <= 0.0 || fractions[1] <= 0.0 || fractions[2] <= 0.0 {
        return Err(Error::Config(format!("every split fraction must be positive, got {fractions:?}")));
    }
    Ok(())
}

/// Last `round(n·f_test)` rows form the test set; the earlier rows are
/// shuffled with `seed` and divided between train and validation in the ratio
/// `f_train : f_val`.
pub fn temporal_split(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split> {
    check_fractions(fractions)?;
    if n < MIN_ROWS {
        return Err(Error::Data(format!("need at least {MIN_ROWS} rows to split, got {n}")));
    }
    let n_test = ((n as f64) * fractions[2]).round() as usize;
    split_before(n, n - n_test, fractions, seed)
}

/// Like [`temporal_split`] but with the test set starting at row `first_test`.
pub fn split_before(n: usize, first_test: usize, fractions: [f64; 3], seed: u64) -> Result<Split> {
    check_fractions(fractions)?;
    if n < MIN_ROWS {
        return Err(Error::Data(format!("need at least {MIN_ROWS} rows to split, got {n}")));
    }
    if first_test < 2 || first_test >= n {
        return Err(Error::Data(format!("cutoff leaves {first_test} pre-test rows out of {n}")));
    }
    let share = fractions[0] / (fractions[0] + fractions[1]);
    let n_train = (((first_test as f64) * share).round() as usize).clamp(1, first_test - 1);
    let mut early: Vec<usize> = (0..first_test).collect();
    early.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = early[..n_train].to_vec();
    let mut val = early[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split {
        train,
        val,
        test: (first_test..n).collect(),
        cutoff: first_test - 1,
    })
}

/// Cutoff override by date: rows dated after `cutoff` are test rows.
pub fn split_at_date(dates: &[NaiveDate], cutoff: NaiveDate, fractions: [f64; 3], seed: u64) -> Result<Split> {
    let first_test = dates.partition_point(|d| *d <= cutoff);
    split_before(dates.len(), first_test, fractions, seed)
}

/// Per-column affine standardization fitted on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Data("need at least two rows to standardize".into()));
        }
        let d = rows[0].as_ref().len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.as_ref()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *s += (v - m) * (v - m) / (n - 1.0);
            }
        }
        let scale: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        if let Some(j) = scale.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Data(format!("column {j} has zero or non-finite spread")));
        }
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| m + s * v)
            .collect()
    }

    /// `Σ ln scale`: add to a standardized-space NLL to get raw-space NLL.
    pub fn log_scale_sum(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }
}

/// Log returns with their dates and a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsDataset {
    pub tickers: Vec<String>,
    /// Date of the later price in each return.
    pub dates: Vec<NaiveDate>,
    pub x: Vec<Vec<f64>>,
    pub split: Split,
}

impl ReturnsDataset {
    pub fn from_prices(table: &PriceTable, fractions: [f64; 3], seed: u64, cutoff: Option<NaiveDate>) -> Result<Self> {
        let x = log_returns(table)?;
        let dates = table.dates[1..].to_vec();
        let split = match cutoff {
            Some(c) => split_at_date(&dates, c, fractions, seed)?,
            None => temporal_split(x.len(), fractions, seed)?,
        };
        Ok(Self {
            tickers: table.tickers.clone(),
            dates,
            x,
            split,
        })
    }

    /// Undated i.i.d. rows, split as if they were a time series.
    pub fn from_rows(x: Vec<Vec<f64>>, fractions: [f64; 3], seed: u64) -> Result<Self> {
        let d = x.first().map_or(0, Vec::len);
        let split = temporal_split(x.len(), fractions, seed)?;
        Ok(Self {
            tickers: (0..d).map(|j| format!("x{j}")).collect(),
            dates: Vec::new(),
            x,
            split,
        })
    }

    pub fn dim(&self) -> usize {
        self.tickers.len()
    }

    pub fn cutoff_date(&self) -> Option<NaiveDate> {
        self.dates.get(self.split.cutoff).copied()
    }

    pub fn rows(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter().map(|&i| self.x[i].clone()).collect()
    }

    pub fn resplit(&self, fractions: [f64; 3], seed: u64) -> Result<Self> {
        let split = split_before(self.x.len(), self.split.cutoff + 1, fractions, seed)?;
        Ok(Self { split, ..self.clone() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Multivariate Student-T rows: AR(1)-correlated Gaussians (`corr(i, j) =
/// rho^|i-j|`) divided by one shared `sqrt(χ²_ν/ν)`, times `scale`.
pub fn correlated_student_t(n: usize, dim: usize, nu: f64, rho: f64, scale: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(nu > 0.0) || !(rho.abs() < 1.0) || !(scale > 0.0) || dim == 0 {
        return Err(Error::Config(format!(
            "invalid generator settings: nu={nu}, rho={rho}, scale={scale}, dim={dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chi = ChiSquared::new(nu).map_err(|e| Error::Config(e.to_string()))?;
    let innov = (1.0 - rho * rho).sqrt();
    Ok((0..n)
        .map(|_| {
            let w = (chi.sample(&mut rng) / nu).sqrt();
            let mut prev = 0.0;
            (0..dim)
                .map(|j| {
                    let e: f64 = rng.sample(StandardNormal);
                    prev = if j == 0 { e } else { rho * prev + innov * e };
                    scale * prev / w
                })
                .collect()
        })
        .collect())
}

/// Prices starting at 100 whose log returns are [`correlated_student_t`]
/// draws, dated on consecutive weekdays from `start`.
pub fn synthetic_prices(
    days: usize,
    tickers: Vec<String>,
    nu: f64,
    rho: f64,
    scale: f64,
    seed: u64,
    start: NaiveDate,
) -> Result<PriceTable> {
    let returns = correlated_student_t(days.saturating_sub(1), tickers.len(), nu, rho, scale, seed)?;
    let mut dates = Vec::with_capacity(days);
    let mut day = start;
    while dates.len() < days {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(day);
        }
        day += Duration::days(1);
    }
    let mut log_p = vec![100f64.ln(); tickers.len()];
    let mut prices = Vec::with_capacity(days);
    if days > 0 {
        prices.push(vec![100.0; tickers.len()]);
    }
    for r in &returns {
        for (lp, v) in log_p.iter_mut().zip(r) {
            *lp += v;
        }
        prices.push(log_p.iter().map(|v| v.exp()).collect());
    }
    PriceTable::new(dates, tickers, prices)
}
