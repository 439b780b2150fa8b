//! Tail diagnostics: Hill estimator, Kolmogorov-Smirnov distance, moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_HILL_K: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tail {
    Upper,
    Lower,
}

/// 1% of `n`, at least [`MIN_HILL_K`].
pub fn default_k(n: usize) -> usize {
    (n / 100).max(MIN_HILL_K)
}

/// Hill estimate from the `k` largest (upper) or most negative (lower)
/// observations: mean of `ln(x_(i) / x_(k+1))` over the top `k`.
pub fn hill_estimator(samples: &[f64], k: usize, tail: Tail) -> Result<f64> {
    if k < MIN_HILL_K {
        return Err(Error::Config(format!("Hill estimator needs k >= {MIN_HILL_K}, got {k}")));
    }
    if k >= samples.len() {
        return Err(Error::Config(format!("k = {k} must be below the sample count {}", samples.len())));
    }
    let mut v: Vec<f64> = match tail {
        Tail::Upper => samples.to_vec(),
        Tail::Lower => samples.iter().map(|x| -x).collect(),
    };
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Data("NaN in samples".into()));
    }
    // partial selection: the k+1 largest end up at the back
    let pivot = v.len() - k - 1;
    v.select_nth_unstable_by(pivot, f64::total_cmp);
    let threshold = v[pivot];
    if !(threshold > 0.0) {
        return Err(Error::Data(format!(
            "the (k+1)-th largest {} observation is {threshold}; the Hill estimator needs it positive",
            match tail {
                Tail::Upper => "upper",
                Tail::Lower => "lower",
            }
        )));
    }
    let lt = threshold.ln();
    // fixed summation order, independent of the input order
    v[pivot + 1..].sort_unstable_by(f64::total_cmp);
    Ok(v[pivot + 1..].iter().map(|x| x.ln() - lt).sum::<f64>() / k as f64)
}

/// `sup |F_n - F|` evaluated on both sides of every sample point.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x).clamp(0.0, 1.0);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov critical value `c(α)/√n`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample kurtosis `m4 / m2²` (3 for a Gaussian).
pub fn kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(a, b), v| {
        let d = (v - m) * (v - m);
        (a + d, b + d * d)
    });
    let n = x.len() as f64;
    (m4 / n) / (m2 / n).powi(2)
}

/// Per-dimension tail summary of a sample matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostics {
    pub k: usize,
    pub top_fraction: f64,
    /// `None` where the estimator was undefined.
    pub hill_upper: Vec<Option<f64>>,
    pub hill_lower: Vec<Option<f64>>,
    pub kurtosis: Vec<f64>,
}

impl TailDiagnostics {
    pub fn compute<R: AsRef<[f64]>>(rows: &[R], k: Option<usize>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Data("no samples".into()));
        }
        let d = rows[0].as_ref().len();
        let k = k.unwrap_or_else(|| default_k(n));
        let mut out = Self {
            k,
            top_fraction: k as f64 / n as f64,
            hill_upper: Vec::with_capacity(d),
            hill_lower: Vec::with_capacity(d),
            kurtosis: Vec::with_capacity(d),
        };
        for j in 0..d {
            let col: Vec<f64> = rows.iter().map(|r| r.as_ref()[j]).collect();
            out.hill_upper.push(hill_estimator(&col, k, Tail::Upper).ok());
            out.hill_lower.push(hill_estimator(&col, k, Tail::Lower).ok());
            out.kurtosis.push(kurtosis(&col));
        }
        Ok(out)
    }
}
