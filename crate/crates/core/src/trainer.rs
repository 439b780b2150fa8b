//! Maximum-likelihood training with Adam and best-validation checkpointing.
//!
//! Convention: gradients are taken of the summed negative log-likelihood of a
//! batch; every reported loss is the per-observation mean.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::flow_model::FlowModel;

/// RNG stream used for batch shuffling; model initialization uses stream 0.
pub const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Global-norm bound on the per-observation gradient; `None` disables.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 1e-3,
            batch_size: 256,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            clip_norm: Some(10.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!(
                "learning rate must be a finite non-negative number, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("Adam betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("Adam epsilon must be positive, got {}", self.epsilon));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn from_config(n: usize, cfg: &TrainConfig) -> Self {
        Self::new(n, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Summed negative log-likelihood.
pub fn nll_sum<R: AsRef<[f64]>>(model: &FlowModel, rows: &[R]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut total = 0.0;
    for r in rows {
        total -= model.log_prob(r.as_ref())?;
    }
    Ok(total)
}

/// Per-observation negative log-likelihood.
pub fn mean_nll<R: AsRef<[f64]>>(model: &FlowModel, rows: &[R]) -> Result<f64> {
    Ok(nll_sum(model, rows)? / rows.len() as f64)
}

/// Summed NLL of `rows` and its gradient with respect to every parameter.
/// The tape is cleared first and left consumed.
pub fn nll_and_gradient<R: AsRef<[f64]>>(model: &FlowModel, rows: &[R], tape: &mut Tape) -> Result<(f64, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    tape.clear();
    let tape: &Tape = tape;
    let n = model.num_params();
    let params: Vec<Var> = model.params().iter().map(|&p| tape.var(p)).collect();
    let mut terms = Vec::with_capacity(rows.len());
    for r in rows {
        let x: Vec<Var> = r.as_ref().iter().map(|&c| Var::constant(c)).collect();
        terms.push(model.log_prob_with(&params, &x)?);
    }
    let loss = -<Var as Scalar>::sum(&terms);
    let grads = tape.backward(loss)?;
    Ok((loss.value(), grads.leading(n).to_vec()))
}

/// Rescales `grads` (a sum over `count` rows) so the per-row gradient norm is
/// at most `max_norm`. Returns whether clipping happened.
pub fn clip_gradient(grads: &mut [f64], count: usize, max_norm: f64) -> bool {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt() / count as f64;
    if norm > max_norm {
        let f = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= f);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batches, taken while parameters were moving.
    pub train_nll: f64,
    pub val_nll: f64,
    pub clipped_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { epoch: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_nll: Option<f64>,
    pub test_nll: Option<f64>,
    pub status: RunStatus,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn is_failed(&self) -> bool {
        matches!(self.status, RunStatus::Failed { .. })
    }
}

/// Trains for exactly `cfg.epochs` epochs, keeping the parameters with the
/// lowest validation NLL. On return the model holds those parameters and the
/// test NLL (if a test set is given) is measured on them.
///
/// A non-finite loss ends the run with [`RunStatus::Failed`]; the model then
/// holds the best parameters seen before the failure.
pub fn fit<R: AsRef<[f64]>>(model: &mut FlowModel, train: &[R], val: &[R], test: Option<&[R]>, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation sets must be non-empty".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut adam = Adam::from_config(model.num_params(), cfg);
    let mut tape = Tape::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut status = RunStatus::Completed;

    'outer: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut clipped = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| train[i].as_ref()).collect();
            let outcome = nll_and_gradient(model, &batch, &mut tape);
            let (loss, mut grads) = match outcome {
                Ok((l, g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => (l, g),
                Ok(_) => {
                    status = failed(epoch, "non-finite training loss or gradient".into());
                    break 'outer;
                }
                Err(e) => {
                    status = failed(epoch, e.to_string());
                    break 'outer;
                }
            };
            if let Some(c) = cfg.clip_norm {
                clipped += usize::from(clip_gradient(&mut grads, batch.len(), c));
            }
            adam.step(model.params_mut(), &grads);
            total += loss;
        }
        let train_nll = total / train.len() as f64;
        let val_nll = match mean_nll(model, val) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                status = failed(epoch, "non-finite validation loss".into());
                break;
            }
            Err(e) => {
                status = failed(epoch, e.to_string());
                break;
            }
        };
        log::debug!("epoch {epoch}: train {train_nll:.6} val {val_nll:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_nll,
            val_nll,
            clipped_batches: clipped,
        });
        if best.as_ref().is_none_or(|b| val_nll < b.1) {
            best = Some((epoch, val_nll, model.params().to_vec()));
        }
    }

    let (best_epoch, best_val_nll) = match best {
        Some((e, v, params)) => {
            model.params_mut().copy_from_slice(&params);
            (Some(e), Some(v))
        }
        None => (None, None),
    };
    let test_nll = match (test, &status) {
        (Some(t), RunStatus::Completed) if !t.is_empty() => match mean_nll(model, t) {
            Ok(v) if v.is_finite() => Some(v),
            Ok(_) => {
                status = failed(cfg.epochs, "non-finite test loss".into());
                None
            }
            Err(e) => {
                status = failed(cfg.epochs, e.to_string());
                None
            }
        },
        _ => None,
    };
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_nll,
        test_nll,
        status,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

fn failed(epoch: usize, reason: String) -> RunStatus {
    log::warn!("training failed at epoch {epoch}: {reason}");
    RunStatus::Failed { epoch, reason }
}
