//! Mini-batch AdamW training with a fixed reduction order.

use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::ModelParams;
use crate::encode::Sample;
use crate::error::{Error, Result};
use crate::metric::{loss_with_grad, sample_loss};
use crate::model::Model;

/// Samples per parallel task; the per-task partial gradients are summed in
/// task order so results do not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
    /// Evaluate the validation loss every this many epochs.
    pub validate_every: usize,
    pub schedule: Schedule,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Constant,
    /// `lr·(1 + cos(π s/S))/2` over the `S` planned steps.
    Cosine,
}

impl std::str::FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "cosine" => Ok(Schedule::Cosine),
            other => Err(format!("unknown schedule {other}, expected constant or cosine")),
        }
    }
}

impl TrainConfig {
    pub fn planned_steps(&self, n_train: usize) -> usize {
        let per_epoch = n_train.div_ceil(self.batch_size.max(1));
        let total = per_epoch * self.epochs;
        self.max_steps.map_or(total, |m| m.min(total))
    }

    pub fn lr_at(&self, step: usize, planned: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.lr,
            Schedule::Cosine => 0.5 * self.lr * (1.0 + (std::f64::consts::PI * step as f64 / planned.max(1) as f64).cos()),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 100,
            batch_size: 64,
            weight_decay: 1e-2,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_steps: None,
            validate_every: 1,
            schedule: Schedule::Constant,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamW {
    pub fn new(n: usize) -> Self {
        AdamW { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    /// Decoupled weight decay followed by the bias-corrected Adam step.
    pub fn update(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig, lr: f64) {
        self.step += 1;
        let b1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let b2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= lr * cfg.weight_decay * *p;
            *p -= lr * (*m / b1) / ((*v / b2).sqrt() + cfg.eps);
        }
    }
}

/// Mean loss and gradient over a batch.
pub fn batch_loss_grad(model: &Model, theta: &[f64], batch: &[&Sample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; theta.len()];
            let mut loss = 0.0;
            for s in chunk {
                let (out, cache) = model.forward_cached(theta, s.input.view())?;
                let (l, d_out) = loss_with_grad(&out, s)?;
                model.backward(theta, &cache, d_out, &mut grad);
                loss += l;
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

pub fn predict(model: &Model, theta: &[f64], sample: &Sample) -> Result<Vec<C64>> {
    Ok(model.operators(&model.forward(theta, sample.input.view())?))
}

pub fn predict_all(model: &Model, theta: &[f64], samples: &[Sample]) -> Result<Vec<Vec<C64>>> {
    samples.par_iter().map(|s| predict(model, theta, s)).collect()
}

pub fn mean_loss(model: &Model, theta: &[f64], samples: &[Sample]) -> Result<f64> {
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| sample_loss(&predict(model, theta, s)?, s))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub optimizer: AdamW,
    pub log: Vec<EpochLog>,
}

/// Runs the epochs, calling `on_epoch` after each one; checkpointing is the
/// caller's business. A non-finite loss or gradient aborts with the last good
/// parameters.
pub fn train(
    model: &Model,
    params: ModelParams,
    mut optimizer: AdamW,
    train_set: &[Sample],
    validation: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &ModelParams, &AdamW) -> Result<()>,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Shape("empty training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Shape("batch size must be positive".into()));
    }
    let mut params = params;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut steps = 0usize;
    let planned = cfg.planned_steps(train_set.len());
    'epochs: for epoch in 0..cfg.epochs {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let diverged = |params: &ModelParams| Error::Divergence { epoch, last_good: Box::new(params.clone()) };
            let (loss, grad) = match batch_loss_grad(model, &params.theta, &batch) {
                Ok(r) => r,
                Err(Error::Forward { .. }) => return Err(diverged(&params)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged(&params));
            }
            optimizer.update(&mut params.theta, &grad, cfg, cfg.lr_at(steps, planned));
            total += loss * batch.len() as f64;
            seen += batch.len();
            steps += 1;
        }
        if seen == 0 {
            break 'epochs;
        }
        let validation_loss = if !validation.is_empty() && cfg.validate_every > 0 && (epoch + 1) % cfg.validate_every == 0 {
            Some(mean_loss(model, &params.theta, validation)?)
        } else {
            None
        };
        let entry = EpochLog { epoch, steps, train_loss: total / seen as f64, validation_loss };
        on_epoch(&entry, &params, &optimizer)?;
        log.push(entry);
    }
    Ok(TrainOutcome { params, optimizer, log })
}
