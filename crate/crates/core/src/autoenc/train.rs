use serde::{Deserialize, Serialize};

use super::arch::AeArchitecture;
use super::network::{AeModel, EpochLog, Gradients};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

// Rng streams derived from the master seed.
const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_EPOCH_BASE: u64 = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::param("patience, batch size and max epochs must be >= 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::param(format!(
                "validation fraction must be in (0,1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

struct Adam {
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn update(&mut self, model: &mut AeModel, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let (weights, biases) = model.params_mut();
        let params = weights
            .iter_mut()
            .zip(biases.iter_mut())
            .flat_map(|(w, b)| [w.data_mut(), b.as_mut_slice()]);
        let gs = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| [w.data(), b.as_slice()]);
        let mut offset = 0;
        for (p, g) in params.zip(gs) {
            let m = &mut self.m[offset..offset + p.len()];
            let v = &mut self.v[offset..offset + p.len()];
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
            offset += p.len();
        }
    }
}

/// Trains an autoencoder on normalized rows with Adam and early stopping.
///
/// A `validation_fraction` share of the rows is held out; training stops
/// after `patience` epochs without a new best validation MSE and the best
/// parameters are returned.
pub fn train(train_x: &Matrix, arch: &AeArchitecture, cfg: &TrainConfig) -> Result<AeModel> {
    cfg.validate()?;
    let n = train_x.rows();
    if train_x.cols() != arch.input_dim() {
        return Err(Error::shape(format!(
            "architecture expects {} columns, data has {}",
            arch.input_dim(),
            train_x.cols()
        )));
    }
    if n < cfg.batch_size.max(2) {
        return Err(Error::InsufficientData {
            needed: cfg.batch_size.max(2),
            got: n,
        });
    }
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let order = Rng::derived(cfg.seed, STREAM_SPLIT).permutation(n);
    let (mut val_idx, mut fit_idx) = (order[..n_val].to_vec(), order[n_val..].to_vec());
    val_idx.sort_unstable();
    fit_idx.sort_unstable();
    let fit_x = train_x.select_rows(&fit_idx);
    let val_x = train_x.select_rows(&val_idx);

    let mut model = AeModel::init(arch, &mut Rng::derived(cfg.seed, STREAM_INIT));
    let mut adam = Adam::new(arch.n_params());
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = None;
    let mut since_best = 0;
    let mut log = Vec::new();
    let batch = cfg.batch_size.min(fit_x.rows());
    let mut rows: Vec<usize> = (0..fit_x.rows()).collect();

    for epoch in 1..=cfg.max_epochs {
        Rng::derived(cfg.seed, STREAM_EPOCH_BASE + epoch as u64).shuffle(&mut rows);
        for chunk in rows.chunks(batch) {
            let xb = fit_x.select_rows(chunk);
            let (loss, grads) = model.loss_and_gradients(&xb);
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("batch loss became {loss}"),
                });
            }
            adam.update(&mut model, &grads, cfg.learning_rate);
        }
        let diverged = |what: &str, e: Error| Error::Training {
            epoch,
            message: format!("{what} not finite: {e}"),
        };
        let train_mse = model.loss(&fit_x).map_err(|e| diverged("training loss", e))?;
        let val_mse = model.loss(&val_x).map_err(|e| diverged("validation loss", e))?;
        log.push(EpochLog {
            epoch,
            train_mse,
            val_mse,
        });
        if val_mse < best_val {
            best_val = val_mse;
            best = model.clone();
            best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    best.set_training_record(log, best_epoch);
    Ok(best)
}
