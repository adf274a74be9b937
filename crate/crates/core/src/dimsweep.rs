//! Cross-validated reconstruction error as a function of the latent size,
//! and the intrinsic-dimension estimate read off that curve.

use serde::{Deserialize, Serialize};

use crate::autoenc::{train, AeArchitecture, TrainConfig};
use crate::dataio::{kfold, Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, Rng};
use crate::pca::fit_pca;
use crate::reducer::{Method, Reducer};

/// Error level of the trivial all-zero reconstruction of normalized data.
pub const BASELINE_MSE: f64 = 1.0;
pub const DEFAULT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub folds: usize,
    pub seed: u64,
    /// Autoencoder hidden widths per side; `None` uses the default rule.
    pub hidden: Option<Vec<usize>>,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            folds: 5,
            seed: 0,
            hidden: None,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub dim: usize,
    pub fraction: f64,
    /// True when no p reached the fraction and the elbow rule decided.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub method: Method,
    pub p_values: Vec<usize>,
    pub mse_mean: Vec<f64>,
    pub mse_min: Vec<f64>,
    pub mse_std: Vec<f64>,
    /// `mse[p_index][fold]`.
    pub fold_mse: Vec<Vec<f64>>,
    pub estimated_dim: Option<DimEstimate>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,mse_min,mse_mean,mse_std,method\n");
        for i in 0..self.p_values.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.p_values[i], self.mse_min[i], self.mse_mean[i], self.mse_std[i], self.method
            ));
        }
        out
    }
}

/// Architecture used for latent size `p` on `m` columns.
pub fn sweep_architecture(m: usize, p: usize, hidden: Option<&[usize]>) -> Result<AeArchitecture> {
    match hidden {
        Some(h) => AeArchitecture::symmetric(m, h, p),
        None => AeArchitecture::default_for(m, p),
    }
}

/// Fits `method` for every `p` on every fold and records the held-out MSE.
///
/// The normalizer is refit on each training split. Each (p, fold) cell has
/// its own derived seed, so cells can be evaluated in any order.
pub fn sweep(data: &Dataset, method: Method, p_values: &[usize], cfg: &SweepConfig) -> Result<SweepResult> {
    let m = data.m();
    if p_values.is_empty() {
        return Err(Error::param("sweep needs at least one p"));
    }
    if p_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("p values must be strictly increasing"));
    }
    if p_values[0] == 0 || *p_values.last().unwrap() > m {
        return Err(Error::param(format!("p values must lie in [1, {m}]")));
    }
    if cfg.folds < 2 {
        return Err(Error::param(format!("sweep needs at least 2 folds, got {}", cfg.folds)));
    }
    let plan = kfold(data.n(), cfg.folds, &mut Rng::derived(cfg.seed, 0))?;
    let splits: Vec<_> = (0..cfg.folds)
        .map(|f| {
            let train_x = data.x().select_rows(&plan.train_indices(f));
            let val_x = data.x().select_rows(&plan.validation_indices(f));
            let norm = Normalizer::fit(&train_x)?;
            Ok((norm.apply(&train_x)?, norm.apply(&val_x)?))
        })
        .collect::<Result<_>>()?;

    let mut fold_mse = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let mut row = Vec::with_capacity(cfg.folds);
        for (fold, (train_x, val_x)) in splits.iter().enumerate() {
            let cell = || -> Result<f64> {
                let model: Reducer = match method {
                    Method::Pca => fit_pca(train_x, p)?.into(),
                    Method::Ae => {
                        let arch = sweep_architecture(m, p, cfg.hidden.as_deref())?;
                        let tc = TrainConfig {
                            seed: derive_seed(derive_seed(cfg.seed, 1 + p as u64), fold as u64),
                            ..cfg.train.clone()
                        };
                        train(train_x, &arch, &tc)?.into()
                    }
                };
                val_x.mean_squared_error(&model.reconstruct(val_x)?)
            };
            row.push(cell().map_err(|e| Error::Sweep {
                p,
                fold,
                source: Box::new(e),
            })?);
        }
        fold_mse.push(row);
    }

    let k = cfg.folds as f64;
    let mse_mean: Vec<f64> = fold_mse.iter().map(|r| r.iter().sum::<f64>() / k).collect();
    let mse_min = fold_mse.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let mse_std = fold_mse
        .iter()
        .zip(&mse_mean)
        .map(|(r, mean)| (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k).sqrt())
        .collect();
    let mut result = SweepResult {
        method,
        p_values: p_values.to_vec(),
        mse_mean,
        mse_min,
        mse_std,
        fold_mse,
        estimated_dim: None,
    };
    result.estimated_dim = estimate_dim(&result, DEFAULT_FRACTION).ok();
    Ok(result)
}

/// Smallest p whose best-fold MSE drops below `fraction` of the baseline.
/// Without such a p, picks the largest second difference of `ln mse` and
/// flags the estimate as a fallback.
pub fn estimate_dim(sweep: &SweepResult, fraction: f64) -> Result<DimEstimate> {
    if !(fraction > 0.0 && fraction.is_finite()) {
        return Err(Error::param(format!("fraction must be positive, got {fraction}")));
    }
    let ps = &sweep.p_values;
    if ps.is_empty() || ps[0] == 0 || ps.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Estimation("p values must form a contiguous range starting at >= 1".into()));
    }
    if let Some(i) = sweep.mse_min.iter().position(|&v| v / BASELINE_MSE < fraction) {
        return Ok(DimEstimate {
            dim: ps[i],
            fraction,
            fallback: false,
        });
    }
    if ps.len() < 3 {
        return Err(Error::Estimation(format!(
            "no p reaches {fraction} of the baseline and {} points are too few for the elbow rule",
            ps.len()
        )));
    }
    let logs: Vec<f64> = sweep.mse_min.iter().map(|v| v.ln()).collect();
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..logs.len() - 1 {
        let curvature = logs[i - 1] - 2.0 * logs[i] + logs[i + 1];
        if curvature > best.1 {
            best = (i, curvature);
        }
    }
    Ok(DimEstimate {
        dim: ps[best.0],
        fraction,
        fallback: true,
    })
}
