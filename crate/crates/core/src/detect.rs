//! Two-phase anomaly detection: reconstruction error against a calibrated
//! threshold, optionally OR-ed with a detector working in the latent space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{row_mse, squared_distance, Matrix, Rng};
use crate::reducer::Reducer;

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-8;
pub const KMEANS_RESTARTS: u64 = 5;

/// Per-row mean squared reconstruction error (averaged over the m columns).
pub fn reconstruction_scores(model: &Reducer, x: &Matrix) -> Result<Vec<f64>> {
    row_mse(x, &model.reconstruct(x)?)
}

/// Nearest-rank empirical quantile: the `⌈q·n⌉`-th smallest score.
pub fn calibrate_threshold(scores: &[f64], q: f64) -> Result<f64> {
    check_quantile(q)?;
    if scores.is_empty() {
        return Err(Error::param("cannot calibrate a threshold on zero scores"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN among calibration scores".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(nearest_rank(&sorted, q))
}

fn check_quantile(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param(format!("quantile must be in (0,1), got {q}")));
    }
    Ok(())
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    // The small slack keeps products like 0.999·1000 from rounding up a rank.
    let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstPhaseDetector {
    model: Reducer,
    mse_threshold: f64,
    threshold_quantile: f64,
}

impl FirstPhaseDetector {
    /// Calibrates the MSE threshold on the (normalized) training rows.
    pub fn fit(model: Reducer, train_x: &Matrix, q: f64) -> Result<Self> {
        let scores = reconstruction_scores(&model, train_x)?;
        let mse_threshold = calibrate_threshold(&scores, q)?;
        Ok(FirstPhaseDetector {
            model,
            mse_threshold,
            threshold_quantile: q,
        })
    }

    pub fn with_threshold(model: Reducer, mse_threshold: f64) -> Result<Self> {
        if !(mse_threshold >= 0.0 && mse_threshold.is_finite()) {
            return Err(Error::param(format!("threshold must be finite and >= 0, got {mse_threshold}")));
        }
        Ok(FirstPhaseDetector {
            model,
            mse_threshold,
            threshold_quantile: f64::NAN,
        })
    }

    pub fn model(&self) -> &Reducer {
        &self.model
    }

    pub fn mse_threshold(&self) -> f64 {
        self.mse_threshold
    }

    pub fn threshold_quantile(&self) -> f64 {
        self.threshold_quantile
    }
}

/// Which latent-space detector to fit, as parsed from `kind[:key=value,...]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SecondPhaseSpec {
    /// Distance to the k-th nearest training point.
    Knn { k: usize },
    /// Distance to the nearest of k centroids.
    Kmeans { k: usize, seed: u64 },
    /// Largest excursion beyond per-dimension quantile bounds.
    Hypercube,
}

impl FromStr for SecondPhaseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut k = None;
        let mut seed = None;
        for pair in rest.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in {s:?}, got {pair:?}")))?;
            let parsed: u64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key} must be a non-negative integer, got {value:?}")))?;
            match (kind, key.trim()) {
                ("knn" | "kmeans", "k") => k = Some(parsed as usize),
                ("kmeans", "seed") => seed = Some(parsed),
                _ => return Err(Error::Config(format!("unknown parameter {key:?} for {kind:?}"))),
            }
        }
        let spec = match kind.trim() {
            "knn" => SecondPhaseSpec::Knn { k: k.unwrap_or(1) },
            "kmeans" => SecondPhaseSpec::Kmeans {
                k: k.unwrap_or(9),
                seed: seed.unwrap_or(0),
            },
            "hypercube" => SecondPhaseSpec::Hypercube,
            other => {
                return Err(Error::Config(format!(
                    "unknown second phase {other:?}, expected knn, kmeans or hypercube"
                )))
            }
        };
        if matches!(spec, SecondPhaseSpec::Knn { k: 0 } | SecondPhaseSpec::Kmeans { k: 0, .. }) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(spec)
    }
}

impl fmt::Display for SecondPhaseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SecondPhaseSpec::Knn { k } => write!(f, "knn:k={k}"),
            SecondPhaseSpec::Kmeans { k, seed } => write!(f, "kmeans:k={k},seed={seed}"),
            SecondPhaseSpec::Hypercube => f.write_str("hypercube"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SecondState {
    Knn { points: Matrix, k: usize },
    Kmeans { centroids: Matrix },
    Hypercube { low: Vec<f64>, high: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondPhaseDetector {
    spec: SecondPhaseSpec,
    state: SecondState,
    score_threshold: f64,
    threshold_quantile: f64,
}

impl SecondPhaseDetector {
    pub fn spec(&self) -> SecondPhaseSpec {
        self.spec
    }

    pub fn latent_dim(&self) -> usize {
        match &self.state {
            SecondState::Knn { points, .. } => points.cols(),
            SecondState::Kmeans { centroids } => centroids.cols(),
            SecondState::Hypercube { low, .. } => low.len(),
        }
    }

    pub fn score_threshold(&self) -> f64 {
        self.score_threshold
    }

    pub fn threshold_quantile(&self) -> f64 {
        self.threshold_quantile
    }

    pub fn centroids(&self) -> Option<&Matrix> {
        match &self.state {
            SecondState::Kmeans { centroids } => Some(centroids),
            _ => None,
        }
    }

    pub fn bounds(&self) -> Option<(&[f64], &[f64])> {
        match &self.state {
            SecondState::Hypercube { low, high } => Some((low, high)),
            _ => None,
        }
    }
}

/// Fits a latent-space detector on training codes and calibrates its score
/// threshold at quantile `q` of the training scores.
///
/// kNN training scores skip each point's own entry. The hypercube threshold
/// is never negative, so points inside the box are always normal.
pub fn fit_second_phase(spec: SecondPhaseSpec, latent_train: &Matrix, q: f64) -> Result<SecondPhaseDetector> {
    check_quantile(q)?;
    let n = latent_train.rows();
    if n == 0 || latent_train.cols() == 0 {
        return Err(Error::param("second phase needs a non-empty latent training set"));
    }
    let (state, train_scores) = match spec {
        SecondPhaseSpec::Knn { k } => {
            if k == 0 || k >= n {
                return Err(Error::param(format!("knn needs 1 <= k < n = {n}, got k = {k}")));
            }
            let scores = (0..n)
                .map(|i| kth_distance(latent_train, latent_train.row(i), k, Some(i)))
                .collect();
            (
                SecondState::Knn {
                    points: latent_train.clone(),
                    k,
                },
                scores,
            )
        }
        SecondPhaseSpec::Kmeans { k, seed } => {
            if k == 0 || k > n {
                return Err(Error::param(format!("kmeans needs 1 <= k <= n = {n}, got k = {k}")));
            }
            let fit = kmeans(latent_train, k, seed)?;
            let state = SecondState::Kmeans { centroids: fit.centroids };
            let scores = score_rows(&state, latent_train);
            (state, scores)
        }
        SecondPhaseSpec::Hypercube => {
            let lo_q = (1.0 - q) / 2.0;
            let hi_q = 1.0 - lo_q;
            let mut low = Vec::with_capacity(latent_train.cols());
            let mut high = Vec::with_capacity(latent_train.cols());
            for j in 0..latent_train.cols() {
                let mut col = latent_train.column(j);
                col.sort_by(f64::total_cmp);
                low.push(nearest_rank(&col, lo_q));
                high.push(nearest_rank(&col, hi_q));
            }
            let state = SecondState::Hypercube { low, high };
            let scores = score_rows(&state, latent_train);
            (state, scores)
        }
    };
    let mut score_threshold = calibrate_threshold(&train_scores, q)?;
    if spec == SecondPhaseSpec::Hypercube {
        score_threshold = score_threshold.max(0.0);
    }
    Ok(SecondPhaseDetector {
        spec,
        state,
        score_threshold,
        threshold_quantile: q,
    })
}

/// Scores codes `z` against a fitted detector; larger means more anomalous.
pub fn second_phase_score(det: &SecondPhaseDetector, z: &Matrix) -> Result<Vec<f64>> {
    if z.cols() != det.latent_dim() {
        return Err(Error::shape(format!(
            "second phase was fitted on {} latent dims, got {}",
            det.latent_dim(),
            z.cols()
        )));
    }
    Ok(score_rows(&det.state, z))
}

fn score_rows(state: &SecondState, z: &Matrix) -> Vec<f64> {
    z.row_iter()
        .map(|row| match state {
            SecondState::Knn { points, k } => kth_distance(points, row, *k, None),
            SecondState::Kmeans { centroids } => nearest(centroids, row).1.sqrt(),
            SecondState::Hypercube { low, high } => row
                .iter()
                .zip(low.iter().zip(high))
                .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi))
                .fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

/// Euclidean distance from `x` to its k-th nearest row of `points`,
/// optionally ignoring row `skip`.
fn kth_distance(points: &Matrix, x: &[f64], k: usize, skip: Option<usize>) -> f64 {
    // Ascending buffer of the k smallest squared distances seen so far.
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    for (i, row) in points.row_iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let d = squared_distance(x, row);
        if best.len() == k && d >= best[k - 1] {
            continue;
        }
        let pos = best.partition_point(|&b| b <= d);
        best.insert(pos, d);
        best.truncate(k);
    }
    best[k - 1].sqrt()
}

/// Index of and squared distance to the nearest row; ties go to the lower index.
fn nearest(centroids: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.row_iter().enumerate() {
        let d = squared_distance(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub centroids: Matrix,
    /// Sum of squared distances to the assigned centroid.
    pub objective: f64,
    /// Objective after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

/// Best of [`KMEANS_RESTARTS`] seeded Lloyd runs from k-means++ seeding.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KmeansFit> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::param(format!("kmeans needs 1 <= k <= n = {n}, got k = {k}")));
    }
    let mut best: Option<KmeansFit> = None;
    for restart in 0..KMEANS_RESTARTS {
        let fit = lloyd(points, k, &mut Rng::derived(seed, restart));
        if best.as_ref().map_or(true, |b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &Matrix, k: usize, rng: &mut Rng) -> KmeansFit {
    let (n, d) = points.shape();
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut assign = vec![0usize; n];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        let mut objective = 0.0;
        for (i, row) in points.row_iter().enumerate() {
            let (c, dist) = nearest(&centroids, row);
            assign[i] = c;
            objective += dist;
        }
        history.push(objective);
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, row) in points.row_iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i] * d..(assign[i] + 1) * d].iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            // An empty cluster keeps its centroid.
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c * d..(c + 1) * d].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(squared_distance(&new, centroids.row(c)).sqrt());
            centroids.row_mut(c).copy_from_slice(&new);
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    let objective = points.row_iter().map(|row| nearest(&centroids, row).1).sum();
    history.push(objective);
    KmeansFit {
        centroids,
        objective,
        history,
    }
}

fn plus_plus_seeds(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.below(n)];
    let mut dist: Vec<f64> = points
        .row_iter()
        .map(|r| squared_distance(r, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.below(n)
        };
        chosen.push(next);
        for (i, r) in points.row_iter().enumerate() {
            dist[i] = dist[i].min(squared_distance(r, points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Outcome for one test row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub index: usize,
    pub recon_error: f64,
    pub latent: Vec<f64>,
    pub anomaly1: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anomaly2: Option<bool>,
    pub anomaly: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_score: Option<f64>,
    /// `max(E − MSE_th, s₂ − s₂_th)`; positive exactly when `anomaly` is set.
    pub combined_score: f64,
}

/// Runs both phases on normalized test rows and OR-s the decisions.
pub fn detect(
    first: &FirstPhaseDetector,
    second: Option<&SecondPhaseDetector>,
    x_test: &Matrix,
) -> Result<Vec<DetectionResult>> {
    let model = first.model();
    if let Some(s) = second {
        if s.latent_dim() != model.latent_dim() {
            return Err(Error::Config(format!(
                "second phase expects {} latent dims but the model produces {}",
                s.latent_dim(),
                model.latent_dim()
            )));
        }
    }
    let z = model.encode(x_test)?;
    let y = model.decode(&z)?;
    let errors = row_mse(x_test, &y)?;
    let second_scores = second.map(|s| second_phase_score(s, &z)).transpose()?;
    let th1 = first.mse_threshold();
    Ok(errors
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let anomaly1 = e > th1;
            let s2 = second_scores.as_ref().map(|s| s[i]);
            let th2 = second.map_or(f64::NAN, |s| s.score_threshold());
            let anomaly2 = s2.map(|s| s > th2);
            let combined_score = match s2 {
                Some(s) => (e - th1).max(s - th2),
                None => e - th1,
            };
            DetectionResult {
                index: i,
                recon_error: e,
                latent: z.row(i).to_vec(),
                anomaly1,
                anomaly2,
                anomaly: anomaly1 || anomaly2.unwrap_or(false),
                second_score: s2,
                combined_score,
            }
        })
        .collect())
}
