//! Synthetic data with known structure: the water-tank system and a pool
//! of nonlinear embeddings of a uniform latent space.
//!
//! Both generators know their ground truth (the intrinsic dimension, which
//! rows are anomalous and why), which is what the end-to-end checks rely on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

/// Water tank with outflow `q_o = a·√H` and level `H ~ U(h_min, h_max)`;
/// both signals are measured with additive Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterTankParams {
    pub a: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub noise_std: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for WaterTankParams {
    fn default() -> Self {
        WaterTankParams {
            a: 1.0,
            h_min: 1.0,
            h_max: 10.0,
            noise_std: 0.02,
            n: 10_000,
            seed: 0,
        }
    }
}

impl WaterTankParams {
    fn validate(&self) -> Result<()> {
        let finite = [self.a, self.h_min, self.h_max, self.noise_std]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.a <= 0.0 || self.h_min <= 0.0 || self.h_min > self.h_max || self.noise_std < 0.0 {
            return Err(Error::param(format!(
                "water tank needs a > 0, 0 < h_min <= h_max and noise_std >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Noise-free outflow for level `h`.
    pub fn outflow(&self, h: f64) -> f64 {
        self.a * h.sqrt()
    }

    /// Constraint value `q_o - a·√H`; zero on the manifold.
    pub fn residual(&self, h: f64, q: f64) -> f64 {
        q - self.outflow(h)
    }

    /// Scale anomaly margins are measured in: the noise level, or 1% of the
    /// outflow range for noise-free data.
    fn margin_unit(&self) -> f64 {
        if self.noise_std > 0.0 {
            self.noise_std
        } else {
            0.01 * (self.outflow(self.h_max) - self.outflow(self.h_min)).max(self.a)
        }
    }
}

pub const WATERTANK_COLUMNS: [&str; 2] = ["H", "q_o"];

/// Normal water-tank observations `(H + ε₁, a√H + ε₂)`, all labelled 0.
pub fn gen_watertank(p: &WaterTankParams) -> Result<Dataset> {
    p.validate()?;
    let mut rng = Rng::new(p.seed);
    let mut data = Vec::with_capacity(2 * p.n);
    for _ in 0..p.n {
        let h = rng.uniform_range(p.h_min, p.h_max);
        let e1 = p.noise_std * rng.standard_normal();
        let e2 = p.noise_std * rng.standard_normal();
        data.push(h + e1);
        data.push(p.outflow(h) + e2);
    }
    Dataset::new(
        Matrix::new(p.n, 2, data)?,
        Some(vec![0; p.n]),
        WATERTANK_COLUMNS.iter().map(|s| s.to_string()).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    /// Pushed off the curve, perpendicular to it, by at least
    /// [`OFF_MANIFOLD_MIN_SIGMAS`] noise units; level stays in range.
    OffManifold,
    /// On the curve but with the level just outside `[h_min, h_max]`.
    OutOfRange,
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "off_manifold" => Ok(AnomalyKind::OffManifold),
            "out_of_range" => Ok(AnomalyKind::OutOfRange),
            other => Err(Error::param(format!(
                "unknown anomaly kind {other:?} (expected off_manifold or out_of_range)"
            ))),
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyKind::OffManifold => "off_manifold",
            AnomalyKind::OutOfRange => "out_of_range",
        })
    }
}

/// Guaranteed residual of off-manifold anomalies, in noise units.
pub const OFF_MANIFOLD_MIN_SIGMAS: f64 = 6.0;
/// Perpendicular displacement is drawn from this range, in noise units.
pub const OFF_MANIFOLD_DISPLACEMENT: (f64, f64) = (7.0, 12.0);
/// Out-of-range levels sit this far outside the interval, as a fraction of
/// `h_max - h_min`.
pub const OUT_OF_RANGE_EXCURSION: (f64, f64) = (0.01, 0.05);

/// Anomalous rows together with the kind of each row.
#[derive(Debug, Clone)]
pub struct AnomalyBatch {
    pub data: Dataset,
    pub kinds: Vec<AnomalyKind>,
}

/// `count` anomalies split as evenly as possible over `kinds` (earlier kinds
/// take the remainder), emitted kind by kind, all labelled 1. Anomalies
/// carry no measurement noise so their margins hold exactly.
pub fn gen_watertank_anomalies(p: &WaterTankParams, kinds: &[AnomalyKind], count: usize) -> Result<AnomalyBatch> {
    p.validate()?;
    if count == 0 {
        return Err(Error::param("anomaly count must be at least 1"));
    }
    if kinds.is_empty() {
        return Err(Error::param("at least one anomaly kind is required"));
    }
    if p.h_max <= p.h_min {
        return Err(Error::param("anomalies need a non-degenerate level range"));
    }
    // Stream 1 keeps anomalies independent of the normal draw with the same seed.
    let mut rng = Rng::derived(p.seed, 1);
    let mut data = Vec::with_capacity(2 * count);
    let mut row_kinds = Vec::with_capacity(count);
    for (ki, &kind) in kinds.iter().enumerate() {
        let share = count / kinds.len() + usize::from(ki < count % kinds.len());
        for _ in 0..share {
            let (h, q) = match kind {
                AnomalyKind::OffManifold => off_manifold_point(p, &mut rng)?,
                AnomalyKind::OutOfRange => out_of_range_point(p, &mut rng),
            };
            data.push(h);
            data.push(q);
            row_kinds.push(kind);
        }
    }
    let data = Dataset::new(
        Matrix::new(count, 2, data)?,
        Some(vec![1; count]),
        WATERTANK_COLUMNS.iter().map(|s| s.to_string()).collect(),
    )?;
    Ok(AnomalyBatch { data, kinds: row_kinds })
}

fn off_manifold_point(p: &WaterTankParams, rng: &mut Rng) -> Result<(f64, f64)> {
    let unit = p.margin_unit();
    for _ in 0..10_000 {
        let h0 = rng.uniform_range(p.h_min, p.h_max);
        // Unit normal to the curve (1, a / (2√H)).
        let slope = p.a / (2.0 * h0.sqrt());
        let norm = (1.0 + slope * slope).sqrt();
        let (nh, nq) = (-slope / norm, 1.0 / norm);
        let d = unit * rng.uniform_range(OFF_MANIFOLD_DISPLACEMENT.0, OFF_MANIFOLD_DISPLACEMENT.1);
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let h = h0 + sign * d * nh;
        let q = p.outflow(h0) + sign * d * nq;
        if h >= p.h_min && h <= p.h_max && p.residual(h, q).abs() >= OFF_MANIFOLD_MIN_SIGMAS * unit {
            return Ok((h, q));
        }
    }
    Err(Error::param(format!(
        "cannot place off-manifold anomalies inside [{}, {}] at noise {}",
        p.h_min, p.h_max, p.noise_std
    )))
}

fn out_of_range_point(p: &WaterTankParams, rng: &mut Rng) -> (f64, f64) {
    let span = p.h_max - p.h_min;
    let e = span * rng.uniform_range(OUT_OF_RANGE_EXCURSION.0, OUT_OF_RANGE_EXCURSION.1);
    let below = rng.uniform() < 0.5 && p.h_min - e > 0.0;
    let h = if below { p.h_min - e } else { p.h_max + e };
    (h, p.outflow(h))
}

/// Building blocks for observed columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinOp {
    /// `z_i · z_j`
    Product,
    /// `z_i³`
    Cube,
    /// Two waveforms driven by one latent phase `t = (z_i + 1) / 2`:
    /// `sin(2πt)` and a Gaussian pulse centred at `t = 0.5`.
    TimePair,
    /// Fixed random linear combination of all latents.
    LinearMix,
}

impl FromStr for NonlinOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "product" => Ok(NonlinOp::Product),
            "cube" => Ok(NonlinOp::Cube),
            "time_pair" => Ok(NonlinOp::TimePair),
            "linear_mix" => Ok(NonlinOp::LinearMix),
            other => Err(Error::param(format!(
                "unknown op {other:?} (expected product, cube, time_pair or linear_mix)"
            ))),
        }
    }
}

pub const PULSE_WIDTH: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinPoolParams {
    pub latent_dim: usize,
    pub obs_dim: usize,
    pub ops: Vec<NonlinOp>,
    pub noise_std: f64,
    pub n: usize,
    pub seed: u64,
}

/// How one observed column is computed from the latent draw `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ColumnFormula {
    Latent { i: usize },
    Product { i: usize, j: usize },
    Cube { i: usize },
    TimeSin { i: usize },
    TimePulse { i: usize },
    LinearMix { weights: Vec<f64> },
}

impl ColumnFormula {
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self {
            ColumnFormula::Latent { i } => z[*i],
            ColumnFormula::Product { i, j } => z[*i] * z[*j],
            ColumnFormula::Cube { i } => z[*i] * z[*i] * z[*i],
            ColumnFormula::TimeSin { i } => (std::f64::consts::TAU * phase(z[*i])).sin(),
            ColumnFormula::TimePulse { i } => {
                let u = (phase(z[*i]) - 0.5) / PULSE_WIDTH;
                (-u * u).exp()
            }
            ColumnFormula::LinearMix { weights } => weights.iter().zip(z).map(|(w, v)| w * v).sum(),
        }
    }

    pub fn sources(&self) -> Vec<usize> {
        match self {
            ColumnFormula::Latent { i }
            | ColumnFormula::Cube { i }
            | ColumnFormula::TimeSin { i }
            | ColumnFormula::TimePulse { i } => vec![*i],
            ColumnFormula::Product { i, j } => vec![*i, *j],
            ColumnFormula::LinearMix { weights } => (0..weights.len()).collect(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ColumnFormula::Latent { i } => format!("z{i}"),
            ColumnFormula::Product { i, j } => format!("z{i}*z{j}"),
            ColumnFormula::Cube { i } => format!("z{i}^3"),
            ColumnFormula::TimeSin { i } => format!("sin(2*pi*t), t=(z{i}+1)/2"),
            ColumnFormula::TimePulse { i } => {
                format!("exp(-((t-0.5)/{PULSE_WIDTH})^2), t=(z{i}+1)/2")
            }
            ColumnFormula::LinearMix { weights } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| format!("{w}*z{i}"))
                .collect::<Vec<_>>()
                .join(" + "),
        }
    }
}

fn phase(z: f64) -> f64 {
    (z + 1.0) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestColumn {
    pub name: String,
    pub formula: String,
    pub sources: Vec<usize>,
    pub spec: ColumnFormula,
}

/// Record of how every generated column was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub latent_dim: usize,
    pub obs_dim: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub latent_distribution: String,
    pub columns: Vec<ManifestColumn>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone)]
pub struct NonlinPool {
    pub data: Dataset,
    pub manifest: Manifest,
    /// The latent draw behind each row (n × latent_dim).
    pub latent: Matrix,
}

/// Observations `[z, f₁(z), f₂(z), …] + noise` with `z ~ U(-1, 1)^latent_dim`.
///
/// The first `latent_dim` columns are the latents themselves; the rest
/// cycle through `ops`. Each op keeps its own cursor over latent indices
/// (pairs `i < j` before squares for products) so repeated ops spread over
/// different latents.
pub fn gen_nonlin_pool(p: &NonlinPoolParams) -> Result<NonlinPool> {
    if p.ops.is_empty() {
        return Err(Error::param("nonlinearity pool needs at least one op"));
    }
    if p.latent_dim == 0 || p.obs_dim < p.latent_dim {
        return Err(Error::param(format!(
            "need 1 <= latent_dim <= obs_dim, got latent_dim={}, obs_dim={}",
            p.latent_dim, p.obs_dim
        )));
    }
    if !(p.noise_std >= 0.0) || !p.noise_std.is_finite() {
        return Err(Error::param(format!("noise_std must be >= 0, got {}", p.noise_std)));
    }

    let formulas = plan_columns(p);
    let d = p.latent_dim;
    let mut rng = Rng::new(p.seed);
    let mut latent = Vec::with_capacity(p.n * d);
    let mut data = Vec::with_capacity(p.n * p.obs_dim);
    let mut z = vec![0.0; d];
    for _ in 0..p.n {
        for v in z.iter_mut() {
            *v = rng.uniform_range(-1.0, 1.0);
        }
        latent.extend_from_slice(&z);
        for f in &formulas {
            data.push(f.eval(&z) + p.noise_std * rng.standard_normal());
        }
    }
    let names: Vec<String> = (0..p.obs_dim).map(|j| format!("x{j}")).collect();
    let columns = formulas
        .into_iter()
        .zip(&names)
        .map(|(spec, name)| ManifestColumn {
            name: name.clone(),
            formula: spec.describe(),
            sources: spec.sources(),
            spec,
        })
        .collect();
    Ok(NonlinPool {
        data: Dataset::new(Matrix::new(p.n, p.obs_dim, data)?, Some(vec![0; p.n]), names)?,
        manifest: Manifest {
            latent_dim: d,
            obs_dim: p.obs_dim,
            noise_std: p.noise_std,
            seed: p.seed,
            latent_distribution: "uniform(-1,1)".into(),
            columns,
        },
        latent: Matrix::new(p.n, d, latent)?,
    })
}

fn plan_columns(p: &NonlinPoolParams) -> Vec<ColumnFormula> {
    let d = p.latent_dim;
    let mut cols: Vec<ColumnFormula> = (0..d).map(|i| ColumnFormula::Latent { i }).collect();
    let mut pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
        .collect();
    pairs.extend((0..d).map(|i| (i, i)));
    let mut weight_rng = Rng::derived(p.seed, 2);
    let (mut n_prod, mut n_cube, mut n_time) = (0usize, 0usize, 0usize);
    let mut op_idx = 0;
    while cols.len() < p.obs_dim {
        match p.ops[op_idx % p.ops.len()] {
            NonlinOp::Product => {
                let (i, j) = pairs[n_prod % pairs.len()];
                cols.push(ColumnFormula::Product { i, j });
                n_prod += 1;
            }
            NonlinOp::Cube => {
                cols.push(ColumnFormula::Cube { i: n_cube % d });
                n_cube += 1;
            }
            NonlinOp::TimePair => {
                let i = n_time % d;
                cols.push(ColumnFormula::TimeSin { i });
                if cols.len() < p.obs_dim {
                    cols.push(ColumnFormula::TimePulse { i });
                }
                n_time += 1;
            }
            NonlinOp::LinearMix => {
                let weights = (0..d).map(|_| weight_rng.uniform_range(-1.0, 1.0)).collect();
                cols.push(ColumnFormula::LinearMix { weights });
            }
        }
        op_idx += 1;
    }
    cols
}
