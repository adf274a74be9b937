//! Principal component analysis as a linear encoder/decoder pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{sym_eigen, Matrix};

/// Top-`p` principal directions of normalized training data.
///
/// `encode(x) = x·Wᵀ` and `decode(z) = z·W`, so `decode ∘ encode` is the
/// orthogonal projection onto the span of the rows of `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPca")]
pub struct PcaModel {
    p: usize,
    /// p × m, rows are orthonormal principal directions.
    w: Matrix,
    /// The model expects mean-removed input and does not center it itself.
    mean_removed: bool,
    /// Fraction of total variance carried by each kept component.
    explained: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPca {
    p: usize,
    w: Matrix,
    mean_removed: bool,
    explained: Vec<f64>,
}

impl TryFrom<RawPca> for PcaModel {
    type Error = Error;

    fn try_from(raw: RawPca) -> Result<Self> {
        if raw.w.rows() != raw.p || raw.explained.len() != raw.p || raw.p == 0 || raw.p > raw.w.cols() {
            return Err(Error::shape(format!(
                "pca payload: p={} with w {:?} and {} explained fractions",
                raw.p,
                raw.w.shape(),
                raw.explained.len()
            )));
        }
        Ok(PcaModel {
            p: raw.p,
            w: raw.w,
            mean_removed: raw.mean_removed,
            explained: raw.explained,
        })
    }
}

/// Fits PCA on already-normalized rows of `train`.
///
/// Uses the eigenvectors of `XᵀX / n`; the input is not re-centered, which
/// is the normalizer's job.
pub fn fit_pca(train: &Matrix, p: usize) -> Result<PcaModel> {
    let (n, m) = train.shape();
    if p == 0 || p > m {
        return Err(Error::param(format!("pca needs 1 <= p <= m = {m}, got p = {p}")));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let cov = train.gram().scale(1.0 / n as f64)?;
    let eig = sym_eigen(&cov)?;
    let total: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    let explained = eig.values[..p]
        .iter()
        .map(|v| if total > 0.0 { v.max(0.0) / total } else { 0.0 })
        .collect();
    let mut w = Matrix::zeros(p, m);
    for k in 0..p {
        for j in 0..m {
            w.set(k, j, eig.vectors.get(j, k));
        }
    }
    Ok(PcaModel {
        p,
        w,
        mean_removed: true,
        explained,
    })
}

impl PcaModel {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.w.cols()
    }

    pub fn components(&self) -> &Matrix {
        &self.w
    }

    pub fn explained(&self) -> &[f64] {
        &self.explained
    }

    pub fn mean_removed(&self) -> bool {
        self.mean_removed
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.m() {
            return Err(Error::shape(format!("pca expects {} columns, got {}", self.m(), x.cols())));
        }
        x.matmul_transposed(&self.w)
    }

    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.p {
            return Err(Error::shape(format!("pca latent has {} columns, got {}", self.p, z.cols())));
        }
        z.matmul(&self.w)
    }

    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.decode(&self.encode(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{row_mse, Rng};

    fn random_data(n: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = Rng::new(seed);
        // Correlated columns so eigenvalues are well separated.
        let mut data = Vec::with_capacity(n * m);
        for _ in 0..n {
            let base: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();
            for j in 0..m {
                data.push(base[j] * (j + 1) as f64 + 0.3 * base[(j + 1) % m]);
            }
        }
        let x = Matrix::new(n, m, data).unwrap();
        crate::dataio::Normalizer::fit(&x).unwrap().apply(&x).unwrap()
    }

    #[test]
    fn line_data_reconstructs_exactly() {
        let x = Matrix::from_rows(&[[-1.0, -1.0], [0.5, 0.5], [0.5, 0.5]]).unwrap();
        let model = fit_pca(&x, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((model.components().get(0, 0) - h).abs() < 1e-12);
        assert!((model.components().get(0, 1) - h).abs() < 1e-12);
        let err = row_mse(&x, &model.reconstruct(&x).unwrap()).unwrap();
        assert!(err.iter().all(|&e| e < 1e-24));
    }

    #[test]
    fn full_basis_is_lossless() {
        let x = random_data(50, 5, 1);
        let model = fit_pca(&x, 5).unwrap();
        let err = x.mean_squared_error(&model.reconstruct(&x).unwrap()).unwrap();
        assert!(err < 1e-9);
        assert!((model.explained().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mse_equals_discarded_eigenvalues_over_m() {
        let x = random_data(200, 6, 2);
        let cov = x.gram().scale(1.0 / 200.0).unwrap();
        let eig = sym_eigen(&cov).unwrap();
        for p in 1..=6 {
            let model = fit_pca(&x, p).unwrap();
            let mse = x.mean_squared_error(&model.reconstruct(&x).unwrap()).unwrap();
            let discarded: f64 = eig.values[p..].iter().sum();
            assert!((mse - discarded / 6.0).abs() < 1e-8, "p={p}: {mse} vs {}", discarded / 6.0);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let x = random_data(40, 4, 3);
        let model = fit_pca(&x, 2).unwrap();
        let z1 = model.encode(&x).unwrap();
        let z2 = model.encode(&model.decode(&z1).unwrap()).unwrap();
        assert!(z1.max_abs_diff(&z2) < 1e-9);
        // A point in the span reconstructs to itself.
        let inside = model.decode(&z1).unwrap();
        assert!(model.reconstruct(&inside).unwrap().max_abs_diff(&inside) < 1e-12);
    }

    #[test]
    fn error_is_distance_to_span_gram_schmidt() {
        // 3-D data, 2-D span: compare against an explicit Gram–Schmidt projector.
        let x = random_data(30, 3, 4);
        let model = fit_pca(&x, 2).unwrap();
        let w = model.components();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for k in 0..2 {
            let mut v = w.row(k).to_vec();
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= d * c);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
        let probe = [0.3, -1.2, 2.0];
        let mut proj = [0.0; 3];
        for b in &basis {
            let d: f64 = probe.iter().zip(b).map(|(a, c)| a * c).sum();
            proj.iter_mut().zip(b).for_each(|(p, c)| *p += d * c);
        }
        let dist2: f64 = probe.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum();
        let pm = Matrix::from_rows(&[probe]).unwrap();
        let err = row_mse(&pm, &model.reconstruct(&pm).unwrap()).unwrap()[0];
        assert!((err - dist2 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn residual_orthogonal_to_components() {
        let x = random_data(60, 5, 5);
        let model = fit_pca(&x, 3).unwrap();
        let r = x.sub(&model.reconstruct(&x).unwrap()).unwrap();
        let dots = r.matmul_transposed(model.components()).unwrap();
        assert!(dots.data().iter().all(|d| d.abs() < 1e-8));
        let wwt = model.components().matmul_transposed(model.components()).unwrap();
        assert!(wwt.max_abs_diff(&Matrix::identity(3)) < 1e-8);
    }

    #[test]
    fn nested_fits_have_non_increasing_error() {
        let x = random_data(80, 6, 6);
        let mut last = f64::INFINITY;
        for p in 1..=6 {
            let model = fit_pca(&x, p).unwrap();
            let mse = x.mean_squared_error(&model.reconstruct(&x).unwrap()).unwrap();
            assert!(mse <= last + 1e-12);
            last = mse;
        }
    }

    #[test]
    fn rotation_equivariance() {
        let mut rng = Rng::new(7);
        let x = random_data(100, 2, 7);
        let model = fit_pca(&x, 1).unwrap();
        for _ in 0..5 {
            let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
            let (s, c) = angle.sin_cos();
            // Rows rotate as x ↦ x·Rᵀ.
            let rot_t = Matrix::from_rows(&[[c, s], [-s, c]]).unwrap();
            let xr = x.matmul(&rot_t).unwrap();
            let rotated = fit_pca(&xr, 1).unwrap();
            let expected = model.components().matmul(&rot_t).unwrap();
            let got = rotated.components();
            let same = expected.max_abs_diff(got);
            let flipped = expected.scale(-1.0).unwrap().max_abs_diff(got);
            assert!(same.min(flipped) < 1e-8);
        }
    }

    #[test]
    fn parameter_checks() {
        let x = random_data(10, 3, 8);
        assert!(matches!(fit_pca(&x, 0), Err(Error::Parameter(_))));
        assert!(matches!(fit_pca(&x, 4), Err(Error::Parameter(_))));
        let model = fit_pca(&x, 2).unwrap();
        assert!(matches!(model.encode(&Matrix::zeros(1, 2)), Err(Error::Shape(_))));
        assert!(matches!(model.decode(&Matrix::zeros(1, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn serde_round_trip() {
        let x = random_data(30, 4, 9);
        let model = fit_pca(&x, 2).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: PcaModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }
}
