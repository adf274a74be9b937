use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Scales below this are treated as constant columns.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Per-column affine standardization `(x - mean) / scale`.
///
/// Statistics come from the training split only. The scale is the
/// population (1/n) standard deviation, so the normalized training matrix
/// has exactly unit variance; constant columns get scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormalizer")]
pub struct Normalizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

#[derive(Deserialize)]
struct RawNormalizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl TryFrom<RawNormalizer> for Normalizer {
    type Error = Error;

    fn try_from(raw: RawNormalizer) -> Result<Self> {
        Normalizer::new(raw.mean, raw.scale)
    }
}

impl Normalizer {
    pub fn new(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(Error::shape(format!(
                "normalizer has {} means but {} scales",
                mean.len(),
                scale.len()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("normalizer means must be finite"));
        }
        if scale.iter().any(|&s| !s.is_finite() || s < SCALE_FLOOR) {
            return Err(Error::param(format!("normalizer scales must be finite and >= {SCALE_FLOOR}")));
        }
        Ok(Normalizer { mean, scale })
    }

    /// Column means and population standard deviations of `train`.
    pub fn fit(train: &Matrix) -> Result<Self> {
        let (mean, std) = column_moments(train)?;
        let scale = std.into_iter().map(|s| if s < SCALE_FLOOR { 1.0 } else { s }).collect();
        Ok(Normalizer { mean, scale })
    }

    /// Column means of `train` with one shared scale for every column.
    ///
    /// Suits signals that share a unit, such as image intensities, where
    /// per-column scaling would blow up near-constant columns.
    pub fn fit_with_common_scale(train: &Matrix, scale: f64) -> Result<Self> {
        let (mean, _) = column_moments(train)?;
        let m = mean.len();
        Normalizer::new(mean, vec![scale; m])
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        let m = self.dim();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % m;
            *v = (*v - self.mean[j]) / self.scale[j];
        }
        Ok(out)
    }

    pub fn invert(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        let m = self.dim();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let j = i % m;
            *v = *v * self.scale[j] + self.mean[j];
        }
        Ok(out)
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::shape(format!(
                "normalizer fitted on {} columns, got {}",
                self.dim(),
                x.cols()
            )));
        }
        Ok(())
    }
}

pub fn fit_normalizer(train: &Dataset) -> Result<Normalizer> {
    Normalizer::fit(train.x())
}

fn column_moments(x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let m = x.cols();
    let mut mean = vec![0.0; m];
    for row in x.row_iter() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut var = vec![0.0; m];
    for row in x.row_iter() {
        for j in 0..m {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    let std = var.into_iter().map(|v| (v / n as f64).sqrt()).collect();
    Ok((mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    fn column(values: &[f64]) -> Matrix {
        Matrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn two_point_column() {
        let n = Normalizer::fit(&column(&[1.0, 3.0])).unwrap();
        assert_eq!(n.mean(), &[2.0]);
        assert_eq!(n.scale(), &[1.0]);
    }

    #[test]
    fn constant_column_floored() {
        let n = Normalizer::fit(&column(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(n.mean(), &[5.0]);
        assert_eq!(n.scale(), &[1.0]);
    }

    #[test]
    fn needs_two_rows() {
        assert!(matches!(
            Normalizer::fit(&column(&[1.0])),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn direct_arithmetic() {
        let n = Normalizer::new(vec![2.0], vec![1.0]).unwrap();
        assert_eq!(n.apply(&column(&[3.0])).unwrap().data(), &[1.0]);
        assert!(Normalizer::new(vec![0.0], vec![0.0]).is_err());
        assert!(matches!(n.apply(&Matrix::zeros(1, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn normalized_training_moments() {
        let mut rng = Rng::new(1);
        let data = (0..300).map(|i| rng.standard_normal() * (1 + i % 3) as f64 + 7.0).collect();
        let x = Matrix::new(100, 3, data).unwrap();
        let norm = Normalizer::fit(&x).unwrap();
        let z = norm.apply(&x).unwrap();
        for j in 0..3 {
            let c = z.column(j);
            let mean = c.iter().sum::<f64>() / 100.0;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
        let back = norm.invert(&z).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn test_split_uses_train_statistics() {
        let mut rng = Rng::new(2);
        let train = Matrix::new(50, 1, (0..50).map(|_| rng.standard_normal()).collect()).unwrap();
        let test = Matrix::new(50, 1, (0..50).map(|_| rng.standard_normal() + 3.0).collect()).unwrap();
        let norm = Normalizer::fit(&train).unwrap();
        let z = norm.apply(&test).unwrap();
        let mean = z.data().iter().sum::<f64>() / 50.0;
        assert!(mean > 1.0);
    }

    #[test]
    fn leakage_free() {
        // Changing held-out rows cannot change the fitted statistics.
        let mut rng = Rng::new(3);
        let all = Matrix::new(40, 2, (0..80).map(|_| rng.standard_normal()).collect()).unwrap();
        let train_idx: Vec<usize> = (0..30).collect();
        let a = Normalizer::fit(&all.select_rows(&train_idx)).unwrap();
        let mut other = all.clone();
        for v in other.data_mut()[60..].iter_mut() {
            *v += 100.0;
        }
        let b = Normalizer::fit(&other.select_rows(&train_idx)).unwrap();
        let bits = |n: &Normalizer| {
            n.mean()
                .iter()
                .chain(n.scale())
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn common_scale() {
        let x = Matrix::from_rows(&[[0.0, 255.0], [255.0, 255.0]]).unwrap();
        let n = Normalizer::fit_with_common_scale(&x, 255.0).unwrap();
        assert_eq!(n.mean(), &[127.5, 255.0]);
        assert_eq!(n.scale(), &[255.0, 255.0]);
    }
}
