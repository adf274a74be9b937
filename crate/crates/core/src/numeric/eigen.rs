use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub const MAX_SWEEPS: usize = 100;
/// Convergence when the off-diagonal Frobenius norm falls below this
/// fraction of the full Frobenius norm.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`; its
    /// largest-magnitude component is positive.
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Each sweep visits every off-diagonal pair once and applies the plane
/// rotation that zeroes it, accumulating the rotations into the
/// eigenvector matrix.
pub fn sym_eigen(s: &Matrix) -> Result<SymEigen> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::shape(format!("sym_eigen needs a square matrix, got {:?}", s.shape())));
    }
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::shape("sym_eigen needs a symmetric matrix"));
    }

    let mut a = s.data().to_vec();
    // Symmetrize exactly so the rotations see one consistent value per pair.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = avg;
            a[j * n + i] = avg;
        }
    }
    let mut v = Matrix::identity(n).into_data();
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut off = off_norm(&a, n);
    let mut sweeps = 0;
    while off > OFF_DIAGONAL_TOL * total {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate(&mut a, n, p, q, c, sn);
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
        off = off_norm(&a, n);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut comp: Vec<f64> = (0..n).map(|k| v[k * n + src]).collect();
        fix_sign(&mut comp);
        for (k, c) in comp.into_iter().enumerate() {
            vectors.set(k, col, c);
        }
    }
    Ok(SymEigen { values, vectors })
}

/// `A ← Jᵀ A J` for the rotation in the (p, q) plane.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = c * akp - s * akq;
        a[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = c * apk - s * aqk;
        a[q * n + k] = s * apk + c * aqk;
    }
}

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}
