use serde::Serialize;

use super::arch::AeArchitecture;
use super::network::AeModel;
use crate::numeric::{Matrix, Rng};

pub const FD_STEP: f64 = 1e-5;
/// An entry passes if it is within this absolute distance even when the
/// relative check fails.
pub const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares backpropagated gradients to central differences on a random
/// model and a random batch of 8 rows.
pub fn grad_check(arch: &AeArchitecture, tolerance: f64, seed: u64) -> GradCheckReport {
    let mut rng = Rng::new(seed);
    let mut model = AeModel::init(arch, &mut rng);
    // Non-zero biases so their gradients are exercised away from the origin.
    let n_params = arch.n_params();
    let flat = model.flat_params();
    for idx in 0..n_params {
        model.set_flat_param(idx, flat[idx] + 0.1 * rng.uniform_range(-1.0, 1.0));
    }
    let m = arch.input_dim();
    let x = Matrix::from_parts(8, m, (0..8 * m).map(|_| rng.standard_normal()).collect());

    let (_, grads) = model.loss_and_gradients(&x);
    let analytic = grads.flatten();
    let base = model.flat_params();
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut passed = true;
    for idx in 0..n_params {
        let eval = |model: &mut AeModel, v: f64| {
            model.set_flat_param(idx, v);
            model.loss_and_gradients(&x).0
        };
        let plus = eval(&mut model, base[idx] + FD_STEP);
        let minus = eval(&mut model, base[idx] - FD_STEP);
        model.set_flat_param(idx, base[idx]);
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let abs = (numeric - analytic[idx]).abs();
        let rel = abs / numeric.abs().max(analytic[idx].abs()).max(f64::MIN_POSITIVE);
        max_abs = max_abs.max(abs);
        // Relative error is noise for entries that are numerically zero.
        if numeric.abs().max(analytic[idx].abs()) > ABS_FLOOR {
            max_rel = max_rel.max(rel);
        }
        passed &= rel <= tolerance || abs <= ABS_FLOOR;
    }
    GradCheckReport {
        n_params,
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
        tolerance,
        passed,
    }
}
