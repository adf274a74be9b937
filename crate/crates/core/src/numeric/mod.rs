//! Dense linear algebra and seeded randomness shared by every other module.

mod eigen;
mod matrix;
mod rng;

pub use eigen::{sym_eigen, SymEigen, MAX_SWEEPS, OFF_DIAGONAL_TOL};
pub use matrix::{row_mse, Matrix};
pub use rng::{derive_seed, gaussian, Rng};

pub(crate) use matrix::{check_finite, gemm_nn, gemm_nt, gemm_tn, squared_distance};
