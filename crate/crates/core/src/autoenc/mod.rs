//! Feed-forward autoencoder: architecture, forward/backward passes, Adam
//! training with early stopping, and a finite-difference gradient check.

mod arch;
mod gradcheck;
mod network;
mod train;

pub use arch::{default_hidden_width, Activation, AeArchitecture};
pub use gradcheck::{grad_check, GradCheckReport, ABS_FLOOR, FD_STEP};
pub use network::{AeModel, EpochLog, Forward, ForwardCache, Gradients};
pub use train::{train, TrainConfig};
