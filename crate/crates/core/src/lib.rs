pub mod autoenc;
pub mod dataio;
pub mod detect;
pub mod dimsweep;
pub mod error;
pub mod metrics;
pub mod model_file;
pub mod numeric;
pub mod pca;
pub mod reducer;
pub mod synth;

pub use error::{Error, Result};
pub use reducer::{Method, Reducer};
