//! Datasets, CSV input/output, normalization and cross-validation splits.

mod dataset;
mod folds;
mod normalize;

pub use dataset::{load_csv, load_csv_auto, parse_csv, save_csv, to_csv_string, Dataset, LABEL_COLUMN};
pub use folds::{kfold, split_indices, FoldPlan};
pub use normalize::{fit_normalizer, Normalizer, SCALE_FLOOR};
