//! Comparison classifiers: K-nearest-neighbors, a one-vs-rest SVM over an
//! explicit degree-2 polynomial feature expansion, and a small 1-D CNN.
//!
//! KNN and the SVM consume already-mapped (low-dimensional) feature vectors;
//! the CNN consumes full 24-dimensional telemetry records and scales them
//! internally. All three are deterministic given their inputs (and, for the
//! CNN, its seed).

mod cnn;
mod knn;
mod svm;

pub use cnn::{cnn_fit, cnn_predict, CnnConfig, CnnModel, CNN_CONV_SPECS};
pub(crate) use cnn::cross_entropy;
pub use knn::{knn_fit, knn_predict, KnnModel};
pub use svm::{polynomial_features, svm_fit, svm_predict, svm_scores, SvmModel};

use thiserror::Error;

use crate::nnet::NnetError;
use crate::preprocess::PreprocessError;

/// Errors from fitting or applying a baseline classifier.
#[derive(Debug, Error)]
pub enum BaselineError {
    /// No training data was supplied.
    #[error("empty training set")]
    EmptyTrainingSet,
    /// A vector had the wrong length.
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    /// The neighbor count is outside `1..=training-set size`.
    #[error("neighbor count {k} outside 1..={max}")]
    BadNeighborCount { k: usize, max: usize },
    /// One-vs-rest training needs at least two distinct classes.
    #[error("training set holds a single class; one-vs-rest needs at least two")]
    SingleClass,
    /// A hyperparameter is unusable.
    #[error("bad parameter: {detail}")]
    BadParameter { detail: String },
    /// An input contained NaN or infinity.
    #[error("{what} contains a non-finite value")]
    NonFinite { what: String },
    /// Training blew up numerically.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
    /// Propagated network error.
    #[error(transparent)]
    Nnet(#[from] NnetError),
    /// Propagated preprocessing error.
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Checks a slice of training vectors for consistent dimension and finite
/// entries; returns the common dimension.
fn check_matrix(what: &str, rows: &[&[f64]]) -> Result<usize, BaselineError> {
    let first = rows.first().ok_or(BaselineError::EmptyTrainingSet)?;
    let dim = first.len();
    if dim == 0 {
        return Err(BaselineError::DimensionMismatch {
            what: what.to_string(),
            expected: 1,
            got: 0,
        });
    }
    for row in rows {
        if row.len() != dim {
            return Err(BaselineError::DimensionMismatch {
                what: what.to_string(),
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(BaselineError::NonFinite {
                what: what.to_string(),
            });
        }
    }
    Ok(dim)
}
