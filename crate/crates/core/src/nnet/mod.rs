//! Minimal neural-network kernels: dense layers with manual backpropagation,
//! valid 1-D convolution, dropout, Adam, and a central finite-difference
//! gradient checker.
//!
//! Everything runs on plain `f64` vectors with explicit seeded randomness;
//! there is no autodiff graph. The encoder and radius networks are [`Mlp`]s,
//! the CNN baseline is a [`Conv1d`], and every gradient path in the crate is
//! expected to survive [`gradcheck`] at 1e-4 relative error.

pub mod conv;
pub mod gradcheck;
pub mod mlp;
pub mod optim;

pub use conv::{Conv1d, ConvGrads, ConvLayer, ConvTape};
pub use gradcheck::{relative_error, CheckResult, GradCheckConfig};
pub use mlp::{dropout_mask, Dense, GradientTape, Mlp, MlpGrads, OutputActivation};
pub use optim::{adam_step, AdamState};

use thiserror::Error;

/// Errors raised by the network kernels.
#[derive(Debug, Error)]
pub enum NnetError {
    /// A vector had the wrong length for the operation.
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    /// An input contained NaN or infinity.
    #[error("{what} contains a non-finite value")]
    NonFinite { what: String },
    /// Parameter / gradient / tape shapes disagree.
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
    /// A network was declared with an unusable architecture.
    #[error("bad architecture: {detail}")]
    BadArchitecture { detail: String },
    /// Dropout rate outside [0, 1).
    #[error("dropout rate must lie in [0, 1), got {rate}")]
    BadRate { rate: f64 },
    /// Non-positive learning rate.
    #[error("learning rate must be positive, got {lr}")]
    BadLearningRate { lr: f64 },
    /// A convolution kernel was longer than its input series.
    #[error("kernel of length {kernel} does not fit a series of length {len}")]
    KernelTooLong { kernel: usize, len: usize },
}

/// Rectified linear unit.
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + eˣ)`; strictly positive for all finite `x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Stable softmax; the output sums to 1.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// One standard-normal draw via the Box–Muller transform, so Gaussian noise
/// depends only on the seeded generator and not on platform libm details
/// beyond `ln`/`cos`/`sqrt`.
pub fn standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // in (0, 1]: ln stays finite
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
