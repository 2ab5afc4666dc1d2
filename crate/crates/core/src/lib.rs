//! Condition diagnosis for distribution-network switchgear from multi-sensor
//! telemetry.
//!
//! The centerpiece is a semi-supervised classifier that embeds 24-dimensional
//! feature vectors with a small fully-connected network, represents each of
//! the seven condition classes by the mean of its embedded labeled samples,
//! and assigns pseudo-labels to unlabeled samples only when they fall inside
//! a per-class decision radius predicted by a second small network from the
//! statistics of the normalized distance distribution. Accepted pseudo-labels
//! refine the class centers; rejected samples still contribute through a
//! perturbation-consistency penalty.
//!
//! The crate is self-contained: every numeric kernel (dense and convolutional
//! layers, manual backpropagation, Adam, wavelet denoising, the baselines) is
//! implemented here on plain `f64` vectors, so runs are reproducible bit for
//! bit from a seed.
//!
//! Module map:
//!
//! * [`features`] — feature-vector schema, labels, dataset I/O, stratified
//!   episode splits.
//! * [`preprocess`] — wavelet denoising, spike removal, min-max scaling.
//! * [`nnet`] — dense / convolutional layers, manual gradients, Adam, and a
//!   finite-difference gradient checker.
//! * [`proto`] — class centers, normalized distances, decision radii,
//!   pseudo-labeling, center correction, classification.
//! * [`training`] — the three loss terms, the training loop, checkpoints.
//! * [`simulator`] — synthetic telemetry generator with per-class fault
//!   signatures.
//! * [`baselines`] — KNN, one-vs-rest polynomial SVM, and a 1-D CNN.
//! * [`harness`] — experiment orchestration and JSON reports.

pub mod baselines;
pub mod features;
pub mod harness;
pub mod nnet;
pub mod preprocess;
pub mod proto;
pub mod simulator;
pub mod training;
