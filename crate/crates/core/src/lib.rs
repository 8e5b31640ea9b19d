//! # eegpipe — EEG distraction-level classification pipeline
//!
//! A pure-Rust implementation of a three-class (normal state / low
//! distraction / high distraction) EEG classification pipeline:
//!
//! - [`signal`] — recording data model, zero-phase IIR filtering (Butterworth
//!   band-pass, biquad notch), decimation, FastICA artifact removal, epoching
//!   and class balancing
//! - [`spectral`] — Welch power spectral density, canonical frequency bands,
//!   and band-power feature extraction
//! - [`autodiff`] — minimal reverse-mode automatic-differentiation engine
//!   (dense, 2-D convolution, batch norm, ELU, pooling, LSTM, softmax)
//! - [`models`] — the hybrid CNN-LSTM classifier, the DeepConvNet baseline,
//!   the PSD-SVM baseline, and the Adam training loop
//! - [`evaluation`] — k-fold cross-validation, accuracy, paired and Welch
//!   t-tests, and band-power topography statistics
//! - [`synth`] — seeded synthetic-EEG session generator with planted spectral
//!   ground truth, so every downstream claim is testable without private data
//!
//! All randomness flows from explicit seeds; every stage is a pure function
//! of its inputs plus a seed, and repeated runs are bit-identical.

pub mod autodiff;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod signal;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
