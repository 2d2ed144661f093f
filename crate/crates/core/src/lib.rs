//! Convolutional-recurrent speech enhancement on magnitude spectrograms.
//!
//! This crate holds every numerical piece of the pipeline and nothing that
//! touches a filesystem or a clock:
//!
//! * [`dsp`]: windowed STFT analysis and overlap-add synthesis.
//! * [`model`]: strided convolution, feature stacking, deep bidirectional
//!   peephole LSTM and the truncated linear output layer.
//! * [`training`]: loss, hand-derived backpropagation, AdaDelta with a
//!   learning-rate schedule, the training loop and a finite-difference
//!   gradient checker.
//! * [`data`]: SNR-controlled mixing and room-impulse-response convolution.
//! * [`metrics`]: SNR, log-spectral distortion and time-domain MSE.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the corpus
//! generator and the command line live in the `ehnet` companion crate.

#![no_std]
#![warn(rust_2018_idioms)]
// Index loops mirror the math; negated comparisons deliberately reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod dsp;
mod error;
mod matrix;
pub mod metrics;
pub mod model;
pub mod rng;
mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;
