//! File formats, corpus synthesis and command-line plumbing around
//! [`ehnet_core`].
//!
//! * [`wav`]: 16/24-bit mono PCM reading and writing.
//! * [`dump`]: spectrogram dumps in CSV and raw binary form.
//! * [`checkpoint`]: the `EHN1` checkpoint format.
//! * [`config`]: `key = value` run configuration.
//! * [`manifest`] and [`corpus`]: reproducible synthetic corpora.
//! * [`demo`]: bundled synthetic audio for hermetic runs.
//! * [`pipeline`], [`session`] and [`parallel`]: enhancement, evaluation
//!   and training on files.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod demo;
pub mod dump;
mod error;
pub mod manifest;
pub mod parallel;
pub mod pipeline;
pub mod session;
pub mod wav;

pub use error::{Error, Result};
