//! Objective quality measures between a reference and an estimate.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent on f64 only in recent `core`
use num_traits::Float;

use crate::{Error, Matrix, Result};

/// Upper bound reported by [`snr_db`] when the residual vanishes.
pub const SNR_CAP_DB: f64 = 100.0;

/// Floor added to both magnitudes inside the log of [`lsd`].
pub const LSD_FLOOR: f64 = 1e-8;

fn ensure_same_len(reference: &[f64], estimate: &[f64]) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
            tolerance: 0,
        });
    }
    Ok(())
}

/// `10 log10(sum ref^2 / sum (ref - est)^2)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    ensure_same_len(reference, estimate)?;
    let signal: f64 = reference.iter().map(|r| r * r).sum();
    if signal == 0.0 {
        return Err(Error::ZeroReference);
    }
    let residual: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - e) * (r - e))
        .sum();
    if residual == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (signal / residual).log10()).min(SNR_CAP_DB))
}

/// Mean over frames of the RMS (over bins) of `20 log10((ref + floor) / (est + floor))`.
pub fn lsd(reference: &Matrix<f64>, estimate: &Matrix<f64>) -> Result<f64> {
    estimate.ensure_shape("LSD estimate", reference.shape())?;
    let (bins, frames) = reference.shape();
    if bins == 0 || frames == 0 {
        return Err(Error::InvalidConfig("LSD of an empty spectrogram".into()));
    }
    let mut total = 0.0;
    for t in 0..frames {
        let mut acc = 0.0;
        for b in 0..bins {
            let ratio = (reference[(b, t)] + LSD_FLOOR) / (estimate[(b, t)] + LSD_FLOOR);
            let db = 20.0 * ratio.log10();
            acc += db * db;
        }
        total += (acc / bins as f64).sqrt();
    }
    Ok(total / frames as f64)
}

/// Mean squared sample difference.
pub fn time_mse(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    ensure_same_len(reference, estimate)?;
    if reference.is_empty() {
        return Err(Error::ZeroReference);
    }
    Ok(reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (r - e) * (r - e))
        .sum::<f64>()
        / reference.len() as f64)
}

/// Trims both signals to their common length when they differ by at most
/// `tolerance` samples. No lag search is done.
pub fn align<'a>(
    reference: &'a [f64],
    estimate: &'a [f64],
    tolerance: usize,
) -> Result<(&'a [f64], &'a [f64])> {
    if reference.len().abs_diff(estimate.len()) > tolerance {
        return Err(Error::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
            tolerance,
        });
    }
    let n = reference.len().min(estimate.len());
    Ok((&reference[..n], &estimate[..n]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FileMetrics {
    pub id: String,
    pub snr_db: f64,
    pub lsd: f64,
    pub time_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricMeans {
    pub snr_db: f64,
    pub lsd: f64,
    pub time_mse: f64,
}

/// Per-file metrics plus files that could not be evaluated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub records: Vec<FileMetrics>,
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    /// Arithmetic means over the evaluated files, or `None` if there are none.
    pub fn means(&self) -> Option<MetricMeans> {
        if self.records.is_empty() {
            return None;
        }
        let n = self.records.len() as f64;
        let sum = |f: fn(&FileMetrics) -> f64| self.records.iter().map(f).sum::<f64>() / n;
        Some(MetricMeans {
            snr_db: sum(|r| r.snr_db),
            lsd: sum(|r| r.lsd),
            time_mse: sum(|r| r.time_mse),
        })
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}
