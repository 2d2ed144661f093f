use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use super::fft::{fft, ifft};
use super::window::{squared_overlap_sums, Window};
use crate::{Error, Matrix, Result};

/// Mono PCM signal with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("waveform has no samples"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(
                "waveform contains non-finite samples",
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// STFT framing parameters. `bins_kept` is the spectrogram height `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    pub window: Window,
    pub bins_kept: usize,
}

impl Default for StftConfig {
    /// 512-point frames at 50% overlap; bins 0..256 kept, Nyquist dropped.
    fn default() -> Self {
        Self {
            fft_size: 512,
            hop_size: 256,
            window: Window::SqrtHann,
            bins_kept: 256,
        }
    }
}

impl StftConfig {
    /// Config that keeps every non-redundant bin, `fft_size / 2 + 1`.
    pub fn full(fft_size: usize, hop_size: usize, window: Window) -> Self {
        Self {
            fft_size,
            hop_size,
            window,
            bins_kept: fft_size / 2 + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return invalid(format!(
                "fft_size {} must be a power of two >= 2",
                self.fft_size
            ));
        }
        if self.hop_size == 0 || self.hop_size > self.fft_size {
            return invalid(format!(
                "hop_size {} must be in 1..={}",
                self.hop_size, self.fft_size
            ));
        }
        if self.bins_kept == 0 || self.bins_kept > self.fft_size / 2 + 1 {
            return invalid(format!(
                "bins_kept {} must be in 1..={}",
                self.bins_kept,
                self.fft_size / 2 + 1
            ));
        }
        let sums = squared_overlap_sums(&self.window.coefficients(self.fft_size), self.hop_size);
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 || (max - min) / max > 1e-6 {
            return invalid(format!(
                "{} window at hop {} is not constant-overlap-add (squared)",
                self.window, self.hop_size
            ));
        }
        Ok(())
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.fft_size {
            0
        } else {
            (samples - self.fft_size) / self.hop_size + 1
        }
    }

    /// Length of the waveform synthesized from `frames` frames.
    pub fn output_len(&self, frames: usize) -> usize {
        (frames - 1) * self.hop_size + self.fft_size
    }
}

/// Magnitude/phase pair of `d x t` matrices (rows are bins, columns frames).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    magnitudes: Matrix<f64>,
    phases: Matrix<f64>,
    config: StftConfig,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn from_parts(
        magnitudes: Matrix<f64>,
        phases: Matrix<f64>,
        config: StftConfig,
        sample_rate: u32,
    ) -> Result<Self> {
        config.validate()?;
        magnitudes.ensure_shape(
            "spectrogram magnitudes",
            (config.bins_kept, magnitudes.cols()),
        )?;
        phases.ensure_shape("spectrogram phases", magnitudes.shape())?;
        if magnitudes.cols() == 0 {
            return Err(Error::InvalidConfig("spectrogram has no frames".into()));
        }
        if magnitudes
            .as_slice()
            .iter()
            .any(|m| !m.is_finite() || *m < 0.0)
        {
            return Err(Error::NonFinite("spectrogram magnitudes"));
        }
        Ok(Self {
            magnitudes,
            phases,
            config,
            sample_rate,
        })
    }

    pub fn magnitudes(&self) -> &Matrix<f64> {
        &self.magnitudes
    }

    pub fn phases(&self) -> &Matrix<f64> {
        &self.phases
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn bins(&self) -> usize {
        self.magnitudes.rows()
    }

    pub fn frames(&self) -> usize {
        self.magnitudes.cols()
    }
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let frames = cfg.frame_count(w.len());
    if frames == 0 {
        return Err(Error::InsufficientSamples {
            needed: cfg.fft_size,
            got: w.len(),
        });
    }
    let window = cfg.window.coefficients(cfg.fft_size);
    let d = cfg.bins_kept;
    let mut magnitudes = Matrix::zeros(d, frames);
    let mut phases = Matrix::zeros(d, frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];

    for frame in 0..frames {
        let start = frame * cfg.hop_size;
        let segment = &w.samples()[start..start + cfg.fft_size];
        for ((b, &x), &win) in buf.iter_mut().zip(segment).zip(&window) {
            *b = Complex64::new(x * win, 0.0);
        }
        fft(&mut buf);
        for (bin, z) in buf.iter().take(d).enumerate() {
            magnitudes[(bin, frame)] = z.norm();
            phases[(bin, frame)] = wrap_phase(z.arg());
        }
    }

    Ok(Spectrogram {
        magnitudes,
        phases,
        config: *cfg,
        sample_rate: w.sample_rate(),
    })
}

/// `atan2` yields `[-pi, pi]`; fold `-pi` onto `pi` so phases lie in `(-pi, pi]`.
fn wrap_phase(p: f64) -> f64 {
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Weighted overlap-add synthesis normalized by the summed squared window.
///
/// Bins above `bins_kept` are synthesized as zero.
pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    synthesize(&s.magnitudes, &s.phases, &s.config, s.sample_rate)
}

/// Inverse transform of `clean_mag` combined with the phases of `noisy`.
pub fn reconstruct_with_phase(clean_mag: &Matrix<f64>, noisy: &Spectrogram) -> Result<Waveform> {
    clean_mag.ensure_shape("enhanced magnitudes", noisy.magnitudes.shape())?;
    synthesize(clean_mag, &noisy.phases, &noisy.config, noisy.sample_rate)
}

fn synthesize(
    magnitudes: &Matrix<f64>,
    phases: &Matrix<f64>,
    cfg: &StftConfig,
    sample_rate: u32,
) -> Result<Waveform> {
    cfg.validate()?;
    phases.ensure_shape("phases", magnitudes.shape())?;
    if magnitudes.rows() != cfg.bins_kept {
        return Err(Error::ShapeMismatch {
            context: "magnitudes vs bins_kept",
            expected: (cfg.bins_kept, magnitudes.cols()),
            got: magnitudes.shape(),
        });
    }
    let frames = magnitudes.cols();
    if frames == 0 {
        return Err(Error::InvalidConfig("spectrogram has no frames".into()));
    }
    let n = cfg.fft_size;
    let half = n / 2;
    let window = cfg.window.coefficients(n);
    let out_len = cfg.output_len(frames);
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];

    for frame in 0..frames {
        buf.fill(Complex64::new(0.0, 0.0));
        for bin in 0..magnitudes.rows() {
            let z = Complex64::from_polar(magnitudes[(bin, frame)], phases[(bin, frame)]);
            buf[bin] = z;
            if bin > 0 && bin < half {
                buf[n - bin] = z.conj();
            }
        }
        // DC and Nyquist of a real signal are real.
        buf[0].im = 0.0;
        if magnitudes.rows() > half {
            buf[half].im = 0.0;
        }
        ifft(&mut buf);
        let start = frame * cfg.hop_size;
        for (i, (z, &win)) in buf.iter().zip(&window).enumerate() {
            out[start + i] += z.re * win;
            norm[start + i] += win * win;
        }
    }

    for (o, &nrm) in out.iter_mut().zip(&norm) {
        if nrm > 1e-12 {
            *o /= nrm;
        }
    }
    Waveform::new(out, sample_rate)
}
