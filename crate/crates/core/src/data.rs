//! SNR-controlled mixing and room-impulse-response convolution.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent on f64 only in recent `core`
use num_traits::Float;
use rand::Rng;

use crate::dsp::fft::{fft, ifft};
use crate::dsp::Waveform;
use crate::{Error, Result};

/// Inclusive SNR range for randomly drawn mixtures, in dB.
pub const SNR_RANGE_DB: (f64, f64) = (0.0, 30.0);

/// Peak amplitude allowed after leveling; keeps 16-bit output unclipped.
pub const PEAK_CEILING: f64 = 0.99;

pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

pub fn sample_snr_db<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1)
}

/// Brings `noise` to exactly `len` samples: a random crop when it is
/// longer, a loop starting at a random offset when it is shorter.
pub fn fit_noise_length<R: Rng + ?Sized>(noise: &[f64], len: usize, rng: &mut R) -> Vec<f64> {
    let n = noise.len();
    if n == 0 || len == 0 {
        return vec![0.0; len];
    }
    if n >= len {
        let start = if n == len {
            0
        } else {
            rng.gen_range(0..=n - len)
        };
        noise[start..start + len].to_vec()
    } else {
        let offset = rng.gen_range(0..n);
        (0..len).map(|i| noise[(offset + i) % n]).collect()
    }
}

/// Scales `noise` so that `10 log10(P_clean / P_scaled_noise) = snr_db`,
/// with powers measured over the clean signal's length, and adds it.
///
/// Returns `(noisy, scaled_noise)`. `snr_db = +inf` disables mixing.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<(Waveform, Waveform)> {
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::SampleRateMismatch(
            clean.sample_rate(),
            noise.sample_rate(),
        ));
    }
    if noise.len() < clean.len() {
        return Err(Error::InsufficientSamples {
            needed: clean.len(),
            got: noise.len(),
        });
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidConfig(alloc::format!(
            "target SNR {snr_db} dB"
        )));
    }
    let len = clean.len();
    let rate = clean.sample_rate();
    let clean_power = mean_power(clean.samples());
    if clean_power == 0.0 {
        return Err(Error::DegenerateSource("clean speech"));
    }
    if snr_db == f64::INFINITY {
        return Ok((clean.clone(), Waveform::new(vec![0.0; len], rate)?));
    }
    let segment = &noise.samples()[..len];
    let noise_power = mean_power(segment);
    if noise_power == 0.0 {
        return Err(Error::DegenerateSource("noise"));
    }
    let alpha = (clean_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = segment.iter().map(|n| alpha * n).collect();
    let noisy: Vec<f64> = clean
        .samples()
        .iter()
        .zip(&scaled)
        .map(|(c, n)| c + n)
        .collect();
    Ok((Waveform::new(noisy, rate)?, Waveform::new(scaled, rate)?))
}

/// Linear convolution of `x` with `h`, keeping the first `x.len()` samples.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 || h.is_empty() {
        return vec![0.0; n];
    }
    let taps = h.len().min(n);
    if n * taps <= 1 << 16 {
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let kmax = taps.min(i + 1);
            *o = (0..kmax).map(|k| h[k] * x[i - k]).sum();
        }
        return out;
    }
    let size = (n + taps - 1).next_power_of_two();
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(size, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h[..taps].iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(size, Complex64::new(0.0, 0.0));
    fft(&mut a);
    fft(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    ifft(&mut a);
    a.iter().take(n).map(|z| z.re).collect()
}

/// Reverberates `clean` with `rir`, truncated to the clean length and
/// rescaled to the clean RMS.
pub fn apply_rir(clean: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if rir.is_empty() {
        return Err(Error::EmptyRir);
    }
    if clean.sample_rate() != rir.sample_rate() {
        return Err(Error::SampleRateMismatch(
            clean.sample_rate(),
            rir.sample_rate(),
        ));
    }
    let mut out = convolve_truncated(clean.samples(), rir.samples());
    let target = mean_power(clean.samples());
    let got = mean_power(&out);
    if got > 0.0 {
        let gain = (target / got).sqrt();
        out.iter_mut().for_each(|v| *v *= gain);
    }
    Waveform::new(out, clean.sample_rate())
}

/// Applies `gain_db` to both signals of a pair, then scales both down
/// together if either peak would exceed [`PEAK_CEILING`]. Returns the total
/// linear gain applied. Joint scaling leaves the pair's SNR unchanged.
pub fn level_pair(noisy: &mut [f64], clean: &mut [f64], gain_db: f64) -> f64 {
    let mut gain = 10f64.powf(gain_db / 20.0);
    let peak = noisy
        .iter()
        .chain(clean.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        * gain;
    if peak > PEAK_CEILING {
        gain *= PEAK_CEILING / peak;
    }
    for v in noisy.iter_mut().chain(clean.iter_mut()) {
        *v *= gain;
    }
    gain
}
