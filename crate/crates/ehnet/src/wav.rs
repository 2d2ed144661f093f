//! Mono PCM WAV reading and writing.
//!
//! Integer samples are mapped to reals by dividing by `2^(bits - 1)`, so
//! full scale negative is exactly -1.

use std::path::Path;

use ehnet_core::dsp::Waveform;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

/// Bit depths accepted for reading and writing.
pub const SUPPORTED_BITS: [u16; 2] = [16, 24];

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let unsupported = |detail: String| Error::UnsupportedAudio {
        path: path.to_path_buf(),
        detail,
    };
    if spec.channels != 1 {
        return Err(unsupported(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || !SUPPORTED_BITS.contains(&spec.bits_per_sample) {
        return Err(unsupported(format!(
            "{}-bit {:?} samples, expected 16- or 24-bit integer PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let scale = full_scale(spec.bits_per_sample);
    let samples = reader
        .samples::<i32>()
        .map(|s| s.map(|v| f64::from(v) / scale))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    if samples.is_empty() {
        return Err(unsupported("no samples".into()));
    }
    Ok(Waveform::new(samples, spec.sample_rate)?)
}

pub fn write_wav(path: &Path, wave: &Waveform, bits: u16) -> Result<()> {
    if !SUPPORTED_BITS.contains(&bits) {
        return Err(Error::Usage(format!(
            "cannot write {bits}-bit WAV; use 16 or 24"
        )));
    }
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: bits,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for q in quantize(wave.samples(), bits) {
        writer.write_sample(q).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

fn full_scale(bits: u16) -> f64 {
    f64::from(1u32 << (bits - 1))
}

/// Rounds to the nearest integer code, saturating at the format limits.
pub fn quantize(samples: &[f64], bits: u16) -> Vec<i32> {
    let scale = full_scale(bits);
    let (lo, hi) = (-scale, scale - 1.0);
    samples
        .iter()
        .map(|&x| (x * scale).round().clamp(lo, hi) as i32)
        .collect()
}

/// The values a waveform takes after a write and read at `bits`.
pub fn requantize(samples: &[f64], bits: u16) -> Vec<f64> {
    let scale = full_scale(bits);
    quantize(samples, bits)
        .into_iter()
        .map(|q| f64::from(q) / scale)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_requantize() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<f64> = (0..500).map(|i| (i as f64 * 0.05).sin() * 0.8).collect();
        for bits in SUPPORTED_BITS {
            let path = dir.path().join(format!("t{bits}.wav"));
            let w = Waveform::new(samples.clone(), 16_000).unwrap();
            write_wav(&path, &w, bits).unwrap();
            let back = read_wav(&path).unwrap();
            assert_eq!(back.sample_rate(), 16_000);
            assert_eq!(back.samples(), requantize(&samples, bits).as_slice());
            let step = 1.0 / full_scale(bits);
            assert!(back
                .samples()
                .iter()
                .zip(&samples)
                .all(|(a, b)| (a - b).abs() <= step / 2.0));
        }
    }

    #[test]
    fn saturation() {
        assert_eq!(
            quantize(&[1.5, -1.5, 1.0, -1.0], 16),
            vec![32767, -32768, 32767, -32768]
        );
    }

    #[test]
    fn rejects_stereo_and_float() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(Error::UnsupportedAudio { .. })
        ));

        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(Error::UnsupportedAudio { .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            read_wav(Path::new("/nonexistent/x.wav")),
            Err(Error::Wav { .. })
        ));
    }
}
