//! Synthetic demo material: harmonic tones and chirps standing in for
//! speech, white and pink noise, and exponentially decaying room responses.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ehnet_core::data::sample_snr_db;
use ehnet_core::dsp::Waveform;
use ehnet_core::rng::seeded;
use rand::Rng;

use crate::manifest::{DatasetManifest, MixSpec};
use crate::wav::write_wav;
use crate::{Error, Result};

pub const DEMO_RATE: u32 = 16_000;

/// Four harmonics of a gliding `f0` under a 3 Hz syllable-rate envelope.
pub fn harmonic_tone(f0: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * f64::from(rate)) as usize;
    (0..n)
        .map(|s| {
            let t = s as f64 / f64::from(rate);
            let envelope = 0.5 + 0.5 * (2.0 * PI * 3.0 * t).sin();
            let phase = 2.0 * PI * f0 * t * (1.0 + 0.1 * t);
            (1..=4)
                .map(|h| 0.1 / h as f64 * (phase * h as f64).sin())
                .sum::<f64>()
                * envelope
        })
        .collect()
}

/// Linear chirp from `from_hz` to `to_hz` with amplitude 0.2.
pub fn chirp(from_hz: f64, to_hz: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * f64::from(rate)) as usize;
    let slope = (to_hz - from_hz) / seconds;
    (0..n)
        .map(|s| {
            let t = s as f64 / f64::from(rate);
            0.2 * (2.0 * PI * (from_hz * t + 0.5 * slope * t * t)).sin()
        })
        .collect()
}

/// Uniform white noise in [-1, 1).
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Pink noise from Paul Kellet's filter bank, normalized to peak 0.9.
pub fn pink_noise(len: usize, seed: u64) -> Vec<f64> {
    let white = white_noise(len, seed);
    let mut b = [0.0f64; 7];
    let mut out: Vec<f64> = white
        .iter()
        .map(|&w| {
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let y = b.iter().sum::<f64>() + w * 0.5362;
            b[6] = w * 0.115926;
            y
        })
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    out
}

/// A unit direct path followed by a noise tail decaying by 60 dB over `rt60` seconds.
pub fn exponential_rir(rt60: f64, len: usize, rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let decay = 6.9078 / (rt60 * f64::from(rate));
    (0..len)
        .map(|i| {
            if i == 0 {
                1.0
            } else {
                0.3 * rng.gen_range(-1.0..1.0) * (-decay * i as f64).exp()
            }
        })
        .collect()
}

/// Paths produced by [`write_demo`].
#[derive(Debug, Clone)]
pub struct DemoAssets {
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub corpus_dir: PathBuf,
}

const DEMO_CONFIG: &str = "\
# Tiny demo model on the bundled synthetic corpus.
bins = 64
kernels = 4
kernel_height = 8
kernel_width = 3
freq_stride = 4
hidden_sizes = 16
fft_size = 128
hop_size = 64
window = sqrt-hann
bins_kept = 64
epochs = 50
crop_frames = 64
batch_size = 2
seed = 0
train_index = corpus/index.tsv
val_index = corpus/index.tsv
out_dir = run
";

/// Writes demo audio under `dir/assets`, a six-mixture manifest and a tiny
/// training config. The corpus itself is not generated here.
pub fn write_demo(dir: &Path, seed: u64) -> Result<DemoAssets> {
    let assets = dir.join("assets");
    for sub in ["clean", "noise", "rir"] {
        let d = assets.join(sub);
        fs::create_dir_all(&d).map_err(Error::io(&d))?;
    }
    let write = |rel: &str, samples: Vec<f64>| -> Result<PathBuf> {
        let path = assets.join(rel);
        write_wav(&path, &Waveform::new(samples, DEMO_RATE)?, 16)?;
        Ok(path)
    };
    let cleans = [
        write("clean/tone_220.wav", harmonic_tone(220.0, 0.5, DEMO_RATE))?,
        write("clean/tone_330.wav", harmonic_tone(330.0, 0.5, DEMO_RATE))?,
        write("clean/chirp.wav", chirp(300.0, 3000.0, 0.5, DEMO_RATE))?,
    ];
    let noises = [
        write(
            "noise/white.wav",
            white_noise(16_000, seed).iter().map(|v| 0.5 * v).collect(),
        )?,
        write("noise/pink.wav", pink_noise(6_400, seed + 1))?,
    ];
    let rooms = [
        write(
            "rir/small_room.wav",
            exponential_rir(0.2, 1_600, DEMO_RATE, seed + 2),
        )?,
        write(
            "rir/large_room.wav",
            exponential_rir(0.4, 3_200, DEMO_RATE, seed + 3),
        )?,
    ];
    let rir_choice = [None, Some(0), None, Some(1), Some(0), None];
    let mut snr_rng = seeded(seed);
    let specs = (0..6)
        .map(|i| MixSpec {
            clean: cleans[i % 3].clone(),
            noise: noises[i % 2].clone(),
            rir: rir_choice[i].map(|r| rooms[r].clone()),
            snr_db: (sample_snr_db(&mut snr_rng) * 100.0).round() / 100.0,
            seed: seed * 1000 + i as u64,
            gain_db: 0.0,
        })
        .collect();
    let manifest = DatasetManifest {
        split: "demo".into(),
        specs,
        ..DatasetManifest::default()
    };
    let manifest_path = dir.join("demo_manifest.tsv");
    fs::write(&manifest_path, manifest.to_text(dir)).map_err(Error::io(&manifest_path))?;
    let config = dir.join("demo.conf");
    fs::write(&config, DEMO_CONFIG).map_err(Error::io(&config))?;
    Ok(DemoAssets {
        manifest: manifest_path,
        config,
        corpus_dir: dir.join("corpus"),
    })
}
