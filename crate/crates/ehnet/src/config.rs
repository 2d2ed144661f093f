//! Flat `key = value` configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Every field of
//! [`RunConfig`] has a key, unknown keys are rejected, and relative paths are
//! resolved against the directory holding the file. The same text form is
//! used to echo the effective configuration and inside checkpoint headers.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ehnet_core::dsp::{StftConfig, Window};
use ehnet_core::model::Architecture;
use ehnet_core::training::{LrSchedule, TrainConfig};

use crate::{Error, Result};

/// Splits text into `(key, value)` pairs, ignoring blanks and comments.
pub fn parse_kv(text: &str, what: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::parse(
                format!("{what} line {}", n + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::parse(
            format!("config key `{key}`"),
            format!("cannot parse `{value}`"),
        )
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn join(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Everything needed to build, train and run a model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: Architecture,
    pub stft: StftConfig,
    pub train: TrainConfig,
    /// Factor applied to magnitudes before they enter the network; 1 disables it.
    pub input_scale: f64,
    pub sample_rate: u32,
    pub train_index: Option<PathBuf>,
    pub val_index: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Threads computing minibatch gradients.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::full_size(),
            stft: StftConfig::default(),
            train: TrainConfig::default(),
            input_scale: 1.0,
            sample_rate: 16_000,
            train_index: None,
            val_index: None,
            out_dir: PathBuf::from("run"),
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_text(&text, base)
    }

    pub fn from_text(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text, "config")? {
            cfg.set(&k, &v, base)?;
        }
        Ok(cfg)
    }

    /// Sets one key. Relative paths are joined onto `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        let optional = || (value != "-").then(path);
        match key {
            "train_index" => self.train_index = optional(),
            "val_index" => self.val_index = optional(),
            "out_dir" => self.out_dir = path(),
            "input_scale" => self.input_scale = parse_num(key, value)?,
            "sample_rate" => self.sample_rate = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            "epochs" => self.train.epochs = parse_num(key, value)?,
            "schedule" => {
                self.train.schedule = value
                    .parse::<LrSchedule>()
                    .map_err(|e| Error::parse("config key `schedule`", e.to_string()))?
            }
            "crop_frames" => self.train.crop_frames = parse_num(key, value)?,
            "batch_size" => self.train.batch_size = parse_num(key, value)?,
            "seed" => self.train.seed = parse_num(key, value)?,
            "patience" => {
                self.train.patience = match value {
                    "none" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "validate_every" => self.train.validate_every = parse_num(key, value)?,
            "rho" => self.train.rho = parse_num(key, value)?,
            "eps" => self.train.eps = parse_num(key, value)?,
            _ => {
                if !set_model_key(&mut self.arch, &mut self.stft, key, value)? {
                    return Err(Error::parse("config", format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides given on the command line.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("override `{item}` is not key=value")))?;
            self.set(k.trim(), v.trim(), Path::new(""))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.stft.validate()?;
        self.train.validate(self.arch.kernel_width)?;
        if self.arch.bins != self.stft.bins_kept {
            return Err(Error::Usage(format!(
                "model expects {} bins but the STFT keeps {}",
                self.arch.bins, self.stft.bins_kept
            )));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Usage(format!(
                "input_scale must be positive, got {}",
                self.input_scale
            )));
        }
        if self.sample_rate == 0 || self.workers == 0 {
            return Err(Error::Usage(
                "sample_rate and workers must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The effective configuration in the file syntax.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut out = model_text(&self.arch, &self.stft);
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        line("input_scale", self.input_scale.to_string());
        line("sample_rate", self.sample_rate.to_string());
        line("epochs", t.epochs.to_string());
        line("schedule", t.schedule.to_string());
        line("crop_frames", t.crop_frames.to_string());
        line("batch_size", t.batch_size.to_string());
        line("seed", t.seed.to_string());
        line(
            "patience",
            t.patience.map_or("none".into(), |p| p.to_string()),
        );
        line("validate_every", t.validate_every.to_string());
        line("rho", t.rho.to_string());
        line("eps", t.eps.to_string());
        line("workers", self.workers.to_string());
        let show = |p: &Option<PathBuf>| p.as_ref().map_or("-".into(), |p| p.display().to_string());
        line("train_index", show(&self.train_index));
        line("val_index", show(&self.val_index));
        line("out_dir", self.out_dir.display().to_string());
        out
    }
}

/// Architecture and STFT keys, shared with checkpoint headers.
pub fn model_text(arch: &Architecture, stft: &StftConfig) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
    line("bins", arch.bins.to_string());
    line("kernels", arch.kernels.to_string());
    line("kernel_height", arch.kernel_height.to_string());
    line("kernel_width", arch.kernel_width.to_string());
    line("freq_stride", arch.freq_stride.to_string());
    line("hidden_sizes", join(&arch.hidden_sizes));
    line("fft_size", stft.fft_size.to_string());
    line("hop_size", stft.hop_size.to_string());
    line("window", stft.window.to_string());
    line("bins_kept", stft.bins_kept.to_string());
    out
}

/// Sets an architecture or STFT key; returns false for other keys.
pub fn set_model_key(
    arch: &mut Architecture,
    stft: &mut StftConfig,
    key: &str,
    value: &str,
) -> Result<bool> {
    match key {
        "bins" => arch.bins = parse_num(key, value)?,
        "kernels" => arch.kernels = parse_num(key, value)?,
        "kernel_height" => arch.kernel_height = parse_num(key, value)?,
        "kernel_width" => arch.kernel_width = parse_num(key, value)?,
        "freq_stride" => arch.freq_stride = parse_num(key, value)?,
        "hidden_sizes" => arch.hidden_sizes = parse_list(key, value)?,
        "fft_size" => stft.fft_size = parse_num(key, value)?,
        "hop_size" => stft.hop_size = parse_num(key, value)?,
        "window" => {
            stft.window = value
                .parse::<Window>()
                .map_err(|e| Error::parse("config key `window`", e.to_string()))?
        }
        "bins_kept" => stft.bins_kept = parse_num(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}
