//! Corpus synthesis from a manifest, and the index it produces.
//!
//! For every mixture: read clean speech, optionally reverberate it, fit the
//! noise to its length, mix at the target SNR, apply the gain, then write
//! `noisy/<id>.wav` and `clean/<id>.wav`. The index records the SNR measured
//! on the quantized samples that were written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ehnet_core::data::{apply_rir, fit_noise_length, level_pair, mix_at_snr};
use ehnet_core::dsp::Waveform;
use ehnet_core::metrics::snr_db;
use ehnet_core::rng::{seeded, RNG_ALGORITHM};
use rayon::prelude::*;

use crate::manifest::{DatasetManifest, MixSpec, Target};
use crate::wav::{read_wav, requantize, write_wav};
use crate::{Error, Result};

/// Largest fraction of mixtures that may fail before generation aborts.
pub const MAX_SKIP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub noisy: PathBuf,
    pub clean: PathBuf,
    /// SNR of the written pair, measured against the mixture's speech component.
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    pub split: String,
    pub sample_rate: u32,
    pub entries: Vec<IndexEntry>,
}

impl CorpusIndex {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut index = CorpusIndex {
            split: String::new(),
            sample_rate: 16_000,
            entries: Vec::new(),
        };
        for (n, line) in text.lines().enumerate() {
            let at = || format!("index line {}", n + 1);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                match header.split_once('=') {
                    Some(("split", v)) => index.split = v.to_string(),
                    Some(("sample_rate", v)) => {
                        index.sample_rate = v
                            .parse()
                            .map_err(|_| Error::parse(at(), format!("bad sample rate `{v}`")))?
                    }
                    Some(("rng", v)) if v != RNG_ALGORITHM => {
                        return Err(Error::parse(
                            at(),
                            format!("corpus made with unsupported rng `{v}`"),
                        ))
                    }
                    _ => {}
                }
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::parse(
                    at(),
                    format!("expected 4 fields, got {}", f.len()),
                ));
            }
            index.entries.push(IndexEntry {
                id: f[0].to_string(),
                noisy: base.join(f[1]),
                clean: base.join(f[2]),
                snr_db: f[3]
                    .parse()
                    .map_err(|_| Error::parse(at(), format!("bad SNR `{}`", f[3])))?,
            });
        }
        Ok(index)
    }

    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut out = format!(
            "#split={}\n#sample_rate={}\n#rng={RNG_ALGORITHM}\n#columns=id,noisy,clean,snr_db\n",
            self.split, self.sample_rate
        );
        for e in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}\t{:.6}",
                e.id,
                rel(&e.noisy),
                rel(&e.clean),
                e.snr_db
            )
            .unwrap();
        }
        out
    }
}

/// One synthesized pair before it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPair {
    pub noisy: Waveform,
    pub clean: Waveform,
    pub snr_db: f64,
}

fn read_at_rate(path: &Path, rate: u32) -> Result<Waveform> {
    let w = read_wav(path)?;
    if w.sample_rate() != rate {
        return Err(ehnet_core::Error::SampleRateMismatch(rate, w.sample_rate()).into());
    }
    Ok(w)
}

/// Synthesizes one pair, already quantized to the manifest's bit depth.
pub fn render_pair(spec: &MixSpec, manifest: &DatasetManifest) -> Result<RenderedPair> {
    let rate = manifest.sample_rate;
    let dry = read_at_rate(&spec.clean, rate)?;
    let noise = read_at_rate(&spec.noise, rate)?;
    let mut rng = seeded(spec.seed);
    let speech = match &spec.rir {
        Some(p) => apply_rir(&dry, &read_at_rate(p, rate)?)?,
        None => dry.clone(),
    };
    let fitted = Waveform::new(
        fit_noise_length(noise.samples(), speech.len(), &mut rng),
        rate,
    )?;
    let (noisy, _) = mix_at_snr(&speech, &fitted, spec.snr_db)?;

    let mut noisy = noisy.into_samples();
    let mut reference = speech.into_samples();
    let gain = level_pair(&mut noisy, &mut reference, spec.gain_db);
    let target = match manifest.target {
        Target::Reverberant => reference.clone(),
        Target::Dry => dry.samples().iter().map(|v| v * gain).collect(),
    };
    let noisy = requantize(&noisy, manifest.bits);
    let reference = requantize(&reference, manifest.bits);
    let snr = snr_db(&reference, &noisy)?;
    Ok(RenderedPair {
        noisy: Waveform::new(noisy, rate)?,
        clean: Waveform::new(requantize(&target, manifest.bits), rate)?,
        snr_db: snr,
    })
}

#[derive(Debug, Clone)]
pub struct CorpusSummary {
    pub index_path: PathBuf,
    pub written: usize,
    /// `(manifest record number, reason)` for every skipped mixture.
    pub skipped: Vec<(usize, String)>,
    /// Achieved SNRs of the written pairs.
    pub snrs: Vec<f64>,
}

impl CorpusSummary {
    /// Counts per 5 dB bin from 0 to 30 dB, with out-of-range values in the end bins.
    pub fn histogram(&self) -> [usize; 6] {
        let mut bins = [0; 6];
        for &s in &self.snrs {
            let i = if s.is_finite() {
                (s / 5.0).floor().clamp(0.0, 5.0) as usize
            } else {
                5
            };
            bins[i] += 1;
        }
        bins
    }
}

/// Writes every mixture of `manifest` under `out_dir` using `workers` threads.
///
/// Failed mixtures are skipped with a warning; more than
/// [`MAX_SKIP_FRACTION`] of them aborts the run. Output bytes do not depend
/// on the number of workers.
pub fn generate_corpus(
    manifest: &DatasetManifest,
    out_dir: &Path,
    workers: usize,
) -> Result<CorpusSummary> {
    if manifest.specs.is_empty() {
        return Err(Error::Usage("manifest lists no mixtures".into()));
    }
    manifest.check_disjoint()?;
    let noisy_dir = out_dir.join("noisy");
    let clean_dir = out_dir.join("clean");
    for d in [&noisy_dir, &clean_dir] {
        fs::create_dir_all(d).map_err(Error::io(d))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;

    let results: Vec<Result<IndexEntry>> = pool.install(|| {
        manifest
            .specs
            .par_iter()
            .enumerate()
            .map(|(i, spec)| {
                let id = format!("{}-{i:05}", manifest.split);
                let pair = render_pair(spec, manifest)?;
                let entry = IndexEntry {
                    noisy: noisy_dir.join(format!("{id}.wav")),
                    clean: clean_dir.join(format!("{id}.wav")),
                    snr_db: pair.snr_db,
                    id,
                };
                write_wav(&entry.noisy, &pair.noisy, manifest.bits)?;
                write_wav(&entry.clean, &pair.clean, manifest.bits)?;
                Ok(entry)
            })
            .collect()
    });

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => {
                log::warn!("skipping manifest record {}: {e}", i + 1);
                skipped.push((i + 1, e.to_string()));
            }
        }
    }
    let total = manifest.specs.len();
    if skipped.len() as f64 > MAX_SKIP_FRACTION * total as f64 {
        return Err(Error::CorpusAborted(format!(
            "{} of {total} mixtures failed",
            skipped.len()
        )));
    }
    let index = CorpusIndex {
        split: manifest.split.clone(),
        sample_rate: manifest.sample_rate,
        entries,
    };
    let index_path = out_dir.join("index.tsv");
    fs::write(&index_path, index.to_text(out_dir)).map_err(Error::io(&index_path))?;
    Ok(CorpusSummary {
        index_path,
        written: index.entries.len(),
        snrs: index.entries.iter().map(|e| e.snr_db).collect(),
        skipped,
    })
}
