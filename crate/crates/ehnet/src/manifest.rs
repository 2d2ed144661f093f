//! Dataset manifests.
//!
//! A manifest is a tab-separated file with one mixture per line:
//!
//! ```text
//! #sample_rate=16000
//! #split=train
//! #rng=chacha20
//! #target=reverberant
//! clean.wav<TAB>noise.wav<TAB>rir.wav<TAB>12.5<TAB>7<TAB>0
//! ```
//!
//! Fields are clean path, noise path, RIR path or `-`, target SNR in dB
//! (`inf` disables mixing), seed, and gain in dB (optional, default 0).
//! Header keys: `sample_rate`, `split`, `rng`, `target` (`reverberant` or
//! `dry`), `bits` (16 or 24) and `disjoint_from`, a manifest whose noise
//! files this one must not reuse. Relative paths resolve against the
//! manifest's directory.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ehnet_core::rng::RNG_ALGORITHM;

use crate::wav::SUPPORTED_BITS;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Target {
    /// The regression target passes through the same RIR as the mixture.
    #[default]
    Reverberant,
    /// The regression target is the dry source.
    Dry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSpec {
    pub clean: PathBuf,
    pub noise: PathBuf,
    pub rir: Option<PathBuf>,
    pub snr_db: f64,
    pub seed: u64,
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub split: String,
    pub sample_rate: u32,
    pub target: Target,
    pub bits: u16,
    pub disjoint_from: Option<PathBuf>,
    pub specs: Vec<MixSpec>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            split: "train".into(),
            sample_rate: 16_000,
            target: Target::Reverberant,
            bits: 16,
            disjoint_from: None,
            specs: Vec::new(),
        }
    }
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let at = || format!("manifest line {}", n + 1);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let Some((k, v)) = header.split_once('=') else {
                    continue;
                };
                let (k, v) = (k.trim(), v.trim());
                let num_err = |_| Error::parse(at(), format!("bad value `{v}` for `{k}`"));
                match k {
                    "sample_rate" => m.sample_rate = v.parse().map_err(num_err)?,
                    "split" => m.split = v.to_string(),
                    "rng" if v == RNG_ALGORITHM => {}
                    "rng" => {
                        return Err(Error::parse(
                            at(),
                            format!("unsupported rng `{v}`; only {RNG_ALGORITHM}"),
                        ))
                    }
                    "target" => {
                        m.target = match v {
                            "reverberant" => Target::Reverberant,
                            "dry" => Target::Dry,
                            _ => {
                                return Err(Error::parse(
                                    at(),
                                    format!("target must be reverberant or dry, got `{v}`"),
                                ))
                            }
                        }
                    }
                    "bits" => {
                        m.bits = v.parse().map_err(num_err)?;
                        if !SUPPORTED_BITS.contains(&m.bits) {
                            return Err(Error::parse(
                                at(),
                                format!("bits must be 16 or 24, got {v}"),
                            ));
                        }
                    }
                    "disjoint_from" => m.disjoint_from = Some(base.join(v)),
                    _ => return Err(Error::parse(at(), format!("unknown header key `{k}`"))),
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if !(5..=6).contains(&fields.len()) {
                return Err(Error::parse(
                    at(),
                    format!("expected 5 or 6 tab-separated fields, got {}", fields.len()),
                ));
            }
            let snr_db: f64 = fields[3]
                .parse()
                .map_err(|_| Error::parse(at(), format!("bad SNR `{}`", fields[3])))?;
            if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
                return Err(Error::parse(at(), "SNR must be finite or inf"));
            }
            let seed = fields[4]
                .parse()
                .map_err(|_| Error::parse(at(), format!("bad seed `{}`", fields[4])))?;
            let gain_db = match fields.get(5) {
                Some(g) => g
                    .parse()
                    .ok()
                    .filter(|g: &f64| g.is_finite())
                    .ok_or_else(|| Error::parse(at(), format!("bad gain `{g}`")))?,
                None => 0.0,
            };
            m.specs.push(MixSpec {
                clean: base.join(fields[0]),
                noise: base.join(fields[1]),
                rir: (fields[2] != "-").then(|| base.join(fields[2])),
                snr_db,
                seed,
                gain_db,
            });
        }
        Ok(m)
    }

    /// Serializes with paths made relative to `base` where possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut out = String::new();
        writeln!(out, "#sample_rate={}", self.sample_rate).unwrap();
        writeln!(out, "#split={}", self.split).unwrap();
        writeln!(out, "#rng={RNG_ALGORITHM}").unwrap();
        let target = match self.target {
            Target::Reverberant => "reverberant",
            Target::Dry => "dry",
        };
        writeln!(out, "#target={target}").unwrap();
        writeln!(out, "#bits={}", self.bits).unwrap();
        if let Some(d) = &self.disjoint_from {
            writeln!(out, "#disjoint_from={}", rel(d)).unwrap();
        }
        for s in &self.specs {
            let rir = s.rir.as_deref().map_or("-".into(), rel);
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                rel(&s.clean),
                rel(&s.noise),
                rir,
                s.snr_db,
                s.seed,
                s.gain_db
            )
            .unwrap();
        }
        out
    }

    /// Fails if any noise file name also appears in the `disjoint_from` manifest.
    pub fn check_disjoint(&self) -> Result<()> {
        let Some(other) = &self.disjoint_from else {
            return Ok(());
        };
        let names = |m: &DatasetManifest| -> BTreeSet<String> {
            m.specs
                .iter()
                .filter_map(|s| {
                    s.noise
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                })
                .collect()
        };
        let theirs = names(&Self::load(other)?);
        let shared: Vec<String> = names(self).intersection(&theirs).cloned().collect();
        if shared.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "split `{}` must not reuse noise files from {}: {}",
                self.split,
                other.display(),
                shared.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "#sample_rate=16000\n#split=test\n#rng=chacha20\n#target=dry\n#bits=24\n\
        clean/a.wav\tnoise/n.wav\t-\t12.5\t7\t-3\n\
        clean/b.wav\tnoise/m.wav\trir/r.wav\tinf\t8\n";

    #[test]
    fn parse_and_round_trip() {
        let m = DatasetManifest::parse(SAMPLE, Path::new("/d")).unwrap();
        assert_eq!(m.split, "test");
        assert_eq!(m.target, Target::Dry);
        assert_eq!(m.bits, 24);
        assert_eq!(m.specs.len(), 2);
        assert_eq!(m.specs[0].clean, PathBuf::from("/d/clean/a.wav"));
        assert_eq!(m.specs[0].rir, None);
        assert_eq!(m.specs[0].gain_db, -3.0);
        assert_eq!(m.specs[1].snr_db, f64::INFINITY);
        assert_eq!(m.specs[1].rir, Some(PathBuf::from("/d/rir/r.wav")));
        let back = DatasetManifest::parse(&m.to_text(Path::new("/d")), Path::new("/d")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in [
            "a\tb\t-\tx\t1",
            "a\tb\t-\t1",
            "a\tb\t-\tnan\t1",
            "#rng=pcg32",
            "#target=wet",
            "#bits=8",
            "#colour=blue",
        ] {
            assert!(DatasetManifest::parse(bad, Path::new("")).is_err(), "{bad}");
        }
    }

    #[test]
    fn disjointness() {
        let dir = tempfile::tempdir().unwrap();
        let train = "c.wav\tnoise/n1.wav\t-\t5\t1\n";
        fs::write(dir.path().join("train.tsv"), train).unwrap();
        let ok = DatasetManifest::parse(
            "#disjoint_from=train.tsv\nc.wav\tother/n2.wav\t-\t5\t1\n",
            dir.path(),
        )
        .unwrap();
        ok.check_disjoint().unwrap();
        let clash = DatasetManifest::parse(
            "#disjoint_from=train.tsv\nc.wav\telsewhere/n1.wav\t-\t5\t1\n",
            dir.path(),
        )
        .unwrap();
        assert!(clash.check_disjoint().is_err());
    }
}
