//! Spectrogram loading, enhancement and evaluation on corpus files.

use std::fmt::Write as _;
use std::path::Path;

use ehnet_core::dsp::{reconstruct_with_phase, stft, Spectrogram, StftConfig, Waveform};
use ehnet_core::metrics::{align, lsd, snr_db, time_mse, EvalReport, FileMetrics};
use ehnet_core::model::{forward, ModelParams};
use ehnet_core::training::Utterance;
use ehnet_core::Matrix;
use rayon::prelude::*;

use crate::corpus::CorpusIndex;
use crate::error::ResultExt;
use crate::wav::{read_wav, write_wav};
use crate::{Error, Result};

/// Network input: scaled magnitudes in single precision.
pub fn network_input(spec: &Spectrogram, input_scale: f64) -> Matrix<f32> {
    spec.magnitudes().map(|v| (v * input_scale) as f32)
}

fn check_rate(w: &Waveform, expected: u32, path: &Path) -> Result<()> {
    if w.sample_rate() != expected {
        return Err(Error::Usage(format!(
            "{}: sample rate {} Hz, expected {expected} Hz",
            path.display(),
            w.sample_rate()
        )));
    }
    Ok(())
}

/// Loads every pair of `index` as scaled magnitude spectrograms.
pub fn load_utterances(
    index: &CorpusIndex,
    cfg: &StftConfig,
    input_scale: f64,
) -> Result<Vec<Utterance<f32>>> {
    index
        .entries
        .iter()
        .map(|e| {
            let noisy = read_wav(&e.noisy)?;
            let clean = read_wav(&e.clean)?;
            check_rate(&noisy, index.sample_rate, &e.noisy)?;
            check_rate(&clean, index.sample_rate, &e.clean)?;
            let x = stft(&noisy, cfg).context(|| format!("{}", e.noisy.display()))?;
            let y = stft(&clean, cfg).context(|| format!("{}", e.clean.display()))?;
            Ok(Utterance::new(
                network_input(&x, input_scale),
                network_input(&y, input_scale),
            )?)
        })
        .collect()
}

/// STFT, forward pass, then resynthesis with the noisy phase.
pub fn enhance(
    params: &ModelParams<f32>,
    noisy: &Waveform,
    cfg: &StftConfig,
    input_scale: f64,
) -> Result<Waveform> {
    let spec = stft(noisy, cfg)?;
    let pred = forward(&network_input(&spec, input_scale), params)?;
    let magnitudes = pred.map(|v| f64::from(v) / input_scale);
    Ok(reconstruct_with_phase(&magnitudes, &spec)?)
}

/// Enhances every noisy file of `index` into `out_dir/<id>.wav`.
pub fn enhance_index(
    params: &ModelParams<f32>,
    index: &CorpusIndex,
    out_dir: &Path,
    cfg: &StftConfig,
    input_scale: f64,
    bits: u16,
) -> Result<usize> {
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let written: Result<Vec<()>> = index
        .entries
        .par_iter()
        .map(|e| {
            let noisy = read_wav(&e.noisy)?;
            let out = enhance(params, &noisy, cfg, input_scale)?;
            write_wav(&out_dir.join(format!("{}.wav", e.id)), &out, bits)
        })
        .collect();
    Ok(written?.len())
}

/// SNR, LSD and time-domain MSE of `estimate` against `reference`, after
/// trimming both to their common length (at most one FFT frame apart).
pub fn evaluate_pair(
    id: &str,
    reference: &Waveform,
    estimate: &Waveform,
    cfg: &StftConfig,
) -> Result<FileMetrics> {
    let (r, e) = align(reference.samples(), estimate.samples(), cfg.fft_size)?;
    let rate = reference.sample_rate();
    let rs = stft(&Waveform::new(r.to_vec(), rate)?, cfg)?;
    let es = stft(&Waveform::new(e.to_vec(), rate)?, cfg)?;
    Ok(FileMetrics {
        id: id.to_string(),
        snr_db: snr_db(r, e)?,
        lsd: lsd(rs.magnitudes(), es.magnitudes())?,
        time_mse: time_mse(r, e)?,
    })
}

/// Scores `enhanced_dir/<id>.wav` against each clean file of `index`.
/// Files that cannot be scored are listed as failures.
pub fn evaluate_corpus(index: &CorpusIndex, enhanced_dir: &Path, cfg: &StftConfig) -> EvalReport {
    let results: Vec<(String, Result<FileMetrics>)> = index
        .entries
        .par_iter()
        .map(|e| {
            let scored = (|| {
                let clean = read_wav(&e.clean)?;
                let enhanced = read_wav(&enhanced_dir.join(format!("{}.wav", e.id)))?;
                if clean.sample_rate() != enhanced.sample_rate() {
                    return Err(ehnet_core::Error::SampleRateMismatch(
                        clean.sample_rate(),
                        enhanced.sample_rate(),
                    )
                    .into());
                }
                evaluate_pair(&e.id, &clean, &enhanced, cfg)
            })();
            (e.id.clone(), scored)
        })
        .collect();
    let mut report = EvalReport::default();
    for (id, r) in results {
        match r {
            Ok(m) => report.records.push(m),
            Err(err) => report.failures.push((id, err.to_string())),
        }
    }
    report
}

pub fn report_tsv(report: &EvalReport) -> String {
    let mut out = String::from("id\tsnr_db\tlsd\ttime_mse\n");
    for r in &report.records {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.8}",
            r.id, r.snr_db, r.lsd, r.time_mse
        )
        .unwrap();
    }
    if let Some(m) = report.means() {
        writeln!(
            out,
            "mean\t{:.6}\t{:.6}\t{:.8}",
            m.snr_db, m.lsd, m.time_mse
        )
        .unwrap();
    }
    out
}

pub fn report_table(report: &EvalReport) -> String {
    let width = report
        .records
        .iter()
        .map(|r| r.id.len())
        .max()
        .unwrap_or(2)
        .max(4);
    let mut out = String::new();
    let rule = "-".repeat(width + 36);
    writeln!(
        out,
        "{:<width$}  {:>10}  {:>10}  {:>10}",
        "file", "SNR (dB)", "LSD", "MSE"
    )
    .unwrap();
    writeln!(out, "{rule}").unwrap();
    for r in &report.records {
        writeln!(
            out,
            "{:<width$}  {:>10.3}  {:>10.3}  {:>10.5}",
            r.id, r.snr_db, r.lsd, r.time_mse
        )
        .unwrap();
    }
    if let Some(m) = report.means() {
        writeln!(out, "{rule}").unwrap();
        writeln!(
            out,
            "{:<width$}  {:>10.3}  {:>10.3}  {:>10.5}",
            "mean", m.snr_db, m.lsd, m.time_mse
        )
        .unwrap();
    }
    for (id, why) in &report.failures {
        writeln!(out, "FAILED {id}: {why}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ehnet_core::dsp::Window;
    use ehnet_core::metrics::SNR_CAP_DB;
    use ehnet_core::model::Architecture;

    fn small_stft() -> StftConfig {
        StftConfig {
            fft_size: 16,
            hop_size: 8,
            window: Window::SqrtHann,
            bins_kept: 8,
        }
    }

    fn tone(len: usize) -> Waveform {
        Waveform::new(
            (0..len).map(|i| 0.3 * (i as f64 * 0.2).sin()).collect(),
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn zero_model_gives_silence() {
        let params = ModelParams::<f32>::zeros(&Architecture::tiny()).unwrap();
        let out = enhance(&params, &tone(200), &small_stft(), 1.0).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
        assert!(200 - out.len() < 8);
    }

    #[test]
    fn self_evaluation_hits_identities() {
        let w = tone(400);
        let m = evaluate_pair("x", &w, &w, &small_stft()).unwrap();
        assert_eq!(m.snr_db, SNR_CAP_DB);
        assert_eq!(m.lsd, 0.0);
        assert_eq!(m.time_mse, 0.0);
    }

    #[test]
    fn short_estimate_is_trimmed() {
        let w = tone(400);
        let short = Waveform::new(w.samples()[..390].to_vec(), 16_000).unwrap();
        assert_eq!(
            evaluate_pair("x", &w, &short, &small_stft())
                .unwrap()
                .time_mse,
            0.0
        );
        let too_short = Waveform::new(w.samples()[..300].to_vec(), 16_000).unwrap();
        assert!(evaluate_pair("x", &w, &too_short, &small_stft()).is_err());
    }

    #[test]
    fn report_formats() {
        let mut report = EvalReport::default();
        report.records.push(FileMetrics {
            id: "a".into(),
            snr_db: 10.0,
            lsd: 2.0,
            time_mse: 0.001,
        });
        report.failures.push(("b".into(), "missing".into()));
        let tsv = report_tsv(&report);
        assert!(tsv.starts_with("id\tsnr_db"));
        assert!(tsv.contains("mean\t10.000000"));
        assert!(report_table(&report).contains("FAILED b: missing"));
    }
}
