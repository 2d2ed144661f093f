//! Training runs on disk: checkpoints, resume and the training log.
//!
//! A run directory holds `last.ckpt` (parameters plus optimizer state after
//! the latest epoch), `best.ckpt` (the snapshot with the lowest validation
//! loss) and `train.log`, one tab-separated record per epoch.

use std::cell::RefCell;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ehnet_core::model::ModelParams;
use ehnet_core::rng::seeded_stream;
use ehnet_core::training::{
    train, AdaDelta, BestSnapshot, EpochRecord, GradientEngine, Sequential, TrainState,
};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::corpus::CorpusIndex;
use crate::parallel::RayonEngine;
use crate::pipeline::load_utterances;
use crate::{Error, Result};

pub const LOG_HEADER: &str = "# epoch\tstep\ttrain_loss\tval_loss\tlr_multiplier\twall_time_ms";

/// Stream used for parameter initialization, apart from the per-epoch streams.
const INIT_STREAM: u64 = u64::MAX;

pub fn format_record(rec: &EpochRecord, wall_time_ms: u128) -> String {
    let val = rec.val_loss.map_or("-".to_string(), |v| format!("{v:.9e}"));
    format!(
        "{}\t{}\t{:.9e}\t{}\t{}\t{}",
        rec.epoch, rec.step, rec.train_loss, val, rec.lr_multiplier, wall_time_ms
    )
}

/// Append-only writer for `train.log`.
pub struct TrainLog {
    file: File,
    path: PathBuf,
}

impl TrainLog {
    /// Opens for appending, writing the header if the file is new or empty.
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(Error::io(path))?;
        if file.metadata().map_err(Error::io(path))?.len() == 0 {
            writeln!(file, "{LOG_HEADER}").map_err(Error::io(path))?;
        }
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, rec: &EpochRecord, wall_time_ms: u128) -> Result<()> {
        writeln!(self.file, "{}", format_record(rec, wall_time_ms)).map_err(Error::io(&self.path))
    }
}

#[derive(Debug, Clone)]
pub struct RunPaths {
    pub best: PathBuf,
    pub last: PathBuf,
    pub log: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path) -> Self {
        Self {
            best: out_dir.join("best.ckpt"),
            last: out_dir.join("last.ckpt"),
            log: out_dir.join("train.log"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub first_epoch: usize,
    pub epochs_run: usize,
    pub first_train_loss: Option<f64>,
    pub last_train_loss: Option<f64>,
    pub paths: RunPaths,
}

fn checkpoint_for(
    cfg: &RunConfig,
    params: &ModelParams<f32>,
    state: &TrainState<f32>,
) -> Checkpoint {
    let mut ck = Checkpoint::new(params.clone(), cfg.stft);
    let meta = &mut ck.meta;
    meta.insert("input_scale".into(), cfg.input_scale.to_string());
    meta.insert("sample_rate".into(), cfg.sample_rate.to_string());
    meta.insert("rho".into(), cfg.train.rho.to_string());
    meta.insert("eps".into(), cfg.train.eps.to_string());
    meta.insert("seed".into(), cfg.train.seed.to_string());
    meta.insert("epoch".into(), state.epoch.to_string());
    meta.insert("step".into(), state.step.to_string());
    meta.insert(
        "validations_since_best".into(),
        state.validations_since_best.to_string(),
    );
    if let Some(b) = &state.best {
        meta.insert("best_val_loss".into(), format!("{:e}", b.val_loss));
        meta.insert("best_epoch".into(), b.epoch.to_string());
    }
    ck
}

fn required<T: std::str::FromStr>(ck: &Checkpoint, key: &str, path: &Path) -> Result<T> {
    ck.meta_value(key)?.ok_or_else(|| {
        Error::parse(
            path.display().to_string(),
            format!("checkpoint lacks `{key}`"),
        )
    })
}

fn resume_state(cfg: &RunConfig, paths: &RunPaths) -> Result<TrainState<f32>> {
    let last = Checkpoint::load(&paths.last)?;
    if last.params.architecture() != &cfg.arch || last.stft != cfg.stft {
        return Err(Error::Usage(format!(
            "{} was trained with a different architecture or STFT",
            paths.last.display()
        )));
    }
    let opt = last.optimizer.clone().ok_or_else(|| {
        Error::Usage(format!(
            "{} has no optimizer state to resume from",
            paths.last.display()
        ))
    })?;
    let optimizer = AdaDelta::with_accumulators(
        &last.params,
        cfg.train.rho,
        cfg.train.eps,
        opt.sq_grad,
        opt.sq_delta,
    )?;
    let best = if paths.best.exists() {
        let ck = Checkpoint::load(&paths.best)?;
        Some(BestSnapshot {
            val_loss: required(&ck, "best_val_loss", &paths.best)?,
            epoch: required(&ck, "best_epoch", &paths.best)?,
            params: ck.params,
        })
    } else {
        None
    };
    Ok(TrainState {
        epoch: required(&last, "epoch", &paths.last)?,
        step: required(&last, "step", &paths.last)?,
        validations_since_best: required(&last, "validations_since_best", &paths.last)?,
        params: last.params,
        optimizer,
        best,
    })
}

/// Trains according to `cfg`, writing checkpoints and the log under
/// `cfg.out_dir`. With `resume`, continues from `last.ckpt` and keeps the
/// epoch numbering.
pub fn run_training(cfg: &RunConfig, resume: bool) -> Result<RunSummary> {
    cfg.validate()?;
    let need = |p: &Option<PathBuf>, key: &str| {
        p.clone()
            .ok_or_else(|| Error::Usage(format!("`{key}` is not set in the config")))
    };
    let load = |path: PathBuf| -> Result<_> {
        let index = CorpusIndex::load(&path)?;
        if index.entries.is_empty() {
            return Err(Error::Usage(format!("{} lists no pairs", path.display())));
        }
        load_utterances(&index, &cfg.stft, cfg.input_scale)
    };
    let train_set = load(need(&cfg.train_index, "train_index")?)?;
    let val_set = load(need(&cfg.val_index, "val_index")?)?;

    fs::create_dir_all(&cfg.out_dir).map_err(Error::io(&cfg.out_dir))?;
    let paths = RunPaths::new(&cfg.out_dir);
    let state = if resume {
        resume_state(cfg, &paths)?
    } else {
        let params = ModelParams::init(&cfg.arch, &mut seeded_stream(cfg.train.seed, INIT_STREAM))?;
        if paths.log.exists() {
            fs::remove_file(&paths.log).map_err(Error::io(&paths.log))?;
        }
        TrainState::fresh(params, &cfg.train)?
    };
    let first_epoch = state.epoch;
    log::info!(
        "training {} parameters on {} pairs from epoch {first_epoch}",
        cfg.arch.parameter_count(),
        train_set.len()
    );

    let engine: Box<dyn GradientEngine<f32>> = if cfg.workers > 1 {
        Box::new(RayonEngine::new(cfg.workers)?)
    } else {
        Box::new(Sequential)
    };
    let mut log = TrainLog::open(&paths.log)?;
    let start = Instant::now();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let mut on_epoch = |rec: &EpochRecord, state: &TrainState<f32>| {
        if failure.borrow().is_some() {
            return;
        }
        let wrote = (|| {
            log.append(rec, start.elapsed().as_millis())?;
            if rec.improved {
                if let Some(best) = &state.best {
                    checkpoint_for(cfg, &best.params, state).save(&paths.best)?;
                }
            }
            checkpoint_for(cfg, &state.params, state)
                .with_optimizer(&state.optimizer)
                .save(&paths.last)
        })();
        if let Err(e) = wrote {
            *failure.borrow_mut() = Some(e);
        }
        log::info!(
            "epoch {} train {:.6e} val {}",
            rec.epoch,
            rec.train_loss,
            rec.val_loss.map_or("-".into(), |v| format!("{v:.6e}"))
        );
    };
    let outcome = train(
        &train_set,
        &val_set,
        &cfg.train,
        state,
        engine.as_ref(),
        &mut on_epoch,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if !paths.best.exists() {
        checkpoint_for(cfg, &outcome.best_params, &outcome.state).save(&paths.best)?;
    }
    Ok(RunSummary {
        best_val_loss: outcome.best_val_loss,
        best_epoch: outcome.best_epoch,
        first_epoch,
        epochs_run: outcome.log.len(),
        first_train_loss: outcome.log.first().map(|r| r.train_loss),
        last_train_loss: outcome.log.last().map(|r| r.train_loss),
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_format() {
        let rec = EpochRecord {
            epoch: 3,
            step: 12,
            train_loss: 0.5,
            val_loss: None,
            lr_multiplier: 0.1,
            improved: false,
        };
        let line = format_record(&rec, 42);
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), LOG_HEADER.split('\t').count());
        assert_eq!(fields[0], "3");
        assert_eq!(fields[3], "-");
        assert_eq!(fields[4], "0.1");
        assert_eq!(fields[5], "42");
    }

    #[test]
    fn log_is_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.log");
        let rec = EpochRecord {
            epoch: 0,
            step: 1,
            train_loss: 1.0,
            val_loss: Some(2.0),
            lr_multiplier: 1.0,
            improved: true,
        };
        TrainLog::open(&path).unwrap().append(&rec, 1).unwrap();
        TrainLog::open(&path).unwrap().append(&rec, 2).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), LOG_HEADER);
    }
}
