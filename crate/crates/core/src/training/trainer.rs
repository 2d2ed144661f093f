use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::adadelta::{AdaDelta, LrSchedule};
use super::backward::{backward_scaled, GradientSet};
use super::loss::masked_mse_loss;
use crate::model::{forward, forward_train, ModelParams};
use crate::rng::seeded_stream;
use crate::{Error, Matrix, Result, Scalar};

/// A (noisy, clean) pair of `d x t` magnitude spectrograms.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance<T> {
    pub noisy: Matrix<T>,
    pub clean: Matrix<T>,
}

impl<T: Scalar> Utterance<T> {
    pub fn new(noisy: Matrix<T>, clean: Matrix<T>) -> Result<Self> {
        clean.ensure_shape("clean spectrogram", noisy.shape())?;
        Ok(Self { noisy, clean })
    }

    pub fn frames(&self) -> usize {
        self.noisy.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub schedule: LrSchedule,
    /// Length of the random training crops in frames.
    pub crop_frames: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many validations without improvement. `None` keeps
    /// going for all epochs.
    pub patience: Option<usize>,
    /// Validate every this many epochs.
    pub validate_every: usize,
    pub rho: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            schedule: LrSchedule::default(),
            crop_frames: 256,
            batch_size: 4,
            seed: 0,
            patience: None,
            validate_every: 1,
            rho: 0.95,
            eps: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, kernel_width: usize) -> Result<()> {
        let bad = |msg| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.crop_frames < kernel_width {
            return bad(format!(
                "crop length {} is shorter than the kernel width {kernel_width}",
                self.crop_frames
            ));
        }
        if self.batch_size == 0 || self.validate_every == 0 {
            return bad("batch size and validation cadence must be positive".into());
        }
        Ok(())
    }
}

/// One entry of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far, including this epoch's.
    pub step: u64,
    /// Mean minibatch loss over the epoch, each measured before its update.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr_multiplier: f64,
    pub improved: bool,
}

/// Everything needed to continue training where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub params: ModelParams<T>,
    pub optimizer: AdaDelta<T>,
    /// Next epoch to run.
    pub epoch: usize,
    pub step: u64,
    pub best: Option<BestSnapshot<T>>,
    pub validations_since_best: usize,
}

#[derive(Debug, Clone)]
pub struct BestSnapshot<T> {
    pub params: ModelParams<T>,
    pub val_loss: f64,
    pub epoch: usize,
}

impl<T: Scalar> TrainState<T> {
    pub fn fresh(params: ModelParams<T>, cfg: &TrainConfig) -> Result<Self> {
        let optimizer = AdaDelta::new(&params, cfg.rho, cfg.eps)?;
        Ok(Self {
            params,
            optimizer,
            epoch: 0,
            step: 0,
            best: None,
            validations_since_best: 0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub best_params: ModelParams<T>,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub state: TrainState<T>,
}

/// A cropped (or padded) training example.
#[derive(Debug, Clone)]
pub struct BatchItem<T> {
    pub input: Matrix<T>,
    pub target: Matrix<T>,
    /// Frames that carry data; later columns are zero padding.
    pub valid_frames: usize,
}

/// Computes per-item `(loss, gradient)` for one minibatch. Gradients must
/// already carry the `1 / batch_len` weight.
pub trait GradientEngine<T: Scalar> {
    fn batch_gradients(
        &self,
        params: &ModelParams<T>,
        items: &[BatchItem<T>],
    ) -> Result<Vec<(f64, GradientSet<T>)>>;
}

/// Single-threaded engine.
#[derive(Debug, Default, Clone, Copy)]
pub struct Sequential;

impl<T: Scalar> GradientEngine<T> for Sequential {
    fn batch_gradients(
        &self,
        params: &ModelParams<T>,
        items: &[BatchItem<T>],
    ) -> Result<Vec<(f64, GradientSet<T>)>> {
        let weight = T::from_f64(1.0 / items.len() as f64);
        items
            .iter()
            .map(|item| item_gradient(params, item, weight))
            .collect()
    }
}

/// Loss and weighted gradient of one batch item.
pub fn item_gradient<T: Scalar>(
    params: &ModelParams<T>,
    item: &BatchItem<T>,
    weight: T,
) -> Result<(f64, GradientSet<T>)> {
    let cache = forward_train(&item.input, params)?;
    let loss = masked_mse_loss(&cache.prediction, &item.target, item.valid_frames)?;
    let grads = backward_scaled(params, &cache, &item.target, weight, item.valid_frames)?;
    Ok((loss, grads))
}

fn crop<T: Scalar, R: Rng + ?Sized>(
    utt: &Utterance<T>,
    frames: usize,
    rng: &mut R,
) -> BatchItem<T> {
    let (d, t) = utt.noisy.shape();
    if t >= frames {
        let start = if t == frames {
            0
        } else {
            rng.gen_range(0..=t - frames)
        };
        let slice = |m: &Matrix<T>| Matrix::from_fn(d, frames, |r, c| m[(r, start + c)]);
        BatchItem {
            input: slice(&utt.noisy),
            target: slice(&utt.clean),
            valid_frames: frames,
        }
    } else {
        let pad = |m: &Matrix<T>| {
            Matrix::from_fn(d, frames, |r, c| if c < t { m[(r, c)] } else { T::zero() })
        };
        BatchItem {
            input: pad(&utt.noisy),
            target: pad(&utt.clean),
            valid_frames: t,
        }
    }
}

/// Mean per-utterance loss over full-length utterances.
pub fn evaluate_loss<T: Scalar>(params: &ModelParams<T>, set: &[Utterance<T>]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyDataset("validation set"));
    }
    let mut total = 0.0;
    for utt in set {
        let pred = forward(&utt.noisy, params)?;
        total += masked_mse_loss(&pred, &utt.clean, utt.frames())?;
    }
    Ok(total / set.len() as f64)
}

/// Trains from `state` until `cfg.epochs` or early stopping.
///
/// Each epoch shuffles the training set, cuts random crops and applies one
/// AdaDelta step per minibatch. Crops and shuffles are drawn from a stream
/// keyed by `(seed, epoch)`, so a resumed run reproduces an uninterrupted
/// one. `on_epoch` sees every log record together with the state after that
/// epoch. The returned best parameters are the snapshot with the lowest
/// validation loss.
pub fn train<T: Scalar>(
    train_set: &[Utterance<T>],
    val_set: &[Utterance<T>],
    cfg: &TrainConfig,
    mut state: TrainState<T>,
    engine: &dyn GradientEngine<T>,
    on_epoch: &mut dyn FnMut(&EpochRecord, &TrainState<T>),
) -> Result<TrainOutcome<T>> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation set"));
    }
    cfg.validate(state.params.architecture().kernel_width)?;

    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let lr = cfg.schedule.multiplier(epoch);
        let mut rng = seeded_stream(cfg.seed, epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let items: Vec<BatchItem<T>> = chunk
                .iter()
                .map(|&i| crop(&train_set[i], cfg.crop_frames, &mut rng))
                .collect();
            let results = engine.batch_gradients(&state.params, &items)?;
            let mut grads = GradientSet::zeros(state.params.architecture())?;
            let mut batch_loss = 0.0;
            for (loss, g) in &results {
                batch_loss += loss;
                grads.accumulate(g);
            }
            batch_loss /= results.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    loss: batch_loss,
                });
            }
            state.optimizer.step(&mut state.params, &grads, lr)?;
            state.step += 1;
            loss_sum += batch_loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;

        let mut val_loss = None;
        let mut improved = false;
        if (epoch + 1) % cfg.validate_every == 0 || epoch + 1 == cfg.epochs {
            let v = evaluate_loss(&state.params, val_set)?;
            if !v.is_finite() {
                return Err(Error::Diverged { epoch, loss: v });
            }
            val_loss = Some(v);
            if state.best.as_ref().map_or(true, |b| v < b.val_loss) {
                state.best = Some(BestSnapshot {
                    params: state.params.clone(),
                    val_loss: v,
                    epoch,
                });
                state.validations_since_best = 0;
                improved = true;
            } else {
                state.validations_since_best += 1;
            }
        }
        state.epoch += 1;

        let record = EpochRecord {
            epoch,
            step: state.step,
            train_loss,
            val_loss,
            lr_multiplier: lr,
            improved,
        };
        on_epoch(&record, &state);
        log.push(record);

        if cfg
            .patience
            .is_some_and(|p| state.validations_since_best >= p)
        {
            log::info!("early stopping after epoch {epoch}");
            break;
        }
    }

    let best = match &state.best {
        Some(b) => b.clone(),
        None => BestSnapshot {
            params: state.params.clone(),
            val_loss: evaluate_loss(&state.params, val_set)?,
            epoch: state.epoch.saturating_sub(1),
        },
    };
    Ok(TrainOutcome {
        best_params: best.params,
        best_val_loss: best.val_loss,
        best_epoch: best.epoch,
        log,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::rng::seeded;

    fn toy_set(seed: u64, n: usize, frames: usize) -> Vec<Utterance<f32>> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| {
                let clean =
                    Matrix::from_fn(8, frames, |r, c| if (r + c) % 4 == 0 { 1.0 } else { 0.1 });
                let noisy = clean.map(|v| v + rng.gen_range(0.0f32..0.5));
                Utterance::new(noisy, clean).unwrap()
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 8,
            crop_frames: 6,
            batch_size: 2,
            schedule: LrSchedule::constant(1.0),
            ..TrainConfig::default()
        }
    }

    fn run(cfg: &TrainConfig, seed: u64) -> TrainOutcome<f32> {
        let arch = Architecture::tiny();
        let params = ModelParams::init(&arch, &mut seeded(seed)).unwrap();
        let state = TrainState::fresh(params, cfg).unwrap();
        train(
            &toy_set(1, 3, 9),
            &toy_set(2, 2, 9),
            cfg,
            state,
            &Sequential,
            &mut |_, _| {},
        )
        .unwrap()
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let a = run(&small_cfg(), 5);
        let b = run(&small_cfg(), 5);
        let bits = |o: &TrainOutcome<f32>| {
            o.log
                .iter()
                .map(|r| (r.train_loss.to_bits(), r.val_loss.map(f64::to_bits)))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.best_params, b.best_params);
    }

    #[test]
    fn best_snapshot_is_no_worse_than_final() {
        let cfg = small_cfg();
        let out = run(&cfg, 6);
        let final_val = out.log.last().unwrap().val_loss.unwrap();
        assert!(out.best_val_loss <= final_val);
        let min = out
            .log
            .iter()
            .filter_map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_val_loss, min);
        assert_eq!(
            evaluate_loss(&out.best_params, &toy_set(2, 2, 9)).unwrap(),
            min
        );
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let cfg = small_cfg();
        let full = run(&cfg, 7);
        let arch = Architecture::tiny();
        let params = ModelParams::init(&arch, &mut seeded(7)).unwrap();
        let first = TrainConfig {
            epochs: 3,
            ..cfg.clone()
        };
        let part = train(
            &toy_set(1, 3, 9),
            &toy_set(2, 2, 9),
            &first,
            TrainState::fresh(params, &first).unwrap(),
            &Sequential,
            &mut |_, _| {},
        )
        .unwrap();
        let rest = train(
            &toy_set(1, 3, 9),
            &toy_set(2, 2, 9),
            &cfg,
            part.state,
            &Sequential,
            &mut |_, _| {},
        )
        .unwrap();
        assert_eq!(rest.log.first().unwrap().epoch, 3);
        assert_eq!(rest.state.params, full.state.params);
    }

    #[test]
    fn short_utterances_are_padded_and_masked() {
        let utt = &toy_set(3, 1, 4)[0];
        let item = crop(utt, 6, &mut seeded(0));
        assert_eq!(item.valid_frames, 4);
        assert_eq!(item.input.cols(), 6);
        assert!((0..8).all(|r| item.input[(r, 5)] == 0.0 && item.target[(r, 4)] == 0.0));
    }

    #[test]
    fn patience_stops_early() {
        let cfg = TrainConfig {
            epochs: 50,
            patience: Some(1),
            schedule: LrSchedule::constant(1e-9),
            ..small_cfg()
        };
        let out = run(&cfg, 8);
        assert!(out.log.len() < 50);
    }

    #[test]
    fn empty_sets_and_bad_config_rejected() {
        let arch = Architecture::tiny();
        let params = ModelParams::<f32>::init(&arch, &mut seeded(1)).unwrap();
        let cfg = small_cfg();
        let state = TrainState::fresh(params.clone(), &cfg).unwrap();
        let err = train(
            &[],
            &toy_set(1, 1, 9),
            &cfg,
            state.clone(),
            &Sequential,
            &mut |_, _| {},
        );
        assert!(matches!(err, Err(Error::EmptyDataset(_))));
        let short = TrainConfig {
            crop_frames: 2,
            ..cfg
        };
        let err = train(
            &toy_set(1, 1, 9),
            &toy_set(1, 1, 9),
            &short,
            state,
            &Sequential,
            &mut |_, _| {},
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}
