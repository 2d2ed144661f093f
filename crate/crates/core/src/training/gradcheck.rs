use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng;

use super::backward::backward;
use super::loss::mse_loss;
use crate::model::{forward_train, Architecture, ForwardCache, ModelParams};
use crate::rng::seeded_stream;
use crate::{Matrix, Result, Scalar};

/// Deliberate corruption of the analytic gradient, used to check that the
/// checker itself can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate every analytic gradient.
    SignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    pub trials: usize,
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
    pub frames: usize,
    /// Coordinates sampled per tensor and trial; `None` checks all of them.
    pub coordinates_per_tensor: Option<usize>,
    pub seed: u64,
    /// Relative errors are taken against `max(|analytic|, |numeric|, abs_floor)`.
    pub abs_floor: f64,
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            trials: 20,
            tolerance: 1e-4,
            step: 1e-4,
            frames: 6,
            coordinates_per_tensor: None,
            seed: 0,
            abs_floor: 1e-6,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorReport {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation moved some ReLU or truncation input
    /// across zero; the loss is not differentiable there.
    pub skipped_kinks: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub trials: usize,
    pub precision: &'static str,
    pub tensors: Vec<TensorReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn worst(&self) -> Option<&TensorReport> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn kink_pattern<T: Scalar>(cache: &ForwardCache<T>) -> Vec<bool> {
    cache
        .conv_pre
        .as_slice()
        .iter()
        .chain(cache.output_pre.as_slice())
        .map(|&v| v > T::zero())
        .collect()
}

/// Draws random parameters (all tensors, including peepholes and output
/// bias, uniform in `[-0.5, 0.5]`), a random input in `[0, 1]` and a random
/// target in `[0, 1]`, then compares [`backward`] with central finite
/// differences of the half-squared-error loss.
pub fn grad_check<T: Scalar>(
    arch: &Architecture,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    arch.validate()?;
    let names: Vec<String> = ModelParams::<T>::zeros(arch)?
        .tensors()
        .into_iter()
        .map(|t| t.name)
        .collect();
    let mut reports: Vec<TensorReport> = names
        .into_iter()
        .map(|name| TensorReport {
            name,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            checked: 0,
            skipped_kinks: 0,
            passed: false,
        })
        .collect();

    let h = T::from_f64(opts.step);
    for trial in 0..opts.trials {
        let mut rng = seeded_stream(opts.seed, trial as u64);
        let mut params = ModelParams::<T>::zeros(arch)?;
        for t in params.tensors_mut() {
            for v in t.data {
                *v = T::from_f64(rng.gen_range(-0.5..=0.5));
            }
        }
        let x = Matrix::from_fn(arch.bins, opts.frames, |_, _| {
            T::from_f64(rng.gen_range(0.0..1.0))
        });
        let y = Matrix::from_fn(arch.bins, opts.frames, |_, _| {
            T::from_f64(rng.gen_range(0.0..1.0))
        });

        let cache = forward_train(&x, &params)?;
        let base_kinks = kink_pattern(&cache);
        let grads = backward(&params, &cache, &y)?;
        let analytic: Vec<Vec<f64>> = grads
            .tensors()
            .iter()
            .map(|t| {
                t.data
                    .iter()
                    .map(|g| match opts.fault {
                        Some(Fault::SignFlip) => -g.widen(),
                        None => g.widen(),
                    })
                    .collect()
            })
            .collect();

        for (ti, report) in reports.iter_mut().enumerate() {
            let len = analytic[ti].len();
            let coords: Vec<usize> = match opts.coordinates_per_tensor {
                Some(n) if n < len => sample(&mut rng, len, n).into_vec(),
                _ => (0..len).collect(),
            };
            for ci in coords {
                let probe = |delta: T| -> Result<(f64, bool)> {
                    let mut p = params.clone();
                    p.tensors_mut()[ti].data[ci] += delta;
                    let c = forward_train(&x, &p)?;
                    Ok((mse_loss(&c.prediction, &y)?, kink_pattern(&c) != base_kinks))
                };
                let (plus, kink_plus) = probe(h)?;
                let (minus, kink_minus) = probe(-h)?;
                if kink_plus || kink_minus {
                    report.skipped_kinks += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * h.widen());
                let a = analytic[ti][ci];
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(opts.abs_floor);
                report.max_abs_error = report.max_abs_error.max(abs);
                report.max_rel_error = report.max_rel_error.max(rel);
                report.checked += 1;
            }
        }
    }
    for r in &mut reports {
        r.passed = r.checked > 0 && r.max_rel_error <= opts.tolerance;
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        trials: opts.trials,
        precision: T::NAME,
        tensors: reports,
    })
}
