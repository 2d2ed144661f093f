use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // inherent on f64 only in recent `core`
use num_traits::Float;

use super::backward::GradientSet;
use crate::model::ModelParams;
use crate::{Error, Result, Scalar};

/// One AdaDelta update for a single coordinate.
///
/// Returns `(delta, new_sq_grad, new_sq_delta)`. The step is
/// `-RMS(delta_prev) / RMS(g) * g * lr`, with `RMS(v) = sqrt(E[v^2] + eps)`.
#[inline]
pub fn adadelta_update(
    grad: f64,
    sq_grad: f64,
    sq_delta: f64,
    rho: f64,
    eps: f64,
    lr: f64,
) -> (f64, f64, f64) {
    let sq_grad = rho * sq_grad + (1.0 - rho) * grad * grad;
    let delta = -((sq_delta + eps).sqrt() / (sq_grad + eps).sqrt()) * grad * lr;
    let sq_delta = rho * sq_delta + (1.0 - rho) * delta * delta;
    (delta, sq_grad, sq_delta)
}

/// AdaDelta state: running averages of squared gradients and squared
/// updates, one accumulator per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaDelta<T> {
    pub rho: f64,
    pub eps: f64,
    sq_grad: Vec<Vec<T>>,
    sq_delta: Vec<Vec<T>>,
}

impl<T: Scalar> AdaDelta<T> {
    pub fn new(params: &ModelParams<T>, rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "AdaDelta rho {rho} must lie in (0, 1)"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "AdaDelta epsilon {eps} must be positive"
            )));
        }
        let zeros: Vec<Vec<T>> = params
            .tensors()
            .iter()
            .map(|t| vec![T::zero(); t.data.len()])
            .collect();
        Ok(Self {
            rho,
            eps,
            sq_grad: zeros.clone(),
            sq_delta: zeros,
        })
    }

    /// Restores saved accumulators; shapes must match `params`.
    pub fn with_accumulators(
        params: &ModelParams<T>,
        rho: f64,
        eps: f64,
        sq_grad: Vec<Vec<T>>,
        sq_delta: Vec<Vec<T>>,
    ) -> Result<Self> {
        let mut opt = Self::new(params, rho, eps)?;
        let fits = |acc: &[Vec<T>]| {
            acc.len() == opt.sq_grad.len()
                && acc
                    .iter()
                    .zip(&opt.sq_grad)
                    .all(|(a, b)| a.len() == b.len())
        };
        if !fits(&sq_grad) || !fits(&sq_delta) {
            return Err(Error::DimensionChain(
                "optimizer accumulators do not match parameters".into(),
            ));
        }
        if sq_grad
            .iter()
            .chain(&sq_delta)
            .flatten()
            .any(|v| !(*v >= T::zero()))
        {
            return Err(Error::InvalidConfig(
                "optimizer accumulators must be non-negative".into(),
            ));
        }
        opt.sq_grad = sq_grad;
        opt.sq_delta = sq_delta;
        Ok(opt)
    }

    pub fn sq_grad(&self) -> &[Vec<T>] {
        &self.sq_grad
    }

    pub fn sq_delta(&self) -> &[Vec<T>] {
        &self.sq_delta
    }

    /// Applies one update scaled by `lr`. A non-finite gradient rejects the
    /// whole step and leaves parameters and accumulators untouched.
    pub fn step(
        &mut self,
        params: &mut ModelParams<T>,
        grads: &GradientSet<T>,
        lr: f64,
    ) -> Result<()> {
        let grad_tensors = grads.tensors();
        if grad_tensors.len() != self.sq_grad.len() {
            return Err(Error::DimensionChain(
                "gradient set does not match optimizer".into(),
            ));
        }
        if !grads.is_finite() {
            log::error!("non-finite gradient; optimizer step rejected");
            return Err(Error::NonFinite("gradient"));
        }
        for (((param, grad), sq_g), sq_d) in params
            .tensors_mut()
            .into_iter()
            .zip(&grad_tensors)
            .zip(&mut self.sq_grad)
            .zip(&mut self.sq_delta)
        {
            if param.data.len() != grad.data.len() {
                return Err(Error::DimensionChain(format!(
                    "gradient for {} has wrong size",
                    param.name
                )));
            }
            for (((p, g), eg), ed) in param
                .data
                .iter_mut()
                .zip(grad.data)
                .zip(sq_g.iter_mut())
                .zip(sq_d.iter_mut())
            {
                let (delta, new_eg, new_ed) =
                    adadelta_update(g.widen(), eg.widen(), ed.widen(), self.rho, self.eps, lr);
                *p = T::from_f64(p.widen() + delta);
                *eg = T::from_f64(new_eg);
                *ed = T::from_f64(new_ed);
            }
        }
        Ok(())
    }
}

/// Piecewise-constant learning-rate multiplier keyed by epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    steps: Vec<(usize, f64)>,
}

impl Default for LrSchedule {
    /// 1.0 from epoch 0, 0.1 from epoch 60, 0.01 from epoch 120.
    fn default() -> Self {
        Self {
            steps: vec![(0, 1.0), (60, 0.1), (120, 0.01)],
        }
    }
}

impl LrSchedule {
    /// `steps` are `(first_epoch, multiplier)` pairs; the first must start
    /// at epoch 0 and epochs must increase strictly.
    pub fn new(steps: Vec<(usize, f64)>) -> Result<Self> {
        if steps.first().map(|s| s.0) != Some(0) {
            return Err(Error::InvalidConfig(
                "learning-rate schedule must start at epoch 0".into(),
            ));
        }
        if steps.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidConfig("schedule epochs must increase".into()));
        }
        if steps.iter().any(|s| !(s.1.is_finite() && s.1 > 0.0)) {
            return Err(Error::InvalidConfig(
                "schedule multipliers must be positive".into(),
            ));
        }
        Ok(Self { steps })
    }

    pub fn constant(multiplier: f64) -> Self {
        Self {
            steps: vec![(0, multiplier)],
        }
    }

    pub fn multiplier(&self, epoch: usize) -> f64 {
        self.steps
            .iter()
            .rev()
            .find(|(start, _)| *start <= epoch)
            .map(|s| s.1)
            .unwrap_or(self.steps[0].1)
    }

    pub fn steps(&self) -> &[(usize, f64)] {
        &self.steps
    }
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (epoch, mult)) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{epoch}:{mult}")?;
        }
        Ok(())
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    /// Parses `"0:1.0,60:0.1,120:0.01"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |part: &str| {
            Error::InvalidConfig(format!(
                "bad schedule entry {part:?}; expected epoch:multiplier"
            ))
        };
        let steps = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|part| {
                let (e, m) = part.split_once(':').ok_or_else(|| bad(part))?;
                let e: usize = e.trim().parse().map_err(|_| bad(part))?;
                let m: f64 = m.trim().parse().map_err(|_| bad(part))?;
                Ok((e, m))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(steps)
    }
}
