use crate::model::{
    conv_backward, direction_backward, Architecture, ForwardCache, ModelParams, Tensor,
};
use crate::scalar::dot;
use crate::{Error, Matrix, Result, Scalar};
use alloc::vec::Vec;

/// Partial derivatives shaped exactly like a [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    inner: ModelParams<T>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        Ok(Self {
            inner: ModelParams::zeros(arch)?,
        })
    }

    /// Gradients laid out as parameters (`grads.as_params().conv.weights`
    /// is the kernel gradient, and so on).
    pub fn as_params(&self) -> &ModelParams<T> {
        &self.inner
    }

    pub fn as_params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.inner
    }

    pub fn tensors(&self) -> Vec<Tensor<'_, T>> {
        self.inner.tensors()
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &GradientSet<T>) {
        for (dst, src) in self
            .inner
            .tensors_mut()
            .into_iter()
            .zip(other.inner.tensors())
        {
            for (d, &s) in dst.data.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.inner.is_finite()
    }
}

/// Gradient of `0.5 * ||prediction - target||_F^2` with respect to every
/// parameter.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    target: &Matrix<T>,
) -> Result<GradientSet<T>> {
    backward_scaled(params, cache, target, T::one(), cache.frames())
}

/// Gradient of `scale * 0.5 * sum over the first valid_frames columns`.
/// A minibatch of `B` utterances uses `scale = 1 / B`.
pub fn backward_scaled<T: Scalar>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    target: &Matrix<T>,
    scale: T,
    valid_frames: usize,
) -> Result<GradientSet<T>> {
    let arch = params.architecture();
    let (d, t) = cache.prediction.shape();
    target.ensure_shape("backward target", (d, t))?;
    if d != arch.bins
        || cache.layers.len() != params.lstm.len()
        || cache.top.cols() != arch.output_input_size()
    {
        return Err(Error::DimensionChain(alloc::format!(
            "forward cache ({d} bins, {} layers) was not produced by these parameters",
            cache.layers.len()
        )));
    }
    let valid = valid_frames.min(t);
    let mut grads = GradientSet::zeros(arch)?;
    let g = grads.as_params_mut();

    // Output layer; truncation passes gradient only where the
    // pre-activation is strictly positive.
    let mut grad_pre = Matrix::<T>::zeros(d, t);
    for r in 0..d {
        for c in 0..valid {
            if cache.output_pre[(r, c)] > T::zero() {
                grad_pre[(r, c)] = scale * (cache.prediction[(r, c)] - target[(r, c)]);
            }
        }
    }
    let top_t = cache.top.transpose();
    for r in 0..d {
        let gp = grad_pre.row(r);
        g.output.bias[r] = T::from_f64(gp.iter().map(|v| v.widen()).sum());
        for (k, w) in g.output.weights.row_mut(r).iter_mut().enumerate() {
            *w = T::from_f64(dot(gp, top_t.row(k)));
        }
    }
    let grad_pre_t = grad_pre.transpose();
    let weights_t = params.output.weights.transpose();
    let mut grad_above = Matrix::from_fn(t, arch.output_input_size(), |c, k| {
        T::from_f64(dot(grad_pre_t.row(c), weights_t.row(k)))
    });

    // BiLSTM layers, top to bottom.
    for (l, layer_cache) in cache.layers.iter().enumerate().rev() {
        let layer = &params.lstm[l];
        let hidden = layer.hidden_size();
        let grad_fwd = Matrix::from_fn(t, hidden, |c, k| grad_above[(c, k)]);
        let grad_bwd = Matrix::from_fn(t, hidden, |c, k| grad_above[(c, hidden + k)]);
        let gl = &mut g.lstm[l];
        let mut grad_input = direction_backward(
            &layer.forward,
            &layer_cache.input,
            &layer_cache.forward,
            &grad_fwd,
            &mut gl.forward,
        );
        let from_bwd = direction_backward(
            &layer.backward,
            &layer_cache.input,
            &layer_cache.backward,
            &grad_bwd,
            &mut gl.backward,
        );
        for (a, &b) in grad_input
            .as_mut_slice()
            .iter_mut()
            .zip(from_bwd.as_slice())
        {
            *a += b;
        }
        grad_above = grad_input;
    }

    // Un-stack into per-map gradients, then through ReLU into the kernels.
    let grad_maps = crate::model::unstack_gradient(
        grad_above.transpose(),
        cache.conv_pre.kernels(),
        cache.conv_pre.positions(),
    );
    conv_backward(
        &cache.padded,
        &cache.conv_pre,
        &grad_maps,
        &params.conv,
        &mut g.conv.weights,
    );

    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward_train;
    use crate::rng::seeded;
    use crate::training::mse_loss;
    use rand::Rng;

    fn random_problem(seed: u64) -> (ModelParams<f64>, Matrix<f64>, Matrix<f64>) {
        let arch = Architecture::tiny();
        let mut rng = seeded(seed);
        let mut params = ModelParams::<f64>::zeros(&arch).unwrap();
        for t in params.tensors_mut() {
            for v in t.data {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let x = Matrix::from_fn(8, 6, |_, _| rng.gen_range(0.0..1.0));
        let y = Matrix::from_fn(8, 6, |_, _| rng.gen_range(0.0..1.0));
        (params, x, y)
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let (mut params, x, _) = random_problem(1);
        // Strictly positive outputs everywhere: bias far above the weights' reach.
        params.output.bias.iter_mut().for_each(|b| *b = 10.0);
        let cache = forward_train(&x, &params).unwrap();
        assert!(cache.output_pre.as_slice().iter().all(|&v| v > 0.0));
        let target = cache.prediction.clone();
        let grads = backward(&params, &cache, &target).unwrap();
        assert!(grads
            .tensors()
            .iter()
            .all(|t| t.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn output_gradient_closed_form_when_truncation_inactive() {
        let (mut params, x, y) = random_problem(2);
        params.output.bias.iter_mut().for_each(|b| *b = 10.0);
        let cache = forward_train(&x, &params).unwrap();
        let scale = 0.25;
        let grads = backward_scaled(&params, &cache, &y, scale, 6).unwrap();
        let g = grads.as_params();
        for r in 0..8 {
            for k in 0..10 {
                let mut expect = 0.0;
                for c in 0..6 {
                    expect += scale * (cache.prediction[(r, c)] - y[(r, c)]) * cache.top[(c, k)];
                }
                assert!((g.output.weights[(r, k)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_zero_preactivation_blocks_gradient() {
        let (mut params, x, y) = random_problem(3);
        // Output row 0 has pre-activation exactly 0 in every frame.
        params
            .output
            .weights
            .row_mut(0)
            .iter_mut()
            .for_each(|w| *w = 0.0);
        params.output.bias[0] = 0.0;
        let cache = forward_train(&x, &params).unwrap();
        assert!(cache.output_pre.row(0).iter().all(|&v| v == 0.0));
        let grads = backward(&params, &cache, &y).unwrap();
        assert_eq!(grads.as_params().output.bias[0], 0.0);
        assert!(grads
            .as_params()
            .output
            .weights
            .row(0)
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn scale_is_linear() {
        let (params, x, y) = random_problem(4);
        let cache = forward_train(&x, &params).unwrap();
        let one = backward(&params, &cache, &y).unwrap();
        let half = backward_scaled(&params, &cache, &y, 0.5, 6).unwrap();
        for (a, b) in one.tensors().iter().zip(half.tensors()) {
            for (u, v) in a.data.iter().zip(b.data) {
                assert!((0.5 * u - v).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn directional_derivative_matches_finite_difference() {
        let (params, x, y) = random_problem(5);
        let cache = forward_train(&x, &params).unwrap();
        let grads = backward(&params, &cache, &y).unwrap();
        let mut rng = seeded(6);
        let dir: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| t.data.iter().map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let analytic: f64 = grads
            .tensors()
            .iter()
            .zip(&dir)
            .map(|(g, d)| g.data.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let h = 1e-6;
        let shifted = |sign: f64| {
            let mut p = params.clone();
            for (t, d) in p.tensors_mut().into_iter().zip(&dir) {
                for (v, dv) in t.data.iter_mut().zip(d) {
                    *v += sign * h * dv;
                }
            }
            let c = forward_train(&x, &p).unwrap();
            mse_loss(&c.prediction, &y).unwrap()
        };
        let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        assert!(
            (analytic - numeric).abs() <= 1e-6 * analytic.abs().max(1.0),
            "{analytic} vs {numeric}"
        );
    }

    #[test]
    fn rejects_mismatched_target() {
        let (params, x, _) = random_problem(7);
        let cache = forward_train(&x, &params).unwrap();
        assert!(backward(&params, &cache, &Matrix::zeros(8, 5)).is_err());
    }
}
