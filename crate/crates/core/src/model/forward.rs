use alloc::vec::Vec;

use super::conv::{conv_pre_activations, pad_time, stack_features, FeatureTensor};
use super::lstm::layer_forward;
pub use super::lstm::DirectionCache;
use super::output::{output_pre_activations, truncate};
use super::params::ModelParams;
use crate::{Error, Matrix, Result, Scalar};

/// Activations of one BiLSTM layer kept for backpropagation.
#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    /// Layer input, time-major (`t x in`).
    pub input: Matrix<T>,
    pub forward: DirectionCache<T>,
    pub backward: DirectionCache<T>,
}

/// Every intermediate of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub padded: Matrix<T>,
    pub conv_pre: FeatureTensor<T>,
    pub layers: Vec<LayerCache<T>>,
    /// Top BiLSTM output, time-major (`t x q`).
    pub top: Matrix<T>,
    pub output_pre: Matrix<T>,
    pub prediction: Matrix<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn frames(&self) -> usize {
        self.prediction.cols()
    }

    pub fn clip_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.forward.clip_count() + l.backward.clip_count())
            .sum()
    }
}

fn check_input<T: Scalar>(x: &Matrix<T>, params: &ModelParams<T>) -> Result<()> {
    let d = params.architecture().bins;
    if x.rows() != d || x.cols() == 0 {
        return Err(Error::ShapeMismatch {
            context: "model input",
            expected: (d, x.cols().max(1)),
            got: x.shape(),
        });
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("model input"));
    }
    Ok(())
}

/// Runs the network on a `d x t` magnitude spectrogram and keeps every
/// intermediate needed by `training::backward`.
pub fn forward_train<T: Scalar>(x: &Matrix<T>, params: &ModelParams<T>) -> Result<ForwardCache<T>> {
    check_input(x, params)?;
    let padded = pad_time(x, params.conv.kernel_width)?;
    let conv_pre = conv_pre_activations(&padded, &params.conv)?;
    let stacked = stack_features(&conv_pre.relu());

    let mut layers = Vec::with_capacity(params.lstm.len());
    let mut input = stacked.transpose();
    for layer in &params.lstm {
        let (fwd, bwd, out) = layer_forward(layer, &input)?;
        layers.push(LayerCache {
            input,
            forward: fwd,
            backward: bwd,
        });
        input = out;
    }
    let top = input;
    let output_pre = output_pre_activations(&top, &params.output)?;
    let prediction = truncate(&output_pre);
    if prediction.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prediction"));
    }
    let cache = ForwardCache {
        padded,
        conv_pre,
        layers,
        top,
        output_pre,
        prediction,
    };
    let clipped = cache.clip_count();
    if clipped > 0 {
        log::warn!("{clipped} cell states clipped during forward pass");
    }
    Ok(cache)
}

/// Predicted clean magnitudes, `d x t`, every entry `>= 0`.
pub fn forward<T: Scalar>(x: &Matrix<T>, params: &ModelParams<T>) -> Result<Matrix<T>> {
    forward_train(x, params).map(|c| c.prediction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use crate::rng::seeded;
    use rand::Rng;
    use std::vec;

    #[test]
    fn time_length_preserved() {
        for w in [1, 3, 5] {
            let arch = Architecture {
                kernel_width: w,
                ..Architecture::tiny()
            };
            let params = ModelParams::<f64>::init(&arch, &mut seeded(w as u64)).unwrap();
            for t in [1, 2, 9] {
                let x = Matrix::from_fn(8, t, |r, c| ((r + c) % 3) as f64);
                let y = forward(&x, &params).unwrap();
                assert_eq!(y.shape(), (8, t));
                assert!(y.as_slice().iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn zero_everything_gives_zero() {
        let params = ModelParams::<f32>::zeros(&Architecture::tiny()).unwrap();
        let y = forward(&Matrix::zeros(8, 4), &params).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_height_rejected() {
        let params = ModelParams::<f32>::zeros(&Architecture::tiny()).unwrap();
        assert!(matches!(
            forward(&Matrix::zeros(7, 4), &params),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn deterministic() {
        let arch = Architecture::tiny();
        let params = ModelParams::<f32>::init(&arch, &mut seeded(3)).unwrap();
        let mut rng = seeded(4);
        let x = Matrix::from_fn(8, 7, |_, _| rng.gen_range(0.0f32..1.0));
        let a = forward(&x, &params).unwrap();
        let b = forward(&x, &params).unwrap();
        assert_eq!(
            a.as_slice()
                .iter()
                .map(|v| v.to_bits())
                .collect::<vec::Vec<_>>(),
            b.as_slice()
                .iter()
                .map(|v| v.to_bits())
                .collect::<vec::Vec<_>>()
        );
    }

    #[test]
    fn conv_stage_is_local_in_time() {
        // The LSTM cell state links all frames, so locality is checked on the
        // convolution pre-activations, which see only `kernel_width` frames.
        let arch = Architecture {
            kernel_width: 3,
            ..Architecture::tiny()
        };
        let params = ModelParams::<f64>::init(&arch, &mut seeded(8)).unwrap();
        let mut rng = seeded(9);
        let x = Matrix::from_fn(8, 9, |_, _| rng.gen_range(0.0..1.0));
        let base = forward_train(&x, &params).unwrap();
        let mut bumped = x.clone();
        for r in 0..8 {
            bumped[(r, 4)] += 0.5;
        }
        let moved = forward_train(&bumped, &params).unwrap();
        let (k, p) = (arch.kernels, arch.positions());
        for t in 0..9 {
            let changed = (0..k)
                .any(|j| (0..p).any(|r| base.conv_pre.get(j, r, t) != moved.conv_pre.get(j, r, t)));
            assert_eq!(changed, (3..=5).contains(&t), "frame {t}");
        }
    }
}
