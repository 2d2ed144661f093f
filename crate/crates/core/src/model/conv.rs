use alloc::vec;
use alloc::vec::Vec;

use super::params::ConvParams;
use crate::{Error, Matrix, Result, Scalar};

/// `k` feature maps of `p` frequency positions by `t` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor<T> {
    kernels: usize,
    positions: usize,
    frames: usize,
    values: Vec<T>,
}

impl<T: Scalar> FeatureTensor<T> {
    pub fn zeros(kernels: usize, positions: usize, frames: usize) -> Self {
        Self {
            kernels,
            positions,
            frames,
            values: vec![T::zero(); kernels * positions * frames],
        }
    }

    pub fn kernels(&self) -> usize {
        self.kernels
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    #[inline]
    fn offset(&self, kernel: usize, position: usize, frame: usize) -> usize {
        (kernel * self.positions + position) * self.frames + frame
    }

    #[inline]
    pub fn get(&self, kernel: usize, position: usize, frame: usize) -> T {
        self.values[self.offset(kernel, position, frame)]
    }

    #[inline]
    pub fn set(&mut self, kernel: usize, position: usize, frame: usize, v: T) {
        let i = self.offset(kernel, position, frame);
        self.values[i] = v;
    }

    pub(crate) fn relu(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
        out
    }
}

/// Prepends and appends `width / 2` zero frames.
pub fn pad_time<T: Scalar>(x: &Matrix<T>, width: usize) -> Result<Matrix<T>> {
    if width % 2 == 0 {
        return Err(Error::EvenKernelWidth(width));
    }
    let pad = width / 2;
    let (d, t) = x.shape();
    let mut out = Matrix::zeros(d, t + 2 * pad);
    for r in 0..d {
        out.row_mut(r)[pad..pad + t].copy_from_slice(x.row(r));
    }
    Ok(out)
}

/// Strided cross-correlation of `x` (zero-padded in time) with every kernel,
/// followed by ReLU.
pub fn conv_forward<T: Scalar>(x: &Matrix<T>, conv: &ConvParams<T>) -> Result<FeatureTensor<T>> {
    let padded = pad_time(x, conv.kernel_width)?;
    Ok(conv_pre_activations(&padded, conv)?.relu())
}

/// Pre-activations over an already padded input.
pub(crate) fn conv_pre_activations<T: Scalar>(
    padded: &Matrix<T>,
    conv: &ConvParams<T>,
) -> Result<FeatureTensor<T>> {
    let (b, w, stride) = (conv.kernel_height, conv.kernel_width, conv.freq_stride);
    let d = padded.rows();
    if d < b {
        return Err(Error::KernelTooTall {
            kernel: b,
            input: d,
        });
    }
    let frames = padded.cols() + 1 - w;
    let positions = (d - b) / stride + 1;
    let mut out = FeatureTensor::zeros(conv.count, positions, frames);
    for j in 0..conv.count {
        let kernel = conv.kernel(j);
        for u in 0..positions {
            for v in 0..frames {
                let mut acc = 0.0f64;
                for m in 0..b {
                    let row = &padded.row(u * stride + m)[v..v + w];
                    let krow = &kernel[m * w..(m + 1) * w];
                    acc += crate::scalar::dot(row, krow);
                }
                out.set(j, u, v, T::from_f64(acc));
            }
        }
    }
    Ok(out)
}

/// Stacks the maps vertically: row `j * p + r` of the result is row `r` of
/// map `j`.
pub fn stack_features<T: Scalar>(f: &FeatureTensor<T>) -> Matrix<T> {
    Matrix::from_vec(f.kernels * f.positions, f.frames, f.values.clone())
        .expect("feature tensor layout matches the stacked matrix")
}

pub(crate) fn unstack_gradient<T: Scalar>(
    g: Matrix<T>,
    kernels: usize,
    positions: usize,
) -> FeatureTensor<T> {
    debug_assert_eq!(g.rows(), kernels * positions);
    FeatureTensor {
        kernels,
        positions,
        frames: g.cols(),
        values: g.into_vec(),
    }
}

/// Accumulates kernel gradients. `grad_out` is the gradient with respect to
/// the post-ReLU maps; the ReLU mask uses `pre > 0` so an exactly zero
/// pre-activation passes no gradient.
pub(crate) fn conv_backward<T: Scalar>(
    padded: &Matrix<T>,
    pre: &FeatureTensor<T>,
    grad_out: &FeatureTensor<T>,
    conv: &ConvParams<T>,
    grad_weights: &mut [T],
) {
    let (b, w, stride) = (conv.kernel_height, conv.kernel_width, conv.freq_stride);
    let frames = pre.frames;
    let mut masked = vec![T::zero(); frames];
    for j in 0..conv.count {
        let gk = &mut grad_weights[j * b * w..(j + 1) * b * w];
        for u in 0..pre.positions {
            let mut any = false;
            for (v, slot) in masked.iter_mut().enumerate() {
                *slot = if pre.get(j, u, v) > T::zero() {
                    any = true;
                    grad_out.get(j, u, v)
                } else {
                    T::zero()
                };
            }
            if !any {
                continue;
            }
            for m in 0..b {
                let row = padded.row(u * stride + m);
                for n in 0..w {
                    gk[m * w + n] += T::from_f64(crate::scalar::dot(&masked, &row[n..n + frames]));
                }
            }
        }
    }
}
