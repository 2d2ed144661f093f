use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Matrix, Result, Scalar};

/// Layer sizes of the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    /// Spectrogram height `d`.
    pub bins: usize,
    /// Number of convolution kernels `k`.
    pub kernels: usize,
    /// Kernel extent along frequency, `b`.
    pub kernel_height: usize,
    /// Kernel extent along time, `w`. Must be odd.
    pub kernel_width: usize,
    pub freq_stride: usize,
    /// Hidden units per direction, one entry per stacked BiLSTM layer.
    pub hidden_sizes: Vec<usize>,
}

impl Architecture {
    /// 256 bins, 256 kernels of 32 x 11 at frequency stride 16, two
    /// BiLSTM layers of 1024 units.
    pub fn full_size() -> Self {
        Self {
            bins: 256,
            kernels: 256,
            kernel_height: 32,
            kernel_width: 11,
            freq_stride: 16,
            hidden_sizes: vec![1024, 1024],
        }
    }

    /// Model small enough for exhaustive finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            bins: 8,
            kernels: 3,
            kernel_height: 4,
            kernel_width: 3,
            freq_stride: 2,
            hidden_sizes: vec![5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let chain = |msg: String| Err(Error::DimensionChain(msg));
        if self.kernel_width % 2 == 0 {
            return Err(Error::EvenKernelWidth(self.kernel_width));
        }
        if self.kernels == 0 || self.kernel_height == 0 || self.freq_stride == 0 {
            return chain(format!(
                "kernels ({}), kernel height ({}) and stride ({}) must be positive",
                self.kernels, self.kernel_height, self.freq_stride
            ));
        }
        if self.bins < self.kernel_height {
            return Err(Error::KernelTooTall {
                kernel: self.kernel_height,
                input: self.bins,
            });
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return chain(format!(
                "hidden sizes {:?} must be non-empty and positive",
                self.hidden_sizes
            ));
        }
        Ok(())
    }

    /// Frequency positions per feature map, `p = floor((d - b) / stride) + 1`.
    pub fn positions(&self) -> usize {
        (self.bins - self.kernel_height) / self.freq_stride + 1
    }

    /// Rows of the input spectrogram not covered by any kernel position.
    /// Nonzero when the stride does not divide `d - b`.
    pub fn uncovered_bins(&self) -> usize {
        (self.bins - self.kernel_height) % self.freq_stride
    }

    /// Input width of the first LSTM layer, `p * k`.
    pub fn lstm_input_size(&self) -> usize {
        self.positions() * self.kernels
    }

    /// Width of the BiLSTM output fed to the output layer, `q`.
    pub fn output_input_size(&self) -> usize {
        2 * self.hidden_sizes.last().copied().unwrap_or(0)
    }

    pub fn layer_input_size(&self, layer: usize) -> usize {
        if layer == 0 {
            self.lstm_input_size()
        } else {
            2 * self.hidden_sizes[layer - 1]
        }
    }

    pub fn parameter_count(&self) -> usize {
        let conv = self.kernels * self.kernel_height * self.kernel_width;
        let lstm: usize = self
            .hidden_sizes
            .iter()
            .enumerate()
            .map(|(l, &h)| 2 * (4 * h * self.layer_input_size(l) + 4 * h * h + 3 * h))
            .sum();
        conv + lstm + self.bins * self.output_input_size() + self.bins
    }
}

/// Convolution kernels stored contiguously, `k x b x w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub count: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub freq_stride: usize,
    pub weights: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn zeros(
        count: usize,
        kernel_height: usize,
        kernel_width: usize,
        freq_stride: usize,
    ) -> Self {
        Self {
            count,
            kernel_height,
            kernel_width,
            freq_stride,
            weights: vec![T::zero(); count * kernel_height * kernel_width],
        }
    }

    /// Kernel `j` as a row-major `b x w` slice.
    pub fn kernel(&self, j: usize) -> &[T] {
        let size = self.kernel_height * self.kernel_width;
        &self.weights[j * size..(j + 1) * size]
    }

    pub fn kernel_mut(&mut self, j: usize) -> &mut [T] {
        let size = self.kernel_height * self.kernel_width;
        &mut self.weights[j * size..(j + 1) * size]
    }
}

/// Weights of one LSTM direction.
///
/// Gate blocks are stacked in the order input, forget, cell candidate,
/// output: rows `0..h` of `input_weights` are `W_xi`, rows `h..2h` are
/// `W_xf`, and so on. Peephole connections are diagonal. There are no bias
/// terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection<T> {
    pub input_weights: Matrix<T>,
    pub recurrent_weights: Matrix<T>,
    pub peephole_input: Vec<T>,
    pub peephole_forget: Vec<T>,
    pub peephole_output: Vec<T>,
}

impl<T: Scalar> LstmDirection<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input_weights: Matrix::zeros(4 * hidden, input),
            recurrent_weights: Matrix::zeros(4 * hidden, hidden),
            peephole_input: vec![T::zero(); hidden],
            peephole_forget: vec![T::zero(); hidden],
            peephole_output: vec![T::zero(); hidden],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent_weights.cols()
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.cols()
    }

    fn check(&self, input: usize, hidden: usize) -> Result<()> {
        let ok = self.input_weights.shape() == (4 * hidden, input)
            && self.recurrent_weights.shape() == (4 * hidden, hidden)
            && self.peephole_input.len() == hidden
            && self.peephole_forget.len() == hidden
            && self.peephole_output.len() == hidden;
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionChain(format!(
                "LSTM direction expected input {input}, hidden {hidden}; got input weights {:?}, recurrent {:?}",
                self.input_weights.shape(),
                self.recurrent_weights.shape()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams<T> {
    pub forward: LstmDirection<T>,
    pub backward: LstmDirection<T>,
}

impl<T: Scalar> LstmLayerParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            forward: LstmDirection::zeros(input, hidden),
            backward: LstmDirection::zeros(input, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size()
    }
}

/// Output projection `W` (`d x q`) and bias `b_W` (`d`).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> OutputParams<T> {
    pub fn zeros(bins: usize, q: usize) -> Self {
        Self {
            weights: Matrix::zeros(bins, q),
            bias: vec![T::zero(); bins],
        }
    }
}

/// Every trainable tensor of the network plus its architecture.
///
/// Construction goes through [`ModelParams::zeros`],
/// [`ModelParams::init`] or [`ModelParams::from_parts`], all of which
/// reject inconsistent layer dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    arch: Architecture,
    pub conv: ConvParams<T>,
    pub lstm: Vec<LstmLayerParams<T>>,
    pub output: OutputParams<T>,
}

/// Read-only view of one named parameter tensor.
#[derive(Debug)]
pub struct Tensor<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

#[derive(Debug)]
pub struct TensorMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [T],
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let lstm = arch
            .hidden_sizes
            .iter()
            .enumerate()
            .map(|(l, &h)| LstmLayerParams::zeros(arch.layer_input_size(l), h))
            .collect();
        Ok(Self {
            arch: arch.clone(),
            conv: ConvParams::zeros(
                arch.kernels,
                arch.kernel_height,
                arch.kernel_width,
                arch.freq_stride,
            ),
            lstm,
            output: OutputParams::zeros(arch.bins, arch.output_input_size()),
        })
    }

    /// Glorot-uniform weights, zero peepholes and zero output bias.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        let receptive = arch.kernel_height * arch.kernel_width;
        fill_uniform(
            &mut params.conv.weights,
            glorot(receptive, arch.kernels * receptive),
            rng,
        );
        for layer in &mut params.lstm {
            let hidden = layer.hidden_size();
            let input = layer.input_size();
            for dir in [&mut layer.forward, &mut layer.backward] {
                fill_uniform(dir.input_weights.as_mut_slice(), glorot(input, hidden), rng);
                fill_uniform(
                    dir.recurrent_weights.as_mut_slice(),
                    glorot(hidden, hidden),
                    rng,
                );
            }
        }
        fill_uniform(
            params.output.weights.as_mut_slice(),
            glorot(arch.output_input_size(), arch.bins),
            rng,
        );
        Ok(params)
    }

    /// Assembles parameters, checking every shape against `arch`.
    pub fn from_parts(
        arch: Architecture,
        conv: ConvParams<T>,
        lstm: Vec<LstmLayerParams<T>>,
        output: OutputParams<T>,
    ) -> Result<Self> {
        let params = Self {
            arch,
            conv,
            lstm,
            output,
        };
        params.check()?;
        Ok(params)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    /// Verifies that every tensor matches the architecture and that layer
    /// sizes chain: `p * k` into the first LSTM layer, `2 * hidden` between
    /// layers, `q` into the output layer.
    pub fn check(&self) -> Result<()> {
        let arch = &self.arch;
        arch.validate()?;
        let c = &self.conv;
        if (c.count, c.kernel_height, c.kernel_width, c.freq_stride)
            != (
                arch.kernels,
                arch.kernel_height,
                arch.kernel_width,
                arch.freq_stride,
            )
            || c.weights.len() != c.count * c.kernel_height * c.kernel_width
        {
            return Err(Error::DimensionChain(format!(
                "convolution {}x{}x{} stride {} does not match architecture",
                c.count, c.kernel_height, c.kernel_width, c.freq_stride
            )));
        }
        if self.lstm.len() != arch.hidden_sizes.len() {
            return Err(Error::DimensionChain(format!(
                "{} LSTM layers, architecture has {}",
                self.lstm.len(),
                arch.hidden_sizes.len()
            )));
        }
        for (l, layer) in self.lstm.iter().enumerate() {
            let input = arch.layer_input_size(l);
            let hidden = arch.hidden_sizes[l];
            layer.forward.check(input, hidden)?;
            layer.backward.check(input, hidden)?;
        }
        if self.output.weights.shape() != (arch.bins, arch.output_input_size())
            || self.output.bias.len() != arch.bins
        {
            return Err(Error::DimensionChain(format!(
                "output layer {:?} does not map q = {} onto d = {}",
                self.output.weights.shape(),
                arch.output_input_size(),
                arch.bins
            )));
        }
        Ok(())
    }

    /// All tensors in a fixed order with stable names.
    pub fn tensors(&self) -> Vec<Tensor<'_, T>> {
        let mut out = Vec::with_capacity(3 + 10 * self.lstm.len());
        out.push(Tensor {
            name: "conv.kernels".into(),
            shape: vec![
                self.conv.count,
                self.conv.kernel_height,
                self.conv.kernel_width,
            ],
            data: &self.conv.weights,
        });
        for (l, layer) in self.lstm.iter().enumerate() {
            for (dir_name, dir) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                let h = dir.hidden_size();
                let prefix = format!("lstm.{l}.{dir_name}");
                out.push(Tensor {
                    name: format!("{prefix}.input_weights"),
                    shape: vec![4 * h, dir.input_size()],
                    data: dir.input_weights.as_slice(),
                });
                out.push(Tensor {
                    name: format!("{prefix}.recurrent_weights"),
                    shape: vec![4 * h, h],
                    data: dir.recurrent_weights.as_slice(),
                });
                out.push(Tensor {
                    name: format!("{prefix}.peephole_input"),
                    shape: vec![h],
                    data: &dir.peephole_input,
                });
                out.push(Tensor {
                    name: format!("{prefix}.peephole_forget"),
                    shape: vec![h],
                    data: &dir.peephole_forget,
                });
                out.push(Tensor {
                    name: format!("{prefix}.peephole_output"),
                    shape: vec![h],
                    data: &dir.peephole_output,
                });
            }
        }
        out.push(Tensor {
            name: "output.weights".into(),
            shape: vec![self.output.weights.rows(), self.output.weights.cols()],
            data: self.output.weights.as_slice(),
        });
        out.push(Tensor {
            name: "output.bias".into(),
            shape: vec![self.output.bias.len()],
            data: &self.output.bias,
        });
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::with_capacity(3 + 10 * self.lstm.len());
        out.push(TensorMut {
            name: "conv.kernels".into(),
            shape: vec![
                self.conv.count,
                self.conv.kernel_height,
                self.conv.kernel_width,
            ],
            data: &mut self.conv.weights,
        });
        for (l, layer) in self.lstm.iter_mut().enumerate() {
            for (dir_name, dir) in [("fwd", &mut layer.forward), ("bwd", &mut layer.backward)] {
                let h = dir.hidden_size();
                let input = dir.input_size();
                let prefix = format!("lstm.{l}.{dir_name}");
                out.push(TensorMut {
                    name: format!("{prefix}.input_weights"),
                    shape: vec![4 * h, input],
                    data: dir.input_weights.as_mut_slice(),
                });
                out.push(TensorMut {
                    name: format!("{prefix}.recurrent_weights"),
                    shape: vec![4 * h, h],
                    data: dir.recurrent_weights.as_mut_slice(),
                });
                out.push(TensorMut {
                    name: format!("{prefix}.peephole_input"),
                    shape: vec![h],
                    data: &mut dir.peephole_input,
                });
                out.push(TensorMut {
                    name: format!("{prefix}.peephole_forget"),
                    shape: vec![h],
                    data: &mut dir.peephole_forget,
                });
                out.push(TensorMut {
                    name: format!("{prefix}.peephole_output"),
                    shape: vec![h],
                    data: &mut dir.peephole_output,
                });
            }
        }
        let (rows, cols) = self.output.weights.shape();
        out.push(TensorMut {
            name: "output.weights".into(),
            shape: vec![rows, cols],
            data: self.output.weights.as_mut_slice(),
        });
        out.push(TensorMut {
            name: "output.bias".into(),
            shape: vec![self.output.bias.len()],
            data: &mut self.output.bias,
        });
        out
    }

    /// Same architecture and values converted to another element type.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.arch).expect("architecture already validated");
        for (src, dst) in self.tensors().into_iter().zip(out.tensors_mut()) {
            for (d, &s) in dst.data.iter_mut().zip(src.data) {
                *d = U::from_f64(s.widen());
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    num_traits::Float::sqrt(6.0 / (fan_in + fan_out) as f64)
}

fn fill_uniform<T: Scalar, R: Rng + ?Sized>(data: &mut [T], limit: f64, rng: &mut R) {
    for v in data {
        *v = T::from_f64(rng.gen_range(-limit..=limit));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn full_size_shapes() {
        let arch = Architecture::full_size();
        arch.validate().unwrap();
        assert_eq!(arch.positions(), 15);
        assert_eq!(arch.lstm_input_size(), 3840);
        assert_eq!(arch.output_input_size(), 2048);
        assert_eq!(arch.uncovered_bins(), 0);
    }

    #[test]
    fn positions_use_floor() {
        let arch = Architecture {
            bins: 10,
            kernel_height: 4,
            freq_stride: 4,
            ..Architecture::tiny()
        };
        assert_eq!(arch.positions(), 2);
        assert_eq!(arch.uncovered_bins(), 2);
    }

    #[test]
    fn even_width_and_tall_kernel_rejected() {
        let even = Architecture {
            kernel_width: 4,
            ..Architecture::tiny()
        };
        assert_eq!(even.validate(), Err(Error::EvenKernelWidth(4)));
        let tall = Architecture {
            kernel_height: 9,
            ..Architecture::tiny()
        };
        assert!(matches!(tall.validate(), Err(Error::KernelTooTall { .. })));
        let empty = Architecture {
            hidden_sizes: vec![],
            ..Architecture::tiny()
        };
        assert!(matches!(empty.validate(), Err(Error::DimensionChain(_))));
    }

    #[test]
    fn init_bounds_and_zero_peepholes() {
        let arch = Architecture::tiny();
        let p = ModelParams::<f64>::init(&arch, &mut seeded(1)).unwrap();
        let limit = glorot(12, 36);
        assert!(p.conv.weights.iter().all(|w| w.abs() <= limit));
        assert!(p.conv.weights.iter().any(|w| *w != 0.0));
        let dir = &p.lstm[0].forward;
        assert!(dir.peephole_input.iter().all(|&w| w == 0.0));
        assert!(p.output.bias.iter().all(|&b| b == 0.0));
        let total: usize = p.tensors().iter().map(|t| t.data.len()).sum();
        assert_eq!(total, arch.parameter_count());
    }

    #[test]
    fn mismatched_parts_rejected() {
        let arch = Architecture::tiny();
        let good = ModelParams::<f32>::zeros(&arch).unwrap();
        let mut lstm = good.lstm.clone();
        lstm[0].backward = LstmDirection::zeros(arch.lstm_input_size() + 1, 5);
        let err =
            ModelParams::from_parts(arch.clone(), good.conv.clone(), lstm, good.output.clone());
        assert!(matches!(err, Err(Error::DimensionChain(_))));
        let out = OutputParams::zeros(arch.bins, 7);
        let err = ModelParams::from_parts(arch, good.conv.clone(), good.lstm.clone(), out);
        assert!(matches!(err, Err(Error::DimensionChain(_))));
    }

    #[test]
    fn tensor_views_agree() {
        let arch = Architecture {
            hidden_sizes: vec![4, 3],
            ..Architecture::tiny()
        };
        let mut p = ModelParams::<f32>::init(&arch, &mut seeded(2)).unwrap();
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.name).collect();
        let names_mut: Vec<String> = p.tensors_mut().into_iter().map(|t| t.name).collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.len(), 3 + 2 * 2 * 5);
        assert!(names.contains(&"lstm.1.bwd.peephole_output".into()));
        let back: ModelParams<f32> = p.cast::<f64>().cast();
        assert_eq!(back, p);
    }
}
