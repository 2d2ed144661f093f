use alloc::vec;
use alloc::vec::Vec;

use super::params::{LstmDirection, LstmLayerParams};
use crate::scalar::{dot, sigmoid};
use crate::{Error, Matrix, Result, Scalar};

/// Cell states are clamped to `[-CELL_CLIP, CELL_CLIP]`. Clamped entries
/// pass no gradient.
pub const CELL_CLIP: f64 = 50.0;

/// Per-time-step activations of one LSTM direction. Every matrix is
/// `t x hidden` and indexed by the original (not scan-order) time.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionCache<T> {
    pub reverse: bool,
    pub input_gate: Matrix<T>,
    pub forget_gate: Matrix<T>,
    pub candidate: Matrix<T>,
    pub output_gate: Matrix<T>,
    pub cell: Matrix<T>,
    pub cell_tanh: Matrix<T>,
    pub hidden: Matrix<T>,
    pub clipped: Vec<bool>,
}

impl<T: Scalar> DirectionCache<T> {
    fn new(frames: usize, hidden: usize, reverse: bool) -> Self {
        let z = || Matrix::zeros(frames, hidden);
        Self {
            reverse,
            input_gate: z(),
            forget_gate: z(),
            candidate: z(),
            output_gate: z(),
            cell: z(),
            cell_tanh: z(),
            hidden: z(),
            clipped: vec![false; frames * hidden],
        }
    }

    pub fn clip_count(&self) -> usize {
        self.clipped.iter().filter(|&&c| c).count()
    }

    fn scan_order(&self) -> impl DoubleEndedIterator<Item = usize> {
        let frames = self.hidden.rows();
        let reverse = self.reverse;
        (0..frames).map(move |s| if reverse { frames - 1 - s } else { s })
    }

    /// Time index visited just before `t` in scan order.
    fn predecessor(&self, t: usize) -> Option<usize> {
        if self.reverse {
            (t + 1 < self.hidden.rows()).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    }
}

struct StepOut<'a, T> {
    i: &'a mut [T],
    f: &'a mut [T],
    g: &'a mut [T],
    o: &'a mut [T],
    c: &'a mut [T],
    tanh_c: &'a mut [T],
    h: &'a mut [T],
    clipped: &'a mut [bool],
}

/// One peephole LSTM update given the input projection `W_x x_t`.
fn step_into<T: Scalar>(
    dir: &LstmDirection<T>,
    x_proj: &[T],
    h_prev: &[T],
    c_prev: &[T],
    out: StepOut<'_, T>,
) -> Result<()> {
    let hidden = dir.hidden_size();
    let w_h = &dir.recurrent_weights;
    let pre = |gate: usize, k: usize| {
        let row = gate * hidden + k;
        x_proj[row].widen() + dot(w_h.row(row), h_prev)
    };
    let clip = T::from_f64(CELL_CLIP);
    for k in 0..hidden {
        let cp = c_prev[k];
        let i = sigmoid(T::from_f64(pre(0, k)) + dir.peephole_input[k] * cp);
        let f = sigmoid(T::from_f64(pre(1, k)) + dir.peephole_forget[k] * cp);
        let g = T::from_f64(pre(2, k)).tanh();
        let mut c = f * cp + i * g;
        if !c.is_finite() {
            return Err(Error::NumericOverflow);
        }
        if c.abs() > clip {
            log::debug!("cell state {} clipped to +/-{}", c, CELL_CLIP);
            c = c.signum() * clip;
            out.clipped[k] = true;
        }
        let o = sigmoid(T::from_f64(pre(3, k)) + dir.peephole_output[k] * c);
        let tanh_c = c.tanh();
        let h = o * tanh_c;
        if !h.is_finite() {
            return Err(Error::NumericOverflow);
        }
        out.i[k] = i;
        out.f[k] = f;
        out.g[k] = g;
        out.o[k] = o;
        out.c[k] = c;
        out.tanh_c[k] = tanh_c;
        out.h[k] = h;
    }
    Ok(())
}

fn project<T: Scalar>(weights: &Matrix<T>, x: &[T], out: &mut [T]) {
    for (r, slot) in out.iter_mut().enumerate() {
        *slot = T::from_f64(dot(weights.row(r), x));
    }
}

/// Single LSTM step. Returns `(h_t, c_t)`.
pub fn lstm_cell_step<T: Scalar>(
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    dir: &LstmDirection<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let hidden = dir.hidden_size();
    for (context, got, want) in [
        ("cell input", x.len(), dir.input_size()),
        ("previous hidden state", h_prev.len(), hidden),
        ("previous cell state", c_prev.len(), hidden),
    ] {
        if got != want {
            return Err(Error::ShapeMismatch {
                context,
                expected: (want, 1),
                got: (got, 1),
            });
        }
    }
    let mut x_proj = vec![T::zero(); 4 * hidden];
    project(&dir.input_weights, x, &mut x_proj);
    let mut scratch = vec![T::zero(); 5 * hidden];
    let (i, rest) = scratch.split_at_mut(hidden);
    let (f, rest) = rest.split_at_mut(hidden);
    let (g, rest) = rest.split_at_mut(hidden);
    let (o, tanh_c) = rest.split_at_mut(hidden);
    let mut h = vec![T::zero(); hidden];
    let mut c = vec![T::zero(); hidden];
    let mut clipped = vec![false; hidden];
    step_into(
        dir,
        &x_proj,
        h_prev,
        c_prev,
        StepOut {
            i,
            f,
            g,
            o,
            c: &mut c,
            tanh_c,
            h: &mut h,
            clipped: &mut clipped,
        },
    )?;
    Ok((h, c))
}

/// Runs one direction over `input` (`t x in`, rows are time steps) from a
/// zero initial state.
pub(crate) fn direction_forward<T: Scalar>(
    dir: &LstmDirection<T>,
    input: &Matrix<T>,
    reverse: bool,
) -> Result<DirectionCache<T>> {
    let frames = input.rows();
    let hidden = dir.hidden_size();
    if input.cols() != dir.input_size() {
        return Err(Error::ShapeMismatch {
            context: "LSTM input",
            expected: (frames, dir.input_size()),
            got: input.shape(),
        });
    }
    let mut cache = DirectionCache::new(frames, hidden, reverse);
    let mut x_proj = vec![T::zero(); 4 * hidden];
    let zeros = vec![T::zero(); hidden];
    let order: Vec<usize> = cache.scan_order().collect();
    for t in order {
        project(&dir.input_weights, input.row(t), &mut x_proj);
        let (h_prev, c_prev) = match cache.predecessor(t) {
            Some(p) => (cache.hidden.row(p).to_vec(), cache.cell.row(p).to_vec()),
            None => (zeros.clone(), zeros.clone()),
        };
        let DirectionCache {
            input_gate,
            forget_gate,
            candidate,
            output_gate,
            cell,
            cell_tanh,
            hidden: hid,
            clipped,
            ..
        } = &mut cache;
        step_into(
            dir,
            &x_proj,
            &h_prev,
            &c_prev,
            StepOut {
                i: input_gate.row_mut(t),
                f: forget_gate.row_mut(t),
                g: candidate.row_mut(t),
                o: output_gate.row_mut(t),
                c: cell.row_mut(t),
                tanh_c: cell_tanh.row_mut(t),
                h: hid.row_mut(t),
                clipped: &mut clipped[t * hidden..(t + 1) * hidden],
            },
        )?;
    }
    Ok(cache)
}

/// Backpropagation through time for one direction.
///
/// `grad_hidden` (`t x hidden`) is the loss gradient reaching each hidden
/// output from above. Parameter gradients are added into `grads`; the
/// gradient with respect to `input` is returned.
pub(crate) fn direction_backward<T: Scalar>(
    dir: &LstmDirection<T>,
    input: &Matrix<T>,
    cache: &DirectionCache<T>,
    grad_hidden: &Matrix<T>,
    grads: &mut LstmDirection<T>,
) -> Matrix<T> {
    let frames = input.rows();
    let hidden = dir.hidden_size();
    let one = T::one();
    let mut grad_pre = Matrix::<T>::zeros(frames, 4 * hidden);
    let mut dh_next = vec![T::zero(); hidden];
    let mut dc_next = vec![T::zero(); hidden];
    let mut dc_carry = vec![T::zero(); hidden];
    let recurrent_t = dir.recurrent_weights.transpose();
    let zeros = vec![T::zero(); hidden];

    for t in cache.scan_order().rev() {
        let prev = cache.predecessor(t);
        let (h_prev, c_prev) = match prev {
            Some(p) => (cache.hidden.row(p), cache.cell.row(p)),
            None => (zeros.as_slice(), zeros.as_slice()),
        };
        let da = grad_pre.row_mut(t);
        for k in 0..hidden {
            let i = cache.input_gate[(t, k)];
            let f = cache.forget_gate[(t, k)];
            let g = cache.candidate[(t, k)];
            let o = cache.output_gate[(t, k)];
            let c = cache.cell[(t, k)];
            let tc = cache.cell_tanh[(t, k)];
            let dh = grad_hidden[(t, k)] + dh_next[k];

            let da_o = dh * tc * o * (one - o);
            let mut dc = dh * o * (one - tc * tc) + da_o * dir.peephole_output[k] + dc_next[k];
            if cache.clipped[t * hidden + k] {
                dc = T::zero();
            }
            let da_i = dc * g * i * (one - i);
            let da_f = dc * c_prev[k] * f * (one - f);
            let da_g = dc * i * (one - g * g);

            dc_carry[k] = dc * f + da_i * dir.peephole_input[k] + da_f * dir.peephole_forget[k];
            grads.peephole_input[k] += da_i * c_prev[k];
            grads.peephole_forget[k] += da_f * c_prev[k];
            grads.peephole_output[k] += da_o * c;

            da[k] = da_i;
            da[hidden + k] = da_f;
            da[2 * hidden + k] = da_g;
            da[3 * hidden + k] = da_o;
        }
        let da = grad_pre.row(t);
        if prev.is_some() {
            for (r, &g) in da.iter().enumerate() {
                if g != T::zero() {
                    for (w, &hp) in grads.recurrent_weights.row_mut(r).iter_mut().zip(h_prev) {
                        *w += g * hp;
                    }
                }
            }
        }
        for (k, slot) in dh_next.iter_mut().enumerate() {
            *slot = T::from_f64(dot(recurrent_t.row(k), da));
        }
        core::mem::swap(&mut dc_next, &mut dc_carry);
    }

    let grad_pre_t = grad_pre.transpose();
    let input_t = input.transpose();
    for r in 0..4 * hidden {
        let gp = grad_pre_t.row(r);
        for (c, w) in grads.input_weights.row_mut(r).iter_mut().enumerate() {
            *w += T::from_f64(dot(gp, input_t.row(c)));
        }
    }
    let input_weights_t = dir.input_weights.transpose();
    Matrix::from_fn(frames, input.cols(), |t, c| {
        T::from_f64(dot(grad_pre.row(t), input_weights_t.row(c)))
    })
}

/// Both directions of one layer; the output row `t` is `[h_fwd_t ; h_bwd_t]`.
pub(crate) fn layer_forward<T: Scalar>(
    layer: &LstmLayerParams<T>,
    input: &Matrix<T>,
) -> Result<(DirectionCache<T>, DirectionCache<T>, Matrix<T>)> {
    let fwd = direction_forward(&layer.forward, input, false)?;
    let bwd = direction_forward(&layer.backward, input, true)?;
    let hidden = layer.hidden_size();
    let out = Matrix::from_fn(input.rows(), 2 * hidden, |t, k| {
        if k < hidden {
            fwd.hidden[(t, k)]
        } else {
            bwd.hidden[(t, k - hidden)]
        }
    });
    Ok((fwd, bwd, out))
}

/// Deep bidirectional LSTM over stacked features (`features x t`).
/// Returns the top layer's `q x t` output.
pub fn bilstm_forward<T: Scalar>(
    stacked: &Matrix<T>,
    layers: &[LstmLayerParams<T>],
) -> Result<Matrix<T>> {
    if stacked.cols() == 0 {
        return Err(Error::InvalidConfig("BiLSTM input has no frames".into()));
    }
    let mut input = stacked.transpose();
    for layer in layers {
        let (_, _, out) = layer_forward(layer, &input)?;
        input = out;
    }
    Ok(input.transpose())
}
