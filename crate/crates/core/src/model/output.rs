use super::params::OutputParams;
use crate::scalar::dot;
use crate::{Error, Matrix, Result, Scalar};

/// Per-frame affine map `W h_t + b_W` before truncation (`d x t`).
pub(crate) fn output_pre_activations<T: Scalar>(
    top: &Matrix<T>,
    op: &OutputParams<T>,
) -> Result<Matrix<T>> {
    // `top` is time-major, `t x q`.
    if top.cols() != op.weights.cols() {
        return Err(Error::ShapeMismatch {
            context: "output layer input",
            expected: (op.weights.cols(), top.rows()),
            got: (top.cols(), top.rows()),
        });
    }
    Ok(Matrix::from_fn(op.weights.rows(), top.rows(), |r, t| {
        T::from_f64(op.bias[r].widen() + dot(op.weights.row(r), top.row(t)))
    }))
}

/// `max(0, W h_t + b_W)` for every column `h_t` of `htilde` (`q x t`).
pub fn output_forward<T: Scalar>(htilde: &Matrix<T>, op: &OutputParams<T>) -> Result<Matrix<T>> {
    let pre = output_pre_activations(&htilde.transpose(), op)?;
    Ok(truncate(&pre))
}

pub(crate) fn truncate<T: Scalar>(pre: &Matrix<T>) -> Matrix<T> {
    pre.map(|v| if v > T::zero() { v } else { T::zero() })
}
