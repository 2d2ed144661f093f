use crate::{Matrix, Result, Scalar};

/// Half the squared Frobenius distance, `0.5 * sum (pred - target)^2`.
pub fn mse_loss<T: Scalar>(pred: &Matrix<T>, target: &Matrix<T>) -> Result<f64> {
    masked_mse_loss(pred, target, pred.cols())
}

/// [`mse_loss`] restricted to the first `valid_frames` columns.
pub fn masked_mse_loss<T: Scalar>(
    pred: &Matrix<T>,
    target: &Matrix<T>,
    valid_frames: usize,
) -> Result<f64> {
    target.ensure_shape("loss target", pred.shape())?;
    let valid = valid_frames.min(pred.cols());
    let mut acc = 0.0f64;
    for r in 0..pred.rows() {
        for (p, y) in pred.row(r)[..valid].iter().zip(&target.row(r)[..valid]) {
            let diff = p.widen() - y.widen();
            acc += diff * diff;
        }
    }
    Ok(0.5 * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;
    use std::vec;

    #[test]
    fn basic_values() {
        let a = Matrix::from_vec(1, 1, vec![2.0f64]).unwrap();
        let b = Matrix::from_vec(1, 1, vec![1.0f64]).unwrap();
        assert_eq!(mse_loss(&a, &b).unwrap(), 0.5);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mask_ignores_trailing_frames() {
        let a = Matrix::from_vec(2, 3, vec![1.0f64, 1.0, 9.0, 0.0, 0.0, 9.0]).unwrap();
        let b = Matrix::zeros(2, 3);
        assert_eq!(masked_mse_loss(&a, &b, 2).unwrap(), 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(3, 2);
        assert!(matches!(mse_loss(&a, &b), Err(Error::ShapeMismatch { .. })));
    }
}
