use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean absolute error over all entries and its gradient with respect to
/// `pred`. The subgradient at a zero residual is taken as zero.
pub fn mae_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} and target {:?} differ",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let r = p - t;
            total += r.abs();
            if r > 0.0 {
                1.0 / n
            } else if r < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((total / n, Tensor::new(pred.shape().to_vec(), grad)?))
}
