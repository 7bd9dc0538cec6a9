//! Finite-difference checks for the reverse pass.

use super::loss::mae_loss;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::Result;

/// Largest relative discrepancy between the analytic MAE gradient and a
/// central difference with step `step`, over the parameter indices in
/// `indices`.
pub fn max_relative_error(net: &Network, input: &Tensor, target: &Tensor, indices: &[usize], step: f64) -> Result<f64> {
    let (pred, cache) = net.forward(input)?;
    let (_, out_grad) = mae_loss(&pred, target)?;
    let mut grads = vec![0.0; net.num_params()];
    net.backward(&cache, &out_grad, &mut grads)?;

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for &i in indices {
        let base = probe.params()[i];
        probe.params_mut()[i] = base + step;
        let plus = mae_loss(&probe.predict(input)?, target)?.0;
        probe.params_mut()[i] = base - step;
        let minus = mae_loss(&probe.predict(input)?, target)?.0;
        probe.params_mut()[i] = base;
        let numeric = (plus - minus) / (2.0 * step);
        let scale = numeric.abs().max(grads[i].abs()).max(1e-8);
        worst = worst.max((numeric - grads[i]).abs() / scale);
    }
    Ok(worst)
}
