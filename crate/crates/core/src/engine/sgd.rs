use crate::engine::conv::ConvParams;
use crate::error::{Error, Result};
use crate::tensor::Real;

/// Plain SGD with L2 weight decay: `p <- p - lr * (g + weight_decay * p)`.
///
/// Bias terms are updated without decay.
pub fn sgd_step<T: Real>(params: &mut ConvParams<T>, grads: &ConvParams<T>, learning_rate: T, weight_decay: T) -> Result<()> {
    if params.weights.shape() != grads.weights.shape() || params.bias.len() != grads.bias.len() {
        return Err(Error::shape(
            "sgd params vs grads",
            params.weights.shape(),
            grads.weights.shape(),
        ));
    }
    update(params.weights.data_mut(), grads.weights.data(), learning_rate, weight_decay);
    update(&mut params.bias, &grads.bias, learning_rate, T::ZERO);
    Ok(())
}

fn update<T: Real>(values: &mut [T], grads: &[T], lr: T, wd: T) {
    for (p, &g) in values.iter_mut().zip(grads) {
        *p -= lr * (g + wd * *p);
    }
}
