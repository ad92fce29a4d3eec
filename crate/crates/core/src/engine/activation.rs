use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

pub(crate) fn relu_in_place<T: Real>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        if !(*v > T::ZERO) {
            *v = T::ZERO;
        }
    }
}

/// Passes the gradient where the saved activation input (or output) is positive.
///
/// The derivative at exactly zero is taken as zero.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, saved_input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != saved_input.shape() {
        return Err(Error::shape("relu grad_out", saved_input.shape(), grad_out.shape()));
    }
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(saved_input.data()) {
        if !(x > T::ZERO) {
            *gv = T::ZERO;
        }
    }
    Ok(g)
}
