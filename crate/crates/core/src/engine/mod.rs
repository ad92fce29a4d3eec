//! Differentiable kernels with hand-derived backward passes.
//!
//! Every kernel preserves spatial resolution: convolutions use stride 1 with
//! zero "same" padding and pooling uses stride 1 with `-inf` padding.

pub mod activation;
pub mod concat;
pub mod conv;
pub mod loss;
pub mod pool;
pub mod sgd;

pub use activation::{relu, relu_backward};
pub use concat::{concat_backward, concat_channels};
pub use conv::{conv2d_dilated_backward, conv2d_dilated_forward, dilated_conv1d_reference, ConvGrads, ConvParams};
pub use loss::{softmax_channels, softmax_cross_entropy, LossOutput};
pub use pool::{maxpool_same_backward, maxpool_same_forward, PoolIndices};
pub use sgd::sgd_step;

use crate::models::{LayerKind, NetworkSpec};

/// Analytic receptive field of a network along one axis.
///
/// Each convolution widens it by `(k-1)*r`, each pooling layer by
/// `window-1`; the 1x1 classifier adds nothing. Dense connections do not
/// change the longest path, which runs through every layer.
pub fn receptive_field(spec: &NetworkSpec) -> usize {
    1 + spec
        .layers
        .iter()
        .map(|l| match l.kind {
            LayerKind::DilatedConv => (l.kernel - 1) * l.rate,
            LayerKind::MaxPool => l.kernel - 1,
        })
        .sum::<usize>()
}
