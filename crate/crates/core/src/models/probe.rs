//! Empirical receptive field from input-gradient support.

use super::{backward, forward, init_params, LayerKind, NetworkSpec, Params};
use crate::error::Result;
use crate::tensor::{Shape, Tensor};

/// Rows and columns spanned by the input pixels whose gradient with respect
/// to the center output pixel is nonzero.
///
/// Weights are made positive and biases zero so no ReLU is inactive and no
/// two paths cancel. A max-pool routes gradient to one input per window, so
/// the probe repeats with inputs ramping toward each of the four sides, which
/// pushes every pool's choice to that side, and takes the union.
pub fn gradient_support(spec: &NetworkSpec) -> Result<(usize, usize)> {
    spec.validate()?;
    let mut params: Params<f64> = init_params(spec, 0);
    for c in &mut params.convs {
        c.weights.data_mut().iter_mut().for_each(|w| *w = w.abs() + 1e-3);
        c.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    let bound: usize = spec
        .layers
        .iter()
        .map(|l| match l.kind {
            LayerKind::DilatedConv => l.kernel * l.rate,
            LayerKind::MaxPool => l.kernel,
        })
        .sum();
    let n = 2 * bound + 1;
    let center = n / 2;
    let mut grad_logits = Tensor::zeros(Shape::new(1, spec.num_classes, n, n));
    grad_logits.set(0, 0, center, center, 1.0);
    let ramps: [fn(usize, usize, usize) -> f64; 4] = [
        |_, c, n| (n - c) as f64,
        |_, c, _| c as f64,
        |r, _, n| (n - r) as f64,
        |r, _, _| r as f64,
    ];
    let (mut top, mut bottom, mut left, mut right) = (n, 0, n, 0);
    for ramp in ramps {
        let x = Tensor::from_fn(Shape::new(1, spec.in_channels, n, n), |_, _, r, c| 1.0 + 0.01 * ramp(r, c, n));
        let fwd = forward(spec, &params, &x, true)?;
        let g = backward(spec, &params, fwd.trace.as_ref().expect("trace requested"), &grad_logits)?;
        for ch in 0..spec.in_channels {
            let plane = g.input.plane(0, ch);
            for r in 0..n {
                for c in 0..n {
                    if plane[r * n + c] != 0.0 {
                        top = top.min(r);
                        bottom = bottom.max(r);
                        left = left.min(c);
                        right = right.max(c);
                    }
                }
            }
        }
    }
    if top > bottom {
        return Ok((0, 0));
    }
    Ok((bottom - top + 1, right - left + 1))
}
