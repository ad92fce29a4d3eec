use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Result of [`softmax_cross_entropy`].
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    /// Mean negative log-likelihood over non-void pixels.
    pub loss: T,
    /// Gradient of `loss` with respect to the logits; zero at void pixels.
    pub grad: Tensor<T>,
    /// Fraction of non-void pixels whose argmax logit equals the label.
    pub accuracy: f64,
    /// Number of non-void pixels.
    pub valid: usize,
}

impl<T> LossOutput<T> {
    /// True when every pixel was void; loss and gradient are then zero and
    /// accuracy is reported as 1.
    pub fn all_void(&self) -> bool {
        self.valid == 0
    }
}

/// Masked softmax cross-entropy over the channel axis of `logits`.
///
/// `labels` and `void_mask` are indexed `(n, i, j)` row-major. Labels at void
/// pixels are ignored.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[u8],
    void_mask: &[bool],
) -> Result<LossOutput<T>> {
    let s = logits.shape();
    let pixels = s.batch * s.plane();
    if labels.len() != pixels || void_mask.len() != pixels {
        return Err(Error::shape(
            "loss labels/void mask length",
            pixels,
            format!("{}/{}", labels.len(), void_mask.len()),
        ));
    }
    let classes = s.channels;
    let plane = s.plane();
    let valid = void_mask.iter().filter(|v| !**v).count();
    let mut grad = Tensor::zeros(s);
    if valid == 0 {
        return Ok(LossOutput {
            loss: T::ZERO,
            grad,
            accuracy: 1.0,
            valid,
        });
    }
    let inv_n = T::ONE / T::from_f64(valid as f64);
    let mut loss = T::ZERO;
    let mut correct = 0usize;
    let data = logits.data();
    let mut probs = vec![T::ZERO; classes];
    for n in 0..s.batch {
        for p in 0..plane {
            let px = n * plane + p;
            if void_mask[px] {
                continue;
            }
            let label = labels[px] as usize;
            if label >= classes {
                return Err(Error::InvalidArgument(format!(
                    "label {label} at pixel {px} outside [0, {classes})"
                )));
            }
            let at = |c: usize| (n * classes + c) * plane + p;
            let mut max = T::NEG_INFINITY;
            let mut arg = 0;
            for c in 0..classes {
                let v = data[at(c)];
                if v > max {
                    max = v;
                    arg = c;
                }
            }
            if arg == label {
                correct += 1;
            }
            let mut z = T::ZERO;
            for (c, pr) in probs.iter_mut().enumerate() {
                *pr = (data[at(c)] - max).exp();
                z += *pr;
            }
            loss += z.ln() - (data[at(label)] - max);
            let g = grad.data_mut();
            for (c, &pr) in probs.iter().enumerate() {
                let one_hot = if c == label { T::ONE } else { T::ZERO };
                g[at(c)] = (pr / z - one_hot) * inv_n;
            }
        }
    }
    Ok(LossOutput {
        loss: loss * inv_n,
        grad,
        accuracy: correct as f64 / valid as f64,
        valid,
    })
}

/// Numerically stable softmax over channels, in place.
pub fn softmax_channels<T: Real>(logits: &mut Tensor<T>) {
    let s = logits.shape();
    let plane = s.plane();
    let data = logits.data_mut();
    for n in 0..s.batch {
        for p in 0..plane {
            let at = |c: usize| (n * s.channels + c) * plane + p;
            let mut max = T::NEG_INFINITY;
            for c in 0..s.channels {
                max = max.max(data[at(c)]);
            }
            let mut z = T::ZERO;
            for c in 0..s.channels {
                let e = (data[at(c)] - max).exp();
                data[at(c)] = e;
                z += e;
            }
            for c in 0..s.channels {
                data[at(c)] = data[at(c)] / z;
            }
        }
    }
}
