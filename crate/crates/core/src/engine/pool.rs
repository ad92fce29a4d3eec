//! Max pooling with stride 1 and a centered odd window, so the output keeps
//! the input resolution. Padding behaves as negative infinity.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Flat input index of the maximal element for every output element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    shape: Shape,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Ties go to the first maximal element in row-major window order.
pub fn maxpool_same_forward<T: Real>(input: &Tensor<T>, window: usize) -> Result<(Tensor<T>, PoolIndices)> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "pool window must be a positive odd integer, got {window}"
        )));
    }
    let s = input.shape();
    let half = window / 2;
    let mut out = Tensor::zeros(s);
    let mut argmax = vec![0usize; s.len()];
    let data = input.data();
    for n in 0..s.batch {
        for c in 0..s.channels {
            let base = (n * s.channels + c) * s.plane();
            for i in 0..s.rows {
                let (r0, r1) = (i.saturating_sub(half), (i + half + 1).min(s.rows));
                for j in 0..s.cols {
                    let (c0, c1) = (j.saturating_sub(half), (j + half + 1).min(s.cols));
                    let mut best = T::NEG_INFINITY;
                    let mut best_idx = base + r0 * s.cols + c0;
                    for si in r0..r1 {
                        for sj in c0..c1 {
                            let k = base + si * s.cols + sj;
                            if data[k] > best {
                                best = data[k];
                                best_idx = k;
                            }
                        }
                    }
                    let o = base + i * s.cols + j;
                    out.data_mut()[o] = data[best_idx];
                    argmax[o] = best_idx;
                }
            }
        }
    }
    Ok((out, PoolIndices { shape: s, argmax }))
}

/// Routes each output gradient to the input element that won its window.
pub fn maxpool_same_backward<T: Real>(grad_out: &Tensor<T>, indices: &PoolIndices) -> Result<Tensor<T>> {
    if grad_out.shape() != indices.shape || indices.argmax.len() != grad_out.shape().len() {
        return Err(Error::shape(
            "pool grad_out vs saved indices",
            indices.shape,
            grad_out.shape(),
        ));
    }
    let mut grad_in = Tensor::zeros(indices.shape);
    let gi = grad_in.data_mut();
    for (&src, &g) in indices.argmax.iter().zip(grad_out.data()) {
        gi[src] += g;
    }
    Ok(grad_in)
}
