use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Concatenates along the channel axis, in argument order.
pub fn concat_channels<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?
        .shape();
    let mut channels = 0;
    for t in inputs {
        let s = t.shape();
        if (s.batch, s.rows, s.cols) != (first.batch, first.rows, first.cols) {
            return Err(Error::shape("concat batch/spatial extents", first, s));
        }
        channels += s.channels;
    }
    let shape = Shape::new(first.batch, channels, first.rows, first.cols);
    let mut data = Vec::with_capacity(shape.len());
    for n in 0..first.batch {
        for t in inputs {
            data.extend_from_slice(t.item(n));
        }
    }
    Tensor::from_vec(shape, data)
}

/// Splits a channel-concatenated gradient back into per-input pieces.
pub fn concat_backward<T: Real>(grad_out: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = grad_out.shape();
    let total: usize = channels.iter().sum();
    if total != s.channels {
        return Err(Error::shape("concat split channels", s.channels, total));
    }
    let plane = s.plane();
    let mut parts: Vec<Vec<T>> = channels
        .iter()
        .map(|&c| Vec::with_capacity(s.batch * c * plane))
        .collect();
    for n in 0..s.batch {
        let item = grad_out.item(n);
        let mut offset = 0;
        for (part, &c) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&item[offset * plane..(offset + c) * plane]);
            offset += c;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(data, &c)| Tensor::from_vec(Shape::new(s.batch, c, s.rows, s.cols), data))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_arithmetic() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let b = Tensor::<f32>::zeros(Shape::new(1, 3, 4, 4));
        assert_eq!(concat_channels(&[&a, &b]).unwrap().shape(), Shape::new(1, 5, 4, 4));
    }

    #[test]
    fn single_input_identity() {
        let a = Tensor::from_fn(Shape::new(2, 2, 3, 3), |n, c, i, j| (n + c + i * j) as f64);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn spatial_mismatch_rejected() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let b = Tensor::<f32>::zeros(Shape::new(1, 3, 4, 5));
        assert!(concat_channels(&[&a, &b]).is_err());
    }

    #[test]
    fn channel_order_within_items() {
        let a = Tensor::from_fn(Shape::new(2, 1, 1, 2), |n, _, _, j| (10 * n + j) as f64);
        let b = Tensor::from_fn(Shape::new(2, 2, 1, 2), |n, c, _, j| (100 + 10 * n + 5 * c + j) as f64);
        let out = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(out.get(1, 0, 0, 1), 11.0);
        assert_eq!(out.get(1, 2, 0, 0), 115.0);
    }
}
