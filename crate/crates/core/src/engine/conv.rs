//! Dilated 2-D convolution with stride 1 and "same" zero padding.
//!
//! Tap `(u, v)` of a kernel with dilation rate `r` reads input pixel
//! `(i - pad_top + u*r, j - pad_left + v*r)` for output pixel `(i, j)`, where
//! the padding splits the effective extent `(k-1)*r` with the smaller half on
//! the leading side. Out-of-bounds taps read zero.
//!
//! Both passes lower the convolution onto a matrix product through an
//! im2col buffer, one batch item at a time.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Weights, bias and dilation rate of one convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    /// Shape `(out_channels, in_channels, kernel_rows, kernel_cols)`.
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub rate: usize,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize, rate: usize) -> Self {
        ConvParams {
            weights: Tensor::zeros(Shape::new(out_channels, in_channels, kernel, kernel)),
            bias: vec![T::ZERO; out_channels],
            rate,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape().batch
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape().channels
    }

    pub fn kernel(&self) -> (usize, usize) {
        self.weights.shape().spatial()
    }

    /// Effective kernel extent `(k-1)*r + 1` along rows and cols.
    pub fn effective_extent(&self) -> (usize, usize) {
        let (kh, kw) = self.kernel();
        ((kh - 1) * self.rate + 1, (kw - 1) * self.rate + 1)
    }

    /// Leading (top, left) padding. The trailing side gets the remainder.
    pub fn leading_padding(&self) -> (usize, usize) {
        let (kh, kw) = self.kernel();
        (((kh - 1) * self.rate) / 2, ((kw - 1) * self.rate) / 2)
    }

    pub fn num_params(&self) -> usize {
        self.weights.shape().len() + self.bias.len()
    }

    fn validate(&self) -> Result<()> {
        if self.rate == 0 {
            return Err(Error::InvalidArgument("dilation rate must be >= 1".into()));
        }
        if self.bias.len() != self.out_channels() {
            return Err(Error::shape(
                "conv bias length",
                self.out_channels(),
                self.bias.len(),
            ));
        }
        let (kh, kw) = self.kernel();
        if kh == 0 || kw == 0 {
            return Err(Error::InvalidArgument("kernel extent must be >= 1".into()));
        }
        Ok(())
    }
}

/// Geometry shared by im2col and col2im for one layer and input size.
struct Lowering {
    channels: usize,
    rows: usize,
    cols: usize,
    kh: usize,
    kw: usize,
    rate: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Lowering {
    fn new<T: Real>(input: Shape, params: &ConvParams<T>) -> Self {
        let (kh, kw) = params.kernel();
        let (pad_top, pad_left) = params.leading_padding();
        Lowering {
            channels: input.channels,
            rows: input.rows,
            cols: input.cols,
            kh,
            kw,
            rate: params.rate,
            pad_top,
            pad_left,
        }
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.rows * self.cols
    }

    /// Source row for output row `i` and tap `u`, if in bounds.
    #[inline]
    fn src_row(&self, i: usize, u: usize) -> Option<usize> {
        let s = (i + u * self.rate).checked_sub(self.pad_top)?;
        (s < self.rows).then_some(s)
    }

    /// Range of output cols whose tap `v` lands in bounds, and the col offset.
    #[inline]
    fn col_span(&self, v: usize) -> (usize, usize, isize) {
        let shift = (v * self.rate) as isize - self.pad_left as isize;
        let lo = (-shift).max(0) as usize;
        let hi = (self.cols as isize - shift).clamp(0, self.cols as isize) as usize;
        (lo, hi.max(lo), shift)
    }

    fn im2col<T: Real>(&self, item: &[T], col: &mut [T]) {
        let plane = self.plane();
        for c in 0..self.channels {
            let src = &item[c * plane..(c + 1) * plane];
            for u in 0..self.kh {
                for v in 0..self.kw {
                    let row = ((c * self.kh + u) * self.kw + v) * plane;
                    let dst = &mut col[row..row + plane];
                    let (lo, hi, shift) = self.col_span(v);
                    for i in 0..self.rows {
                        let out = &mut dst[i * self.cols..(i + 1) * self.cols];
                        match self.src_row(i, u) {
                            Some(si) if lo < hi => {
                                out[..lo].fill(T::ZERO);
                                let s0 = (lo as isize + shift) as usize;
                                out[lo..hi].copy_from_slice(
                                    &src[si * self.cols + s0..si * self.cols + s0 + (hi - lo)],
                                );
                                out[hi..].fill(T::ZERO);
                            }
                            _ => out.fill(T::ZERO),
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, col: &[T], item: &mut [T]) {
        let plane = self.plane();
        for c in 0..self.channels {
            let dst = &mut item[c * plane..(c + 1) * plane];
            for u in 0..self.kh {
                for v in 0..self.kw {
                    let row = ((c * self.kh + u) * self.kw + v) * plane;
                    let src = &col[row..row + plane];
                    let (lo, hi, shift) = self.col_span(v);
                    if lo >= hi {
                        continue;
                    }
                    for i in 0..self.rows {
                        if let Some(si) = self.src_row(i, u) {
                            let s0 = (lo as isize + shift) as usize;
                            let d = &mut dst[si * self.cols + s0..si * self.cols + s0 + (hi - lo)];
                            for (a, &b) in d.iter_mut().zip(&src[i * self.cols + lo..i * self.cols + hi]) {
                                *a += b;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_input<T: Real>(input: Shape, params: &ConvParams<T>) -> Result<()> {
    params.validate()?;
    if input.channels != params.in_channels() {
        return Err(Error::shape(
            "conv input channels (weights vs input)",
            params.weights.shape(),
            input,
        ));
    }
    Ok(())
}

/// Forward pass. Output keeps the spatial extents of `input`.
pub fn conv2d_dilated_forward<T: Real>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let shape = input.shape();
    check_input(shape, params)?;
    let out_ch = params.out_channels();
    let mut out = Tensor::zeros(Shape::new(shape.batch, out_ch, shape.rows, shape.cols));
    let lower = Lowering::new(shape, params);
    let (k, plane) = (lower.patch_len(), lower.plane());
    if plane == 0 || shape.batch == 0 {
        return Ok(out);
    }
    let mut col = vec![T::ZERO; k * plane];
    for n in 0..shape.batch {
        lower.im2col(input.item(n), &mut col);
        let dst = out.item_mut(n);
        for (o, &b) in params.bias.iter().enumerate() {
            dst[o * plane..(o + 1) * plane].fill(b);
        }
        T::gemm(
            out_ch,
            k,
            plane,
            T::ONE,
            params.weights.data(),
            (k as isize, 1),
            &col,
            (plane as isize, 1),
            T::ONE,
            dst,
            (plane as isize, 1),
        );
    }
    Ok(out)
}

/// Gradients of one convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

/// Exact adjoint of [`conv2d_dilated_forward`].
///
/// `saved_input` is the tensor the forward pass consumed; `None` is rejected.
pub fn conv2d_dilated_backward<T: Real>(
    grad_out: &Tensor<T>,
    saved_input: Option<&Tensor<T>>,
    params: &ConvParams<T>,
) -> Result<ConvGrads<T>> {
    let input = saved_input.ok_or(Error::MissingState("conv saved input"))?;
    let shape = input.shape();
    check_input(shape, params)?;
    let out_ch = params.out_channels();
    let expected = Shape::new(shape.batch, out_ch, shape.rows, shape.cols);
    if grad_out.shape() != expected {
        return Err(Error::shape("conv grad_out", expected, grad_out.shape()));
    }
    let lower = Lowering::new(shape, params);
    let (k, plane) = (lower.patch_len(), lower.plane());
    let mut grads = ConvGrads {
        input: Tensor::zeros(shape),
        weights: Tensor::zeros(params.weights.shape()),
        bias: vec![T::ZERO; out_ch],
    };
    if plane == 0 || shape.batch == 0 {
        return Ok(grads);
    }
    let mut col = vec![T::ZERO; k * plane];
    let mut grad_col = vec![T::ZERO; k * plane];
    for n in 0..shape.batch {
        let g = grad_out.item(n);
        for (o, b) in grads.bias.iter_mut().enumerate() {
            *b += g[o * plane..(o + 1) * plane].iter().copied().sum::<T>();
        }
        lower.im2col(input.item(n), &mut col);
        // dW (out x k) += g (out x plane) * col^T (plane x k)
        T::gemm(
            out_ch,
            plane,
            k,
            T::ONE,
            g,
            (plane as isize, 1),
            &col,
            (1, plane as isize),
            T::ONE,
            grads.weights.data_mut(),
            (k as isize, 1),
        );
        // dcol (k x plane) = W^T (k x out) * g (out x plane)
        T::gemm(
            k,
            out_ch,
            plane,
            T::ONE,
            params.weights.data(),
            (1, k as isize),
            g,
            (plane as isize, 1),
            T::ZERO,
            &mut grad_col,
            (plane as isize, 1),
        );
        lower.col2im(&grad_col, grads.input.item_mut(n));
    }
    Ok(grads)
}

/// Literal 1-D dilated convolution `y[i] = sum_k x[i + r*k] * w[k]`, `k = 1..=K`,
/// evaluated only where every tap is in bounds.
pub fn dilated_conv1d_reference(x: &[f64], w: &[f64], rate: usize) -> Vec<f64> {
    let reach = rate * w.len();
    if x.len() <= reach {
        return Vec::new();
    }
    (0..x.len() - reach)
        .map(|i| {
            w.iter()
                .enumerate()
                .map(|(k, &wk)| x[i + rate * (k + 1)] * wk)
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(input: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
        let s = input.shape();
        let (kh, kw) = p.kernel();
        let (pt, pl) = p.leading_padding();
        Tensor::from_fn(
            Shape::new(s.batch, p.out_channels(), s.rows, s.cols),
            |n, o, i, j| {
                let mut acc = p.bias[o];
                for c in 0..s.channels {
                    for u in 0..kh {
                        for v in 0..kw {
                            let si = i as isize + (u * p.rate) as isize - pt as isize;
                            let sj = j as isize + (v * p.rate) as isize - pl as isize;
                            if si >= 0 && sj >= 0 && (si as usize) < s.rows && (sj as usize) < s.cols {
                                acc += p.weights.get(o, c, u, v) * input.get(n, c, si as usize, sj as usize);
                            }
                        }
                    }
                }
                acc
            },
        )
    }

    #[test]
    fn eq1_example() {
        let y = dilated_conv1d_reference(&[1., 2., 3., 4., 5., 6.], &[1., 2.], 2);
        assert_eq!(y, vec![13.0, 16.0]);
    }

    #[test]
    fn ones_kernel_center_and_corner() {
        let input = Tensor::full(Shape::new(1, 1, 5, 5), 1.0f64);
        let mut p = ConvParams::<f64>::zeros(1, 1, 3, 1);
        p.weights.data_mut().fill(1.0);
        let out = conv2d_dilated_forward(&input, &p).unwrap();
        assert_eq!(out.get(0, 0, 2, 2), 9.0);
        assert_eq!(out.get(0, 0, 0, 0), 4.0);
        assert_eq!(out.get(0, 0, 4, 4), 4.0);
        assert_eq!(out.get(0, 0, 0, 2), 6.0);
    }

    #[test]
    fn delta_kernel_is_identity() {
        for rate in 1..5 {
            let input = Tensor::from_fn(Shape::new(2, 1, 7, 6), |n, _, i, j| (n * 100 + i * 7 + j) as f64);
            let mut p = ConvParams::<f64>::zeros(1, 1, 3, rate);
            p.weights.set(0, 0, 1, 1, 1.0);
            let out = conv2d_dilated_forward(&input, &p).unwrap();
            assert_eq!(out, input);
        }
    }

    #[test]
    fn even_kernel_padding_split() {
        let p = ConvParams::<f64>::zeros(1, 1, 4, 3);
        assert_eq!(p.effective_extent(), (10, 10));
        assert_eq!(p.leading_padding(), (4, 4));
    }

    #[test]
    fn matches_naive_loop_with_even_kernels() {
        let mut seed = 7u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for (k, r) in [(4, 3), (5, 2), (3, 6), (2, 1)] {
            let input = Tensor::from_fn(Shape::new(2, 3, 9, 11), |_, _, _, _| next());
            let mut p = ConvParams::<f64>::zeros(4, 3, k, r);
            p.weights.data_mut().iter_mut().for_each(|w| *w = next());
            p.bias.iter_mut().for_each(|b| *b = next());
            let fast = conv2d_dilated_forward(&input, &p).unwrap();
            let slow = naive_conv(&input, &p);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "k={k} r={r}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let input = Tensor::<f64>::zeros(Shape::new(1, 2, 4, 4));
        let p = ConvParams::<f64>::zeros(3, 5, 3, 1);
        let err = conv2d_dilated_forward(&input, &p).unwrap_err().to_string();
        assert!(err.contains("(3, 5, 3, 3)") && err.contains("(1, 2, 4, 4)"), "{err}");
    }

    #[test]
    fn zero_rate_rejected() {
        let input = Tensor::<f64>::zeros(Shape::new(1, 1, 4, 4));
        let p = ConvParams::<f64>::zeros(1, 1, 3, 0);
        assert!(conv2d_dilated_forward(&input, &p).is_err());
    }

    #[test]
    fn backward_zero_grad_and_identity_adjoint() {
        let input = Tensor::from_fn(Shape::new(1, 1, 3, 3), |_, _, i, j| (i * 3 + j) as f64);
        let mut p = ConvParams::<f64>::zeros(1, 1, 3, 1);
        p.weights.set(0, 0, 1, 1, 1.0);
        let zero = Tensor::zeros(Shape::new(1, 1, 3, 3));
        let g = conv2d_dilated_backward(&zero, Some(&input), &p).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));

        let ones = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let g = conv2d_dilated_backward(&ones, Some(&input), &p).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 1.0));
        assert_eq!(g.bias, vec![9.0]);
    }

    #[test]
    fn backward_requires_saved_input() {
        let p = ConvParams::<f64>::zeros(1, 1, 3, 1);
        let g = Tensor::zeros(Shape::new(1, 1, 3, 3));
        assert!(matches!(
            conv2d_dilated_backward(&g, None, &p),
            Err(Error::MissingState(_))
        ));
    }
}
