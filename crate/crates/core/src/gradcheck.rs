//! Finite-difference gradient checks in 64-bit arithmetic.
//!
//! Each analytic derivative is compared with a central difference. The
//! relative error is `|a - n| / max(|a|, |n|, 1e-6)`. Coordinates where the
//! half-step and full-step differences disagree sit on a ReLU or max-pool
//! kink and are skipped; a check fails if more than a tenth are skipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::engine::{
    concat_backward, concat_channels, conv2d_dilated_backward, conv2d_dilated_forward, maxpool_same_backward,
    maxpool_same_forward, relu, relu_backward, softmax_cross_entropy, ConvParams,
};
use crate::error::Result;
use crate::models::{backward, build_with_widths, forward, init_params, Architecture, NetworkSpec, Params};
use crate::tensor::{Shape, Tensor};

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const KINK_TOL: f64 = 1e-6;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

impl LayerCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol && self.skipped * 10 <= self.checked + self.skipped
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<LayerCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.passed(tol))
    }

    pub fn extend(&mut self, other: GradcheckReport) {
        self.checks.extend(other.checks);
    }

    pub fn to_text(&self, tol: f64) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<40} checked={:<6} skipped={:<4} max_rel_error={:.3e} {}\n",
                c.name,
                c.checked,
                c.skipped,
                c.max_rel_error,
                if c.passed(tol) { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Compares `analytic[i]` with central differences of `f(i, delta)`, the
/// objective with coordinate `i` shifted by `delta`.
fn compare(name: impl Into<String>, analytic: &[f64], mut f: impl FnMut(usize, f64) -> f64) -> LayerCheck {
    let mut check = LayerCheck {
        name: name.into(),
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let full = (f(i, STEP) - f(i, -STEP)) / (2.0 * STEP);
        let half = (f(i, STEP / 2.0) - f(i, -STEP / 2.0)) / STEP;
        if (full - half).abs() > KINK_TOL * full.abs().max(1.0) {
            check.skipped += 1;
            continue;
        }
        let err = (a - full).abs() / a.abs().max(full.abs()).max(FLOOR);
        check.checked += 1;
        check.max_rel_error = check.max_rel_error.max(err);
    }
    check
}

fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.sample(StandardNormal))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn shifted(t: &Tensor<f64>, i: usize, d: f64) -> Tensor<f64> {
    let mut t = t.clone();
    t.data_mut()[i] += d;
    t
}

/// Checks one dilated convolution against the projection `sum(R * conv(x))`.
pub fn check_conv(kernel: usize, rate: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cin, cout) = (2, 3);
    let x = random_tensor(Shape::new(2, cin, 6, 6), &mut rng);
    let mut p = ConvParams::zeros(cout, cin, kernel, rate);
    p.weights = random_tensor(p.weights.shape(), &mut rng);
    p.bias = (0..cout).map(|_| rng.sample(StandardNormal)).collect();
    let r = random_tensor(Shape::new(2, cout, 6, 6), &mut rng);
    let g = conv2d_dilated_backward(&r, Some(&x), &p)?;
    let tag = format!("conv k={kernel} r={rate}");
    let obj = |x: &Tensor<f64>, p: &ConvParams<f64>| dot(&r, &conv2d_dilated_forward(x, p).expect("shapes fixed"));
    let mut report = GradcheckReport::default();
    report.checks.push(compare(format!("{tag} input"), g.input.data(), |i, d| obj(&shifted(&x, i, d), &p)));
    report.checks.push(compare(format!("{tag} weights"), g.weights.data(), |i, d| {
        let mut q = p.clone();
        q.weights.data_mut()[i] += d;
        obj(&x, &q)
    }));
    report.checks.push(compare(format!("{tag} bias"), &g.bias, |i, d| {
        let mut q = p.clone();
        q.bias[i] += d;
        obj(&x, &q)
    }));
    Ok(report)
}

pub fn check_relu(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(Shape::new(2, 3, 6, 6), &mut rng);
    let r = random_tensor(x.shape(), &mut rng);
    let g = relu_backward(&r, &x)?;
    let c = compare("relu", g.data(), |i, d| dot(&r, &relu(&shifted(&x, i, d))));
    Ok(GradcheckReport { checks: vec![c] })
}

pub fn check_pool(window: usize, seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(Shape::new(2, 3, 6, 6), &mut rng);
    let r = random_tensor(x.shape(), &mut rng);
    let (_, idx) = maxpool_same_forward(&x, window)?;
    let g = maxpool_same_backward(&r, &idx)?;
    let c = compare(format!("maxpool w={window}"), g.data(), |i, d| {
        dot(&r, &maxpool_same_forward(&shifted(&x, i, d), window).expect("odd window").0)
    });
    Ok(GradcheckReport { checks: vec![c] })
}

pub fn check_concat(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_tensor(Shape::new(2, 2, 6, 6), &mut rng);
    let b = random_tensor(Shape::new(2, 3, 6, 6), &mut rng);
    let r = random_tensor(Shape::new(2, 5, 6, 6), &mut rng);
    let parts = concat_backward(&r, &[2, 3])?;
    let obj = |a: &Tensor<f64>, b: &Tensor<f64>| dot(&r, &concat_channels(&[a, b]).expect("same extents"));
    let checks = vec![
        compare("concat first", parts[0].data(), |i, d| obj(&shifted(&a, i, d), &b)),
        compare("concat second", parts[1].data(), |i, d| obj(&a, &shifted(&b, i, d))),
    ];
    Ok(GradcheckReport { checks })
}

fn random_labels(n: usize, classes: usize, rng: &mut ChaCha8Rng) -> (Vec<u8>, Vec<bool>) {
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..classes) as u8).collect();
    let void: Vec<bool> = (0..n).map(|i| i % 7 == 3).collect();
    (labels, void)
}

pub fn check_loss(seed: u64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(Shape::new(2, 4, 6, 6), &mut rng);
    let (labels, void) = random_labels(2 * 36, 4, &mut rng);
    let out = softmax_cross_entropy(&x, &labels, &void)?;
    let c = compare("softmax cross-entropy", out.grad.data(), |i, d| {
        softmax_cross_entropy(&shifted(&x, i, d), &labels, &void)
            .expect("shapes fixed")
            .loss
    });
    Ok(GradcheckReport { checks: vec![c] })
}

/// Every kernel type, including even kernels and rates above one.
pub fn check_layers(seed: u64) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::default();
    for (k, r) in [(1, 1), (3, 1), (3, 2), (4, 3), (5, 1), (5, 2)] {
        report.extend(check_conv(k, r, seed)?);
    }
    report.extend(check_relu(seed)?);
    report.extend(check_pool(3, seed)?);
    report.extend(check_concat(seed)?);
    report.extend(check_loss(seed)?);
    Ok(report)
}

/// Small build of `arch` used for full-network checks.
pub fn tiny_network(arch: Architecture) -> Result<NetworkSpec> {
    build_with_widths(arch, 3, 3, &vec![3; arch.conv_layers()])
}

/// Checks all parameters and the input of a whole network under
/// cross-entropy on a `6 x 6` batch of two.
///
/// `corrupt_backward` scales the analytic gradient of the first layer's
/// weights by 1.05, a negative control that must fail.
pub fn check_network(spec: &NetworkSpec, seed: u64, corrupt_backward: bool) -> Result<GradcheckReport> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Params<f64> = init_params(spec, seed);
    let mut params = params;
    for c in &mut params.convs {
        for b in &mut c.bias {
            *b = 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let x = random_tensor(Shape::new(2, spec.in_channels, 6, 6), &mut rng);
    let (labels, void) = random_labels(2 * 36, spec.num_classes, &mut rng);
    let objective = |p: &Params<f64>, x: &Tensor<f64>| -> f64 {
        let logits = forward(spec, p, x, false).expect("validated").logits;
        softmax_cross_entropy(&logits, &labels, &void).expect("shapes fixed").loss
    };
    let fwd = forward(spec, &params, &x, true)?;
    let out = softmax_cross_entropy(&fwd.logits, &labels, &void)?;
    let mut grads = backward(spec, &params, fwd.trace.as_ref().expect("trace requested"), &out.grad)?;
    if corrupt_backward {
        for w in grads.params.convs[0].weights.data_mut() {
            *w *= 1.05;
        }
    }
    let name = spec.arch.name();
    let mut report = GradcheckReport::default();
    let shapes = spec.conv_shapes();
    for (l, g) in grads.params.convs.iter().enumerate() {
        let (out_c, in_c, k, r) = shapes[l];
        let tag = format!("{name} conv{} {out_c}x{in_c}x{k}x{k} r={r}", l + 1);
        report.checks.push(compare(format!("{tag} weights"), g.weights.data(), |i, d| {
            let mut p = params.clone();
            p.convs[l].weights.data_mut()[i] += d;
            objective(&p, &x)
        }));
        report.checks.push(compare(format!("{tag} bias"), &g.bias, |i, d| {
            let mut p = params.clone();
            p.convs[l].bias[i] += d;
            objective(&p, &x)
        }));
    }
    report.checks.push(compare(format!("{name} input"), grads.input.data(), |i, d| {
        objective(&params, &shifted(&x, i, d))
    }));
    Ok(report)
}
