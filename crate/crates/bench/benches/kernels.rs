use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dynscale_core::data::Normalizer;
use dynscale_core::engine::{conv2d_dilated_backward, conv2d_dilated_forward, maxpool_same_forward, ConvParams};
use dynscale_core::infer::predict_scene;
use dynscale_core::models::{build_with_widths, init_params};
use dynscale_core::synth::{generate, SynthConfig};
use dynscale_core::trainer::{train, TrainConfig};
use dynscale_core::{Architecture, PatchSizeDistribution, Shape, Tensor};

fn input(channels: usize, size: usize) -> Tensor<f32> {
    Tensor::from_fn(Shape::new(4, channels, size, size), |n, c, i, j| {
        ((n * 7 + c * 13 + i * 3 + j) % 17) as f32 / 17.0 - 0.5
    })
}

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv");
    for (k, r) in [(5, 1), (4, 3), (3, 6)] {
        let x = input(32, 32);
        let mut p = ConvParams::<f32>::zeros(32, 32, k, r);
        p.weights = Tensor::full(p.weights.shape(), 0.01);
        let y = conv2d_dilated_forward(&x, &p).unwrap();
        group.bench_with_input(BenchmarkId::new("forward", format!("k{k}r{r}")), &(), |b, _| {
            b.iter(|| conv2d_dilated_forward(black_box(&x), &p).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("backward", format!("k{k}r{r}")), &(), |b, _| {
            b.iter(|| conv2d_dilated_backward(black_box(&y), Some(&x), &p).unwrap())
        });
    }
    group.finish();
}

fn pool(c: &mut Criterion) {
    let x = input(32, 64);
    c.bench_function("maxpool/forward", |b| b.iter(|| maxpool_same_forward(black_box(&x), 3).unwrap()));
}

fn training(c: &mut Criterion) {
    let cfg = SynthConfig {
        size: 96,
        ..SynthConfig::default()
    };
    let raw = generate(&cfg, 0, 2).unwrap();
    let norm = Normalizer::fit(&raw).unwrap();
    let scenes: Vec<_> = raw.iter().map(|s| norm.apply(s).unwrap()).collect();
    let spec = build_with_widths(Architecture::Dilated6, 3, 2, &[16; 6]).unwrap();
    let params = init_params(&spec, 0);
    let mut tc = TrainConfig::new(PatchSizeDistribution::uniform_fixed(&[32]).unwrap(), 10);
    tc.batch_size = 8;
    c.bench_function("train/10_steps_dilated6_w16_p32_b8", |b| {
        b.iter(|| train(&tc, &scenes, &spec, params.clone()).unwrap())
    });
    c.bench_function("infer/scene96_tile32", |b| {
        b.iter(|| predict_scene(&spec, &params, &scenes[0], 32, 0.5).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv, pool, training
}
criterion_main!(benches);
