//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dynscale_core::data::Normalizer;
use dynscale_core::engine::{conv2d_dilated_forward, dilated_conv1d_reference, receptive_field, ConvParams};
use dynscale_core::gradcheck::{check_layers, check_network, tiny_network, GradcheckReport};
use dynscale_core::metrics::ConfusionMatrix;
use dynscale_core::models::{
    build, build_with_widths, forward, gradient_support, init_params, param_count, Params,
};
use dynscale_core::synth::{generate, SynthConfig};
use dynscale_core::trainer::{evaluate, train, TrainConfig};
use dynscale_core::{Architecture, PatchSizeDistribution, ScoreMode, ScoreTable, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut report = GradcheckReport::default();
    report.extend(check_layers(0).map_err(|e| e.to_string())?);
    for arch in Architecture::ALL {
        let spec = tiny_network(arch).map_err(|e| e.to_string())?;
        report.extend(check_network(&spec, 0, false).map_err(|e| e.to_string())?);
    }
    let worst = report.max_rel_error();
    ensure(report.passed(1e-4), || format!("max relative error {worst:.3e}\n{}", report.to_text(1e-4)))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "{} checks, max relative error {worst:.2e} < 1e-4 in {:.1?}",
        report.checks.len(),
        start.elapsed()
    ))
}

/// Direct nested-loop convolution, stride 1, zero padding leading floor((k-1)/2).
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]) -> Tensor<f64> {
    let s = x.shape();
    let ws = w.shape();
    let pad = ((ws.rows - 1) / 2) as isize;
    Tensor::from_fn(Shape::new(s.batch, ws.batch, s.rows, s.cols), |n, o, i, j| {
        let mut acc = b[o];
        for c in 0..s.channels {
            for u in 0..ws.rows {
                for v in 0..ws.cols {
                    let (ii, jj) = (i as isize + u as isize - pad, j as isize + v as isize - pad);
                    if ii >= 0 && jj >= 0 && (ii as usize) < s.rows && (jj as usize) < s.cols {
                        acc += w.get(o, c, u, v) * x.get(n, c, ii as usize, jj as usize);
                    }
                }
            }
        }
        acc
    })
}

fn dilation_fidelity() -> Outcome {
    // y[i] = sum_{k=1..2} x[i + r k] w[k] with x = 1..6, w = [1, 2], r = 2:
    // y[1] = 3 + 2*5 = 13, y[2] = 4 + 2*6 = 16
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let y = dilated_conv1d_reference(&x, &[1.0, 2.0], 2);
    ensure(y == vec![13.0, 16.0], || format!("1-D reference gave {y:?}"))?;
    let input = Tensor::from_vec(Shape::new(1, 1, 1, 6), x.to_vec()).map_err(|e| e.to_string())?;
    let mut p = ConvParams::zeros(1, 1, 1, 2);
    p.weights = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).map_err(|e| e.to_string())?;
    let out = conv2d_dilated_forward(&input, &p).map_err(|e| e.to_string())?;
    ensure(out.data()[3] == 13.0 && out.data()[4] == 16.0, || {
        format!("2-D kernel restricted to a row gave {:?}", out.data())
    })?;

    // integer-valued data keeps every sum exact, so equality is bitwise
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let k = [1, 2, 3, 4, 5][rng.random_range(0..5)];
        let (cin, cout) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let (h, w) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let mut int = || rng.random_range(-5i32..=5) as f64;
        let x = Tensor::from_fn(Shape::new(2, cin, h, w), |_, _, _, _| int());
        let mut p = ConvParams::zeros(cout, cin, k, 1);
        p.weights = Tensor::from_fn(p.weights.shape(), |_, _, _, _| int());
        p.bias = (0..cout).map(|_| int()).collect();
        let got = conv2d_dilated_forward(&x, &p).map_err(|e| e.to_string())?;
        let want = naive_conv(&x, &p.weights, &p.bias);
        ensure(got == want, || format!("case {case} (k={k}, {h}x{w}) differs from the naive oracle"))?;
    }
    Ok("1-D example y = [13, 16] reproduced; 50/50 rate-1 cases equal the naive oracle exactly".into())
}

fn resolution_preservation() -> Outcome {
    let mut checked = 0;
    for arch in Architecture::ALL {
        for size in [7usize, 25, 65, 256] {
            // full widths up to 65; 256 uses width 4 (same layer geometry) to bound memory
            let spec = if size <= 65 {
                build(arch, 4, 6)
            } else {
                build_with_widths(arch, 4, 6, &vec![4; arch.conv_layers()])
            }
            .map_err(|e| e.to_string())?;
            let params: Params<f32> = init_params(&spec, 0);
            let x = Tensor::full(Shape::new(1, 4, size, size), 0.1f32);
            let out = forward(&spec, &params, &x, false).map_err(|e| e.to_string())?.logits;
            let want = Shape::new(1, 6, size, size);
            ensure(out.shape() == want, || format!("{arch} at {size}: got {}", out.shape()))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} (architecture, size) pairs keep H x W"))
}

/// Counts parameters from the layer schedule alone.
fn enumerate_params(arch: Architecture, widths: &[usize], bands: usize, classes: usize) -> usize {
    let schedule = [5, 5, 4, 4, 3, 3, 3, 3];
    let dense = arch == Architecture::DenseDilated6;
    let mut total = 0;
    let mut prev = bands;
    let mut concat = bands;
    for (i, &w) in widths.iter().enumerate() {
        let k = schedule[i];
        let inp = if dense { concat } else { prev };
        for _out in 0..w {
            for _in in 0..inp {
                total += k * k;
            }
            total += 1;
        }
        prev = w;
        concat += w;
    }
    let inp = if dense { concat } else { prev };
    total + classes * inp + classes
}

fn parameter_budgets() -> Outcome {
    let paper: [(Architecture, f64); 4] = [
        (Architecture::Dilated6, 1.3e6),
        (Architecture::DenseDilated6, 0.8e6),
        (Architecture::Dilated6Pooling, 1.3e6),
        (Architecture::Dilated8Pooling, 2.0e6),
    ];
    let mut parts = Vec::new();
    for (arch, target) in paper {
        // four bands (IRRG + nDSM) and six classes, as for the ISPRS contest entries
        let spec = build(arch, 4, 6).map_err(|e| e.to_string())?;
        let enumerated = enumerate_params(arch, arch.default_widths(), 4, 6);
        let allocated = Params::<f32>::zeros(&spec).num_params();
        ensure(enumerated == param_count(&spec) && enumerated == allocated, || {
            format!("{arch}: enumerated {enumerated}, spec {}, allocated {allocated}", param_count(&spec))
        })?;
        let dev = (enumerated as f64 - target) / target;
        ensure(dev.abs() <= 0.15, || format!("{arch}: {enumerated} is {:+.1}% from {target}", dev * 100.0))?;
        parts.push(format!("{arch} {enumerated} ({:+.1}%)", dev * 100.0));
    }
    Ok(parts.join(", "))
}

fn receptive_fields() -> Outcome {
    let d6 = receptive_field(&build(Architecture::Dilated6, 4, 6).map_err(|e| e.to_string())?);
    ensure(d6 == 56, || format!("Dilated6 analytic RF {d6}"))?;
    let mut parts = Vec::new();
    for arch in Architecture::ALL {
        let spec = build_with_widths(arch, 2, 2, &vec![2; arch.conv_layers()]).map_err(|e| e.to_string())?;
        let analytic = receptive_field(&spec);
        let empirical = gradient_support(&spec).map_err(|e| e.to_string())?;
        ensure(empirical == (analytic, analytic), || {
            format!("{arch}: analytic {analytic}, gradient support {empirical:?}")
        })?;
        parts.push(format!("{arch} {analytic}"));
    }
    Ok(format!("analytic = gradient support: {}", parts.join(", ")))
}

fn scheduler_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let fixed = PatchSizeDistribution::uniform_fixed(&[25, 50]).map_err(|e| e.to_string())?;
    let n = 10_000;
    let f25 = (0..n).filter(|_| fixed.sample(&mut rng) == 25).count() as f64 / n as f64;
    ensure((0.47..=0.53).contains(&f25) && (0.47..=0.53).contains(&(1.0 - f25)), || {
        format!("uniform_fixed frequencies {f25:.4} / {:.4}", 1.0 - f25)
    })?;
    let multi = PatchSizeDistribution::multinomial(45, 75, &[55, 65]).map_err(|e| e.to_string())?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for _ in 0..100_000 {
        *counts.entry(multi.sample(&mut rng)).or_default() += 1;
    }
    let emph = (counts[&55] + counts[&65]) as f64 / 2.0;
    let interior: Vec<f64> = counts
        .iter()
        .filter(|(s, _)| ![55, 65].contains(*s))
        .map(|(_, &c)| c as f64)
        .collect();
    let ratio = emph / (interior.iter().sum::<f64>() / interior.len() as f64);
    ensure((1.8..=2.2).contains(&ratio), || format!("emphasized/interior ratio {ratio:.3}"))?;
    Ok(format!("uniform_fixed {f25:.4}/{:.4}; multinomial ratio {ratio:.3}", 1.0 - f25))
}

fn score_selection() -> Outcome {
    let sizes = [25, 35, 45, 55, 65];
    let means = [0.72, 0.80, 0.85, 0.79, 0.75];
    let truth = 45;
    let mut hits = 0;
    for run in 0..100 {
        let dist = PatchSizeDistribution::uniform_fixed(&sizes).map_err(|e| e.to_string())?;
        let mut table = ScoreTable::new(ScoreMode::Accuracy, &sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + run);
        for _ in 0..1000 {
            let s = dist.sample(&mut rng);
            let mu = means[sizes.iter().position(|&x| x == s).expect("candidate")];
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            table.update(s, (mu + 0.1 * noise).clamp(0.0, 1.0)).map_err(|e| e.to_string())?;
        }
        if table.best_size().map_err(|e| e.to_string())? == truth {
            hits += 1;
        }
    }
    ensure(hits >= 99, || format!("recovered the argmax in {hits}/100 runs"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let mut a = ScoreTable::new(ScoreMode::Accuracy, &sizes);
        let mut b = ScoreTable::new(ScoreMode::Accuracy, &sizes);
        let c = rng.random_range(1e-3..1e3);
        for _ in 0..40 {
            let s = sizes[rng.random_range(0..sizes.len())];
            let v: f64 = rng.random();
            a.update(s, v).map_err(|e| e.to_string())?;
            b.update(s, c * v).map_err(|e| e.to_string())?;
        }
        ensure(a.best_size().ok() == b.best_size().ok(), || format!("rescaling by {c} moved the argmax"))?;
    }
    Ok(format!("argmax recovered in {hits}/100 runs (gap 0.05); invariant under 200 rescalings"))
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let cfg = SynthConfig {
        size: 128,
        bands: 3,
        classes: 2,
        scale: 32,
        cell: 64,
        noise: 0.5,
        void_frac: 0.0,
    };
    let mut raw = generate(&cfg, 7, 5).map_err(|e| e.to_string())?;
    let held_out = raw.split_off(4);
    let norm = Normalizer::fit(&raw).map_err(|e| e.to_string())?;
    let apply = |v: &[dynscale_core::data::RasterScene]| -> Result<Vec<_>, String> {
        v.iter().map(|s| norm.apply(s).map_err(|e| e.to_string())).collect()
    };
    let (train_scenes, test_scenes) = (apply(&raw)?, apply(&held_out)?);
    let spec = build_with_widths(Architecture::Dilated6, 3, 2, &[8; 6]).map_err(|e| e.to_string())?;
    let run = |sizes: &[usize]| -> Result<_, String> {
        let mut tc = TrainConfig::new(PatchSizeDistribution::uniform_fixed(sizes).map_err(|e| e.to_string())?, 3000);
        tc.batch_size = 8;
        tc.learning_rate = 0.05;
        tc.seed = 3;
        train(&tc, &train_scenes, &spec, init_params(&spec, 1)).map_err(|e| e.to_string())
    };
    let accuracy = |params: &Params<f32>, size: usize| -> Result<f64, String> {
        evaluate(&spec, params, &test_scenes, size, 0.5)
            .map_err(|e| e.to_string())?
            .overall_accuracy
            .ok_or_else(|| "held-out scene has no labeled pixels".to_string())
    };
    let dynamic = run(&[16, 32])?;
    let best = dynamic.state.scores.best_size().map_err(|e| e.to_string())?;
    let dyn_acc = accuracy(&dynamic.state.params, best)?;
    let means = dynamic.state.scores.mean_scores();
    let mut detail = format!(
        "scores 16={:.4} 32={:.4}, best {best}, dynamic held-out {dyn_acc:.4}",
        means[&16], means[&32]
    );
    let mut failures = Vec::new();
    if best != 32 {
        failures.push(format!("best size {best}, expected 32"));
    }
    if dyn_acc < 0.95 {
        failures.push(format!("dynamic accuracy {dyn_acc:.4} < 0.95"));
    }
    for size in [16, 32] {
        let fixed = run(&[size])?;
        let acc = accuracy(&fixed.state.params, size)?;
        detail.push_str(&format!(", fixed-{size} {acc:.4}"));
        if dyn_acc < acc - 0.02 {
            failures.push(format!("dynamic {dyn_acc:.4} < fixed-{size} {acc:.4} - 0.02"));
        }
    }
    detail.push_str(&format!(" in {:.1?}", start.elapsed()));
    if let Err(e) = within(start.elapsed(), Duration::from_secs(15 * 60)) {
        failures.push(e);
    }
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..200 {
        let classes = rng.random_range(2..=6usize);
        let n = rng.random_range(20..500);
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..classes) as u8).collect();
        let preds: Vec<u8> = labels
            .iter()
            .map(|&l| if rng.random_bool(0.5) { l } else { rng.random_range(0..classes) as u8 })
            .collect();
        let void: Vec<bool> = (0..n).map(|_| rng.random_bool(0.15)).collect();
        let mut m = ConfusionMatrix::new(classes);
        m.accumulate(&labels, &preds, &void).map_err(|e| e.to_string())?;

        let idx: Vec<usize> = (0..n).filter(|&i| !void[i]).collect();
        let total = idx.len() as f64;
        let oa = idx.iter().filter(|&&i| labels[i] == preds[i]).count() as f64 / total;
        let (mut recall_sum, mut present, mut p_e) = (0.0, 0.0, 0.0);
        let mut f1 = Vec::new();
        for c in 0..classes as u8 {
            let r = idx.iter().filter(|&&i| labels[i] == c).count() as f64;
            let p = idx.iter().filter(|&&i| preds[i] == c).count() as f64;
            let tp = idx.iter().filter(|&&i| labels[i] == c && preds[i] == c).count() as f64;
            if r > 0.0 {
                recall_sum += tp / r;
                present += 1.0;
            }
            p_e += r * p / (total * total);
            f1.push((r + p > 0.0).then(|| 2.0 * tp / (r + p)));
        }
        let aa = recall_sum / present;
        let kappa = (oa - p_e) / (1.0 - p_e);
        let close = |a: Option<f64>, b: f64| a.is_some_and(|a| (a - b).abs() <= 1e-12);
        ensure(close(m.overall_accuracy(), oa), || format!("case {case}: OA"))?;
        ensure(close(m.average_accuracy(), aa), || format!("case {case}: AA"))?;
        ensure(close(m.kappa(), kappa), || format!("case {case}: kappa"))?;
        for (c, (got, want)) in m.f1_per_class().iter().zip(&f1).enumerate() {
            let ok = match (got, want) {
                (Some(g), Some(w)) => (g - w).abs() <= 1e-12,
                (None, None) => true,
                _ => false,
            };
            ensure(ok, || format!("case {case}: F1 of class {c}"))?;
        }
    }
    let worked = ConfusionMatrix::from_rows(&[vec![30, 10], vec![10, 50]]).map_err(|e| e.to_string())?;
    let k = worked.kappa().ok_or("worked kappa undefined")?;
    ensure((k - 0.5833).abs() <= 1e-4, || format!("worked kappa {k}"))?;
    Ok(format!("200 map pairs agree to 1e-12; worked kappa {k:.4}"))
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dynscale"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`dynscale {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn files_equal(a: &Path, b: &Path) -> Result<(), String> {
    let (x, y) = (fs::read(a), fs::read(b));
    match (x, y) {
        (Ok(x), Ok(y)) if x == y => Ok(()),
        (Ok(_), Ok(_)) => Err(format!("{} and {} differ", a.display(), b.display())),
        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t = tmp.path();
    run_cli(&["synth", "--out", "data", "--scenes", "3", "--size", "48", "--scale", "12", "--cell", "24"], t)?;
    let cfg = "[data]\ntrain_scenes = data/scene_000.rsrf:data/scene_000.rslb, data/scene_001.rsrf:data/scene_001.rslb\n\
               bands = 3\nclasses = 2\n[model]\nmodel = densedilated6\nwidths = 3,3,3,3,3,3\n\
               [scheduler]\ndist = uniform\nsize_range = 8..14\n[trainer]\niterations = 40\nbatch = 3\nseed = 21\n";
    fs::write(t.join("run.cfg"), cfg).map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        run_cli(&["train", "run.cfg", "--out", run], t)?;
        let ckpt = format!("{run}/checkpoint");
        run_cli(
            &[
                "predict",
                "--weights",
                &format!("{ckpt}/weights.dsw"),
                "--scores",
                &format!("{ckpt}/scores.txt"),
                "--overlap",
                "0.5",
                "--probabilities",
                "--out",
                &format!("{run}/pred"),
                "data/scene_002.rsrf",
            ],
            t,
        )?;
    }
    let compared = [
        "history.csv",
        "config.txt",
        "checkpoint/weights.dsw",
        "checkpoint/scores.txt",
        "checkpoint/rng.bin",
        "checkpoint/normalizer.txt",
        "pred/scene_002.rslb",
        "pred/scene_002.png",
        "pred/scene_002_prob.rsrf",
    ];
    for f in compared {
        files_equal(&t.join("a").join(f), &t.join("b").join(f))?;
    }
    Ok(format!("{} artifacts byte-identical across two seeded runs", compared.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient correctness", gradient_correctness),
        ("dilation fidelity", dilation_fidelity),
        ("resolution preservation", resolution_preservation),
        ("parameter budgets", parameter_budgets),
        ("receptive field", receptive_fields),
        ("scheduler statistics", scheduler_statistics),
        ("score selection", score_selection),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("metric oracles", metric_oracles),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
