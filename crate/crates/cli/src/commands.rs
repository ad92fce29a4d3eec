//! Subcommand implementations, callable without a process boundary.

use std::fs;
use std::path::{Path, PathBuf};

use dynscale_core::data::{load_raster, load_scene, save_rsrf, save_rslb, Normalizer, RasterScene};
use dynscale_core::gradcheck::{check_layers, check_network, tiny_network, GradcheckReport, DEFAULT_TOLERANCE};
use dynscale_core::infer::{predict_scene, save_map_png, Palette};
use dynscale_core::metrics::{ConfusionMatrix, MetricsReport};
use dynscale_core::models::{build, build_with_widths, init_params, load_params, NetworkSpec};
use dynscale_core::synth::{generate_scene, manifest, SynthConfig};
use dynscale_core::trainer::{
    evaluate, load_checkpoint, save_checkpoint, train_from, HistoryRecord, TrainState, HISTORY_HEADER,
};
use dynscale_core::{Architecture, Error, Params, ScoreTable};

use crate::config::{RunConfig, ScenePaths};
use crate::error::{CliError, CliResult};

pub const CONFIG_ECHO: &str = "config.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const NORMALIZER_FILE: &str = "normalizer.txt";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_scenes(paths: &[ScenePaths]) -> CliResult<Vec<RasterScene>> {
    paths
        .iter()
        .map(|p| load_scene(&p.image, p.labels.as_deref()).map_err(CliError::from))
        .collect()
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub steps: usize,
    pub best_size: Option<usize>,
}

fn network_for(cfg: &RunConfig, bands: usize) -> CliResult<NetworkSpec> {
    let spec = match &cfg.widths {
        Some(w) => build_with_widths(cfg.model, bands, cfg.classes, w),
        None => build(cfg.model, bands, cfg.classes),
    };
    spec.map_err(|e| CliError::config(e.to_string()))
}

fn read_history(path: &Path, before: usize) -> CliResult<Vec<String>> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(Vec::new());
    };
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .is_some_and(|s| s < before)
        })
        .map(str::to_string)
        .collect())
}

fn write_history(path: &Path, old: &[String], new: &[HistoryRecord]) -> CliResult<()> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for l in old {
        out.push_str(l);
        out.push('\n');
    }
    for r in new {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    write_file(path, out)
}

/// Trains per `config_path` into `run_dir`; `resume` continues from the
/// run's checkpoint when one exists.
pub fn cmd_train(config_path: &Path, run_dir: &Path, resume: bool) -> CliResult<TrainSummary> {
    let cfg = RunConfig::load(config_path)?;
    let raw_train = load_scenes(&cfg.train_scenes)?;
    let raw_val = load_scenes(&cfg.val_scenes)?;
    let bands = raw_train[0].num_bands();
    if let Some(b) = cfg.bands {
        if let Some(s) = raw_train.iter().chain(&raw_val).find(|s| s.num_bands() != b) {
            return Err(CliError::data(format!(
                "scene `{}` has {} bands but config says bands = {b}",
                s.id,
                s.num_bands()
            )));
        }
    }
    for s in raw_train.iter().chain(&raw_val) {
        s.check_labels(cfg.classes)?;
    }
    let normalizer = if cfg.normalize {
        Normalizer::fit(&raw_train)?
    } else {
        Normalizer {
            mean: vec![0.0; bands],
            std: vec![1.0; bands],
        }
    };
    let norm = |v: &[RasterScene]| -> CliResult<Vec<RasterScene>> {
        v.iter().map(|s| normalizer.apply(s).map_err(CliError::from)).collect()
    };
    let (train_scenes, val_scenes) = (norm(&raw_train)?, norm(&raw_val)?);
    let spec = network_for(&cfg, bands)?;
    let tc = cfg.train_config()?;

    create_dir(run_dir)?;
    write_file(&run_dir.join(CONFIG_ECHO), cfg.to_text())?;
    normalizer.save(run_dir.join(NORMALIZER_FILE))?;
    let ckpt = run_dir.join(CHECKPOINT_DIR);
    let mut state = if resume && ckpt.join(dynscale_core::trainer::RNG_FILE).exists() {
        let s = load_checkpoint(&ckpt)?;
        if s.spec != spec || s.seed != cfg.seed {
            return Err(CliError::config(format!(
                "{}: checkpoint was written by a different model or seed",
                ckpt.display()
            )));
        }
        s
    } else {
        TrainState::new(spec.clone(), init_params(&spec, cfg.seed), &tc)
    };
    let old_history = read_history(&run_dir.join(HISTORY_FILE), state.step)?;
    let save = |state: &TrainState| -> CliResult<()> {
        save_checkpoint(&ckpt, state)?;
        normalizer.save(ckpt.join(NORMALIZER_FILE))?;
        Ok(())
    };
    if state.step == 0 {
        save(&state)?;
    }

    let mut validation = String::new();
    if !val_scenes.is_empty() && cfg.val_every > 0 {
        validation.push_str(&format!("step,{}\n", MetricsReport::csv_header(cfg.classes)));
    }
    let mut history: Vec<HistoryRecord> = Vec::new();
    let mut observer = |state: &TrainState, record: &HistoryRecord| -> dynscale_core::Result<()> {
        history.push(*record);
        if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 {
            save_checkpoint(&ckpt, state)?;
        }
        if cfg.val_every > 0 && !val_scenes.is_empty() && state.step % cfg.val_every == 0 {
            let size = state
                .scores
                .best_size()
                .unwrap_or_else(|_| tc.distribution.candidates()[0]);
            let report = evaluate(&state.spec, &state.params, &val_scenes, size, cfg.overlap)?;
            let line = format!("{},{}\n", state.step, report.csv_row(&format!("size={size}")));
            eprint!("validation step {}: {}", state.step, line);
            validation.push_str(&line);
        }
        Ok(())
    };
    let result = train_from(&tc, &train_scenes, &mut state, &mut observer);
    write_history(&run_dir.join(HISTORY_FILE), &old_history, &history)?;
    if !validation.is_empty() {
        write_file(&run_dir.join(VALIDATION_FILE), &validation)?;
    }
    match result {
        Ok(_) => {}
        Err(Error::Diverged { step }) => {
            return Err(CliError::numeric(format!(
                "non-finite loss at step {step}; last good checkpoint kept in {}",
                ckpt.display()
            )))
        }
        Err(e) => return Err(e.into()),
    }
    save(&state)?;
    Ok(TrainSummary {
        run_dir: run_dir.to_path_buf(),
        steps: state.step,
        best_size: state.scores.best_size().ok(),
    })
}

/// Loads weights and the normalizer stored next to them, unless one is given.
fn load_model(weights: &Path, normalizer: Option<&Path>) -> CliResult<(NetworkSpec, Params<f32>, Option<Normalizer>)> {
    let (spec, params) = load_params(weights)?;
    let norm = match normalizer {
        Some(p) => Some(Normalizer::load(p)?),
        None => {
            let sibling = weights.parent().unwrap_or(Path::new(".")).join(NORMALIZER_FILE);
            if sibling.exists() {
                Some(Normalizer::load(sibling)?)
            } else {
                None
            }
        }
    };
    if let Some(n) = &norm {
        if n.num_bands() != spec.in_channels {
            return Err(CliError::data(format!(
                "normalizer has {} bands but the network expects {}",
                n.num_bands(),
                spec.in_channels
            )));
        }
    }
    Ok((spec, params, norm))
}

fn prepare(scene: RasterScene, spec: &NetworkSpec, norm: Option<&Normalizer>) -> CliResult<RasterScene> {
    if scene.num_bands() != spec.in_channels {
        return Err(CliError::data(format!(
            "scene `{}` has {} bands but the network expects {}",
            scene.id,
            scene.num_bands(),
            spec.in_channels
        )));
    }
    match norm {
        Some(n) => Ok(n.apply(&scene)?),
        None => Ok(scene),
    }
}

/// Patch size from an explicit override or the best entry of a score table.
pub fn resolve_size(size: Option<usize>, scores: Option<&Path>) -> CliResult<usize> {
    match (size, scores) {
        (Some(s), _) => Ok(s),
        (None, Some(p)) => Ok(ScoreTable::load(p)?.best_size()?),
        (None, None) => Err(CliError::config("no patch size: pass --size or --scores")),
    }
}

fn palette_for(name: Option<&str>, classes: usize) -> CliResult<Palette> {
    let name = name.unwrap_or(match classes {
        2 => "coffee",
        6 => "isprs",
        _ => "distinct",
    });
    Ok(Palette::by_name(name, classes)?)
}

#[derive(Debug, Clone, Default)]
pub struct PredictArgs {
    pub weights: PathBuf,
    pub scores: Option<PathBuf>,
    pub size: Option<usize>,
    pub images: Vec<PathBuf>,
    pub out: PathBuf,
    pub overlap: f64,
    pub palette: Option<String>,
    pub normalizer: Option<PathBuf>,
    pub probabilities: bool,
}

/// Writes `<stem>.rslb` and `<stem>.png` (and `<stem>_prob.rsrf`) per image.
pub fn cmd_predict(args: &PredictArgs) -> CliResult<Vec<PathBuf>> {
    let size = resolve_size(args.size, args.scores.as_deref())?;
    let (spec, params, norm) = load_model(&args.weights, args.normalizer.as_deref())?;
    let palette = palette_for(args.palette.as_deref(), spec.num_classes)?;
    create_dir(&args.out)?;
    let mut written = Vec::new();
    for image in &args.images {
        let bands = load_raster(image)?;
        let stem = image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into());
        let scene = prepare(RasterScene::unlabeled(&stem, bands)?, &spec, norm.as_ref())?;
        let pred = predict_scene(&spec, &params, &scene, size, args.overlap)?;
        let map = args.out.join(format!("{stem}.rslb"));
        save_rslb(&map, pred.width, pred.height, &pred.classes)?;
        let png = args.out.join(format!("{stem}.png"));
        save_map_png(&png, &pred.classes, pred.width, pred.height, &palette)?;
        written.push(map);
        written.push(png);
        if args.probabilities {
            let prob = args.out.join(format!("{stem}_prob.rsrf"));
            save_rsrf(&prob, &pred.probabilities)?;
            written.push(prob);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub weights: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub size: Option<usize>,
    pub sweep: bool,
    pub sizes: Vec<usize>,
    pub scenes: Vec<ScenePaths>,
    pub predicted: Vec<PathBuf>,
    pub labels: Vec<PathBuf>,
    pub classes: Option<usize>,
    pub overlap: f64,
    pub normalizer: Option<PathBuf>,
}

/// Returns a CSV metrics report: one row per evaluated size, or a single
/// `maps` row when comparing label maps directly.
pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<String> {
    if !args.predicted.is_empty() || !args.labels.is_empty() {
        return evaluate_maps(args);
    }
    let weights = args
        .weights
        .as_deref()
        .ok_or_else(|| CliError::config("pass --weights with --scene, or --predicted with --labels"))?;
    if args.scenes.is_empty() {
        return Err(CliError::config("no scenes: pass --scene image:labels"));
    }
    if let Some(s) = args.scenes.iter().find(|s| s.labels.is_none()) {
        return Err(CliError::config(format!("scene `{}` has no label file", s.image.display())));
    }
    let (spec, params, norm) = load_model(weights, args.normalizer.as_deref())?;
    let scenes = load_scenes(&args.scenes)?
        .into_iter()
        .map(|s| {
            s.check_labels(spec.num_classes)?;
            prepare(s, &spec, norm.as_ref())
        })
        .collect::<CliResult<Vec<_>>>()?;
    let sizes = if args.sweep {
        if !args.sizes.is_empty() {
            args.sizes.clone()
        } else if let Some(p) = &args.scores {
            ScoreTable::load(p)?.entries().keys().copied().collect()
        } else {
            return Err(CliError::config("--sweep needs --sizes or --scores"));
        }
    } else {
        vec![resolve_size(args.size, args.scores.as_deref())?]
    };
    let mut out = MetricsReport::csv_header(spec.num_classes);
    out.push('\n');
    for size in sizes {
        let report = evaluate(&spec, &params, &scenes, size, args.overlap)?;
        out.push_str(&report.csv_row(&format!("size={size}")));
        out.push('\n');
    }
    Ok(out)
}

fn evaluate_maps(args: &EvaluateArgs) -> CliResult<String> {
    if args.predicted.len() != args.labels.len() || args.predicted.is_empty() {
        return Err(CliError::config(format!(
            "--predicted and --labels must pair up ({} vs {})",
            args.predicted.len(),
            args.labels.len()
        )));
    }
    let mut pairs = Vec::new();
    let mut classes = args.classes.unwrap_or(0);
    for (p, l) in args.predicted.iter().zip(&args.labels) {
        let (pw, ph, pred) = dynscale_core::data::load_labels(p)?;
        let (lw, lh, lab) = dynscale_core::data::load_labels(l)?;
        if (pw, ph) != (lw, lh) {
            return Err(CliError::data(format!(
                "{} is {pw}x{ph} but {} is {lw}x{lh}",
                p.display(),
                l.display()
            )));
        }
        if args.classes.is_none() {
            let max = pred
                .iter()
                .chain(&lab)
                .filter(|&&c| c != dynscale_core::data::VOID)
                .max()
                .copied();
            classes = classes.max(max.map_or(0, |m| m as usize + 1));
        }
        pairs.push((pred, lab));
    }
    let mut matrix = ConfusionMatrix::new(classes.max(1));
    for (pred, lab) in &pairs {
        let void: Vec<bool> = lab.iter().map(|&c| c == dynscale_core::data::VOID).collect();
        if let Some(&bad) = pred
            .iter()
            .chain(lab.iter())
            .find(|&&c| c != dynscale_core::data::VOID && c as usize >= matrix.classes())
        {
            return Err(CliError::data(format!("class {bad} outside 0..{}", matrix.classes())));
        }
        let pred: Vec<u8> = pred
            .iter()
            .zip(&void)
            .map(|(&p, &v)| if v { 0 } else { p })
            .collect();
        matrix.accumulate(lab, &pred, &void)?;
    }
    let mut out = MetricsReport::csv_header(matrix.classes());
    out.push('\n');
    out.push_str(&matrix.report().csv_row("maps"));
    out.push('\n');
    Ok(out)
}

/// Runs every layer check and a whole-network check per architecture.
pub fn cmd_gradcheck(arch: Option<Architecture>, seed: u64, corrupt_backward: bool) -> CliResult<(String, bool)> {
    let mut report = GradcheckReport::default();
    report.extend(check_layers(seed)?);
    let archs = match arch {
        Some(a) => vec![a],
        None => Architecture::ALL.to_vec(),
    };
    for a in archs {
        report.extend(check_network(&tiny_network(a)?, seed, corrupt_backward)?);
    }
    let passed = report.passed(DEFAULT_TOLERANCE);
    let mut text = report.to_text(DEFAULT_TOLERANCE);
    text.push_str(&format!(
        "result: {} (max relative error {:.3e}, tolerance {:.0e})\n",
        if passed { "pass" } else { "fail" },
        report.max_rel_error(),
        DEFAULT_TOLERANCE
    ));
    Ok((text, passed))
}

/// Writes `scene_NNN.rsrf`/`.rslb` pairs, `manifest.txt` and an example
/// training config that holds out the last scene for validation.
pub fn cmd_synth(out: &Path, cfg: &SynthConfig, seed: u64, count: usize) -> CliResult<PathBuf> {
    if count == 0 {
        return Err(CliError::config("--scenes must be >= 1"));
    }
    cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
    create_dir(out)?;
    let mut files = Vec::new();
    for i in 0..count {
        let scene = generate_scene(cfg, seed, i)?;
        let (img, lab) = (format!("scene_{i:03}.rsrf"), format!("scene_{i:03}.rslb"));
        save_rsrf(out.join(&img), &scene.bands)?;
        save_rslb(out.join(&lab), scene.width(), scene.height(), &scene.labels)?;
        files.push((img, lab));
    }
    let path = out.join("manifest.txt");
    write_file(&path, manifest(cfg, seed, &files))?;
    let pair = |(i, l): &(String, String)| format!("{i}:{l}");
    let split = if count > 1 { count - 1 } else { 1 };
    let mut example = String::from("[data]\n");
    example.push_str(&format!(
        "train_scenes = {}\n",
        files[..split].iter().map(pair).collect::<Vec<_>>().join(", ")
    ));
    if count > 1 {
        example.push_str(&format!("val_scenes = {}\n", pair(&files[count - 1])));
    }
    example.push_str(&format!("bands = {}\nclasses = {}\n", cfg.bands, cfg.classes));
    let small = (cfg.scale / 2).max(4);
    example.push_str(&format!(
        "\n[model]\nmodel = dilated6\nwidths = 8,8,8,8,8,8\n\n[scheduler]\ndist = uniform_fixed\nsizes = {small},{}\nscore = accuracy\n",
        cfg.scale
    ));
    example.push_str("\n[trainer]\nlr = 0.05\niterations = 3000\nbatch = 8\nseed = 0\ncheckpoint_every = 500\nval_every = 1000\noverlap = 0.5\n");
    write_file(&out.join("example.cfg"), example)?;
    Ok(path)
}
