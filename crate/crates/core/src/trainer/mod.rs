//! The dynamic multi-scale training loop.
//!
//! Each step draws a patch size, cuts a batch at that size, takes one SGD
//! step, and adds the batch accuracy (or loss) to the score of the drawn
//! size. Randomness for step `t` comes from a generator seeded with the run
//! seed on stream `t`, so a run resumed from a checkpoint replays exactly.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, RNG_FILE, SCORES_FILE, WEIGHTS_FILE};

use crate::data::{PatchSampler, RasterScene};
use crate::engine::{sgd_step, softmax_cross_entropy};
use crate::error::{Error, Result};
use crate::infer::predict_scene;
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::models::{backward, forward, NetworkSpec, Params};
use crate::scheduler::{PatchSizeDistribution, ScoreMode, ScoreTable};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub iterations: usize,
    /// Multiplier applied every `decay_steps` steps.
    pub decay_factor: f64,
    pub decay_steps: usize,
    pub batch_size: usize,
    pub distribution: PatchSizeDistribution,
    pub score_mode: ScoreMode,
    pub seed: u64,
    /// Center patches on uniformly drawn classes instead of uniform corners.
    pub class_balance: bool,
    /// Steps before this one do not update the score table.
    pub score_warmup: usize,
}

impl TrainConfig {
    /// Learning rate 0.01, weight decay 0.001, halving every 50 000 steps,
    /// batch size 16, accuracy scoring.
    pub fn new(distribution: PatchSizeDistribution, iterations: usize) -> Self {
        TrainConfig {
            learning_rate: 0.01,
            weight_decay: 0.001,
            iterations,
            decay_factor: 0.5,
            decay_steps: 50_000,
            batch_size: 16,
            distribution,
            score_mode: ScoreMode::Accuracy,
            seed: 0,
            class_balance: false,
            score_warmup: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay factor must be in (0, 1]");
        }
        if self.decay_steps == 0 {
            return bad("decay steps must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and nonnegative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be finite and nonnegative");
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        lr_at(self, step)
    }
}

/// Staircase decay: `base * factor^floor(step / decay_steps)`.
pub fn lr_at(config: &TrainConfig, step: usize) -> f64 {
    config.learning_rate * config.decay_factor.powi((step / config.decay_steps.max(1)) as i32)
}

/// Everything a run needs to continue: parameters, scores and position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub spec: NetworkSpec,
    pub params: Params<f32>,
    pub scores: ScoreTable,
    /// Number of completed steps.
    pub step: usize,
    pub seed: u64,
}

impl TrainState {
    pub fn new(spec: NetworkSpec, params: Params<f32>, config: &TrainConfig) -> Self {
        TrainState {
            scores: ScoreTable::new(config.score_mode, config.distribution.candidates()),
            spec,
            params,
            step: 0,
            seed: config.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub step: usize,
    pub size: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
}

pub const HISTORY_HEADER: &str = "step,size,loss,accuracy,lr";

impl HistoryRecord {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.step, self.size, self.loss, self.accuracy, self.lr)
    }
}

pub fn history_csv(records: &[HistoryRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Called after every completed step, in order.
pub trait TrainObserver {
    fn on_step(&mut self, state: &TrainState, record: &HistoryRecord) -> Result<()>;
}

impl TrainObserver for () {
    fn on_step(&mut self, _: &TrainState, _: &HistoryRecord) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&TrainState, &HistoryRecord) -> Result<()>> TrainObserver for F {
    fn on_step(&mut self, state: &TrainState, record: &HistoryRecord) -> Result<()> {
        self(state, record)
    }
}

/// Generator for step `step` of a run seeded with `seed`.
pub fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

fn check_scenes(spec: &NetworkSpec, scenes: &[RasterScene]) -> Result<()> {
    if !scenes.iter().any(RasterScene::has_labels) {
        return Err(Error::InvalidArgument(
            "training needs at least one scene with non-void labels".into(),
        ));
    }
    for s in scenes {
        if s.num_bands() != spec.in_channels {
            return Err(Error::shape("scene bands vs network input", spec.in_channels, s.num_bands()));
        }
        s.check_labels(spec.num_classes)?;
    }
    Ok(())
}

/// Trains from `state.step` up to `config.iterations`.
///
/// On error `state` holds the last completed step; a non-finite loss is
/// detected before the update and aborts with [`Error::Diverged`].
pub fn train_from(
    config: &TrainConfig,
    scenes: &[RasterScene],
    state: &mut TrainState,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<HistoryRecord>> {
    config.validate()?;
    let mut history = Vec::new();
    if state.step >= config.iterations {
        return Ok(history);
    }
    check_scenes(&state.spec, scenes)?;
    let mut sampler = PatchSampler::new(scenes)?;
    if config.class_balance {
        sampler = sampler.class_balanced();
    }
    while state.step < config.iterations {
        let record = train_step(config, &sampler, state)?;
        observer.on_step(state, &record)?;
        history.push(record);
    }
    Ok(history)
}

fn train_step(config: &TrainConfig, sampler: &PatchSampler<'_>, state: &mut TrainState) -> Result<HistoryRecord> {
    let step = state.step;
    let mut rng = step_rng(state.seed, step);
    let size = config.distribution.sample(&mut rng);
    let batch = sampler.extract(size, config.batch_size, &mut rng)?;
    let fwd = forward(&state.spec, &state.params, &batch.inputs, true)?;
    let out = softmax_cross_entropy(&fwd.logits, &batch.labels, &batch.void_mask)?;
    if !out.loss.is_finite() {
        return Err(Error::Diverged { step });
    }
    let trace = fwd.trace.expect("trace requested");
    let grads = backward(&state.spec, &state.params, &trace, &out.grad)?;
    let lr = lr_at(config, step);
    for (p, g) in state.params.convs.iter_mut().zip(&grads.params.convs) {
        sgd_step(p, g, lr as f32, config.weight_decay as f32)?;
    }
    let loss = out.loss as f64;
    if !out.all_void() && step >= config.score_warmup {
        let stat = match config.score_mode {
            ScoreMode::Accuracy => out.accuracy,
            ScoreMode::Loss => loss,
        };
        state.scores.update(size, stat)?;
    }
    state.step += 1;
    Ok(HistoryRecord {
        step,
        size,
        loss,
        accuracy: out.accuracy,
        lr,
    })
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub history: Vec<HistoryRecord>,
}

/// Runs a full training session from `params`.
pub fn train(
    config: &TrainConfig,
    scenes: &[RasterScene],
    spec: &NetworkSpec,
    params: Params<f32>,
) -> Result<TrainOutcome> {
    let mut state = TrainState::new(spec.clone(), params, config);
    let history = train_from(config, scenes, &mut state, &mut ())?;
    Ok(TrainOutcome { state, history })
}

/// Predicts every scene at `size` and scores the non-void pixels.
pub fn evaluate(
    spec: &NetworkSpec,
    params: &Params<f32>,
    scenes: &[RasterScene],
    size: usize,
    overlap: f64,
) -> Result<MetricsReport> {
    let mut matrix = ConfusionMatrix::new(spec.num_classes);
    for scene in scenes {
        if !scene.has_labels() {
            continue;
        }
        let pred = predict_scene(spec, params, scene, size, overlap)?;
        matrix.accumulate(&scene.labels, &pred.classes, &scene.void_mask)?;
    }
    Ok(matrix.report())
}
