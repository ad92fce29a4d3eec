//! Plain-text run configuration.
//!
//! One `key = value` per line, grouped under optional `[data]`, `[model]`,
//! `[scheduler]` and `[trainer]` headers. Lines starting with `#` are
//! comments. Relative scene paths resolve against the config file's
//! directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dynscale_core::scheduler::{PatchSizeDistribution, ScoreMode};
use dynscale_core::trainer::TrainConfig;
use dynscale_core::Architecture;

use crate::error::{CliError, CliResult};

const SECTIONS: [(&str, &[&str]); 4] = [
    ("data", &["train_scenes", "val_scenes", "bands", "classes", "normalize"]),
    ("model", &["model", "widths"]),
    ("scheduler", &["dist", "sizes", "size_range", "emphasized", "score"]),
    (
        "trainer",
        &[
            "lr",
            "weight_decay",
            "iterations",
            "decay",
            "decay_steps",
            "batch",
            "seed",
            "checkpoint_every",
            "val_every",
            "class_balance",
            "score_warmup",
            "overlap",
        ],
    ),
];

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s)
}

/// An image path with optional label path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenePaths {
    pub image: PathBuf,
    pub labels: Option<PathBuf>,
}

impl ScenePaths {
    /// Parses `image[:labels]`.
    pub fn parse(spec: &str, base: &Path) -> Self {
        let resolve = |p: &str| {
            let p = Path::new(p.trim());
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        match spec.rsplit_once(':') {
            Some((img, lab)) if !img.is_empty() && !lab.is_empty() => ScenePaths {
                image: resolve(img),
                labels: Some(resolve(lab)),
            },
            _ => ScenePaths {
                image: resolve(spec),
                labels: None,
            },
        }
    }

    fn to_text(&self) -> String {
        match &self.labels {
            Some(l) => format!("{}:{}", self.image.display(), l.display()),
            None => self.image.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistName {
    Uniform,
    UniformFixed,
    Multinomial,
}

impl DistName {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(DistName::Uniform),
            "uniform_fixed" => Some(DistName::UniformFixed),
            "multinomial" => Some(DistName::Multinomial),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            DistName::Uniform => "uniform",
            DistName::UniformFixed => "uniform_fixed",
            DistName::Multinomial => "multinomial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_scenes: Vec<ScenePaths>,
    pub val_scenes: Vec<ScenePaths>,
    pub bands: Option<usize>,
    pub classes: usize,
    pub normalize: bool,
    pub model: Architecture,
    pub widths: Option<Vec<usize>>,
    pub dist: DistName,
    pub sizes: Vec<usize>,
    pub size_range: Option<(usize, usize)>,
    pub emphasized: Vec<usize>,
    pub score: ScoreMode,
    pub lr: f64,
    pub weight_decay: f64,
    pub iterations: usize,
    pub decay: f64,
    pub decay_steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub val_every: usize,
    pub class_balance: bool,
    pub score_warmup: usize,
    pub overlap: f64,
}

fn parse_list(key: &str, v: &str) -> CliResult<Vec<usize>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::config(format!("key `{key}`: `{s}` is not a nonnegative integer")))
        })
        .collect()
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse()
        .map_err(|_| CliError::config(format!("key `{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::config(format!("key `{key}`: expected true or false, got `{v}`"))),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: cannot read config: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(base)
            .map_err(|e| CliError::config(format!("{}: cannot resolve directory: {e}", path.display())))?;
        Self::parse(&text, &base).map_err(|e| CliError::new(e.kind, format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let mut values: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = n + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(CliError::config(format!("line {lineno}: unknown section `[{name}]`")));
                }
                section = Some(SECTIONS.iter().find(|(s, _)| *s == name).expect("checked").0);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!("line {lineno}: expected `key = value`")));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(home) = section_of(key) else {
                return Err(CliError::config(format!("line {lineno}: unknown key `{key}`")));
            };
            if let Some(s) = section {
                if s != home {
                    return Err(CliError::config(format!(
                        "line {lineno}: key `{key}` belongs in [{home}], not [{s}]"
                    )));
                }
            }
            if values.insert(key, (lineno, value)).is_some() {
                return Err(CliError::config(format!("line {lineno}: duplicate key `{key}`")));
            }
        }
        let get = |k: &str| values.get(k).map(|(_, v)| *v);
        let required = |k: &str| get(k).ok_or_else(|| CliError::config(format!("missing key `{k}`")));

        let scenes = |k: &str| -> Vec<ScenePaths> {
            get(k)
                .map(|v| {
                    v.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| ScenePaths::parse(s, base))
                        .collect()
                })
                .unwrap_or_default()
        };
        let train_scenes = scenes("train_scenes");
        if train_scenes.is_empty() {
            return Err(CliError::config("key `train_scenes`: at least one `image:labels` entry required"));
        }
        if let Some(s) = train_scenes.iter().find(|s| s.labels.is_none()) {
            return Err(CliError::config(format!(
                "key `train_scenes`: `{}` has no label file (use image:labels)",
                s.image.display()
            )));
        }
        let model = match get("model") {
            Some(m) => m.parse().map_err(|_| {
                CliError::config(format!(
                    "key `model`: unknown architecture `{m}` (expected one of dilated6, densedilated6, dilated6pooling, dilated8pooling)"
                ))
            })?,
            None => Architecture::Dilated6,
        };
        let widths = get("widths").map(|v| parse_list("widths", v)).transpose()?;
        if let Some(w) = &widths {
            if w.len() != model.conv_layers() || w.contains(&0) {
                return Err(CliError::config(format!(
                    "key `widths`: {model} needs {} positive widths, got `{}`",
                    model.conv_layers(),
                    join(w)
                )));
            }
        }
        let sizes = get("sizes").map(|v| parse_list("sizes", v)).transpose()?.unwrap_or_default();
        let size_range = get("size_range")
            .map(|v| {
                let (lo, hi) = v
                    .split_once("..")
                    .ok_or_else(|| CliError::config(format!("key `size_range`: expected `lo..hi`, got `{v}`")))?;
                Ok::<_, CliError>((parse_value("size_range", lo.trim())?, parse_value("size_range", hi.trim())?))
            })
            .transpose()?;
        let emphasized = get("emphasized")
            .map(|v| parse_list("emphasized", v))
            .transpose()?
            .unwrap_or_default();
        let dist = match get("dist") {
            Some(d) => DistName::parse(d).ok_or_else(|| {
                CliError::config(format!(
                    "key `dist`: unknown distribution `{d}` (expected uniform, uniform_fixed or multinomial)"
                ))
            })?,
            None if !sizes.is_empty() => DistName::UniformFixed,
            None if !emphasized.is_empty() => DistName::Multinomial,
            None => DistName::Uniform,
        };
        let score = match get("score") {
            Some(s) => s
                .parse()
                .map_err(|_| CliError::config(format!("key `score`: expected accuracy or loss, got `{s}`")))?,
            None => ScoreMode::Accuracy,
        };
        let num = |k: &str, default: f64| get(k).map(|v| parse_value(k, v)).unwrap_or(Ok(default));
        let int = |k: &str, default: usize| get(k).map(|v| parse_value(k, v)).unwrap_or(Ok(default));
        let flag = |k: &str, default: bool| get(k).map(|v| parse_bool(k, v)).unwrap_or(Ok(default));
        let cfg = RunConfig {
            val_scenes: scenes("val_scenes"),
            train_scenes,
            bands: get("bands").map(|v| parse_value("bands", v)).transpose()?,
            classes: parse_value("classes", required("classes")?)?,
            normalize: flag("normalize", true)?,
            model,
            widths,
            dist,
            sizes,
            size_range,
            emphasized,
            score,
            lr: num("lr", 0.01)?,
            weight_decay: num("weight_decay", 0.001)?,
            iterations: int("iterations", 1000)?,
            decay: num("decay", 0.5)?,
            decay_steps: int("decay_steps", 50_000)?,
            batch: int("batch", 16)?,
            seed: get("seed").map(|v| parse_value("seed", v)).unwrap_or(Ok(0))?,
            checkpoint_every: int("checkpoint_every", 0)?,
            val_every: int("val_every", 0)?,
            class_balance: flag("class_balance", false)?,
            score_warmup: int("score_warmup", 0)?,
            overlap: num("overlap", 0.0)?,
        };
        if cfg.classes == 0 || cfg.classes > 255 {
            return Err(CliError::config(format!("key `classes`: must be in 1..=255, got {}", cfg.classes)));
        }
        cfg.distribution()?;
        cfg.train_config()?.validate().map_err(|e| CliError::config(e.to_string()))?;
        if !(0.0..=0.9).contains(&cfg.overlap) {
            return Err(CliError::config(format!("key `overlap`: must be in [0, 0.9], got {}", cfg.overlap)));
        }
        Ok(cfg)
    }

    pub fn distribution(&self) -> CliResult<PatchSizeDistribution> {
        let need_range = || {
            self.size_range
                .ok_or_else(|| CliError::config(format!("dist {} needs key `size_range`", self.dist.name())))
        };
        let d = match self.dist {
            DistName::UniformFixed => {
                if self.sizes.is_empty() {
                    return Err(CliError::config("dist uniform_fixed needs key `sizes`"));
                }
                PatchSizeDistribution::uniform_fixed(&self.sizes)
            }
            DistName::Uniform => {
                let (lo, hi) = need_range()?;
                PatchSizeDistribution::uniform_range(lo, hi)
            }
            DistName::Multinomial => {
                let (lo, hi) = need_range()?;
                PatchSizeDistribution::multinomial(lo, hi, &self.emphasized)
            }
        };
        d.map_err(|e| CliError::config(format!("scheduler: {e}")))
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let mut t = TrainConfig::new(self.distribution()?, self.iterations);
        t.learning_rate = self.lr;
        t.weight_decay = self.weight_decay;
        t.decay_factor = self.decay;
        t.decay_steps = self.decay_steps;
        t.batch_size = self.batch;
        t.score_mode = self.score;
        t.seed = self.seed;
        t.class_balance = self.class_balance;
        t.score_warmup = self.score_warmup;
        Ok(t)
    }

    /// Canonical text with every key spelled out; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let scenes = |v: &[ScenePaths]| v.iter().map(ScenePaths::to_text).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        out.push_str("[data]\n");
        out.push_str(&format!("train_scenes = {}\n", scenes(&self.train_scenes)));
        if !self.val_scenes.is_empty() {
            out.push_str(&format!("val_scenes = {}\n", scenes(&self.val_scenes)));
        }
        if let Some(b) = self.bands {
            out.push_str(&format!("bands = {b}\n"));
        }
        out.push_str(&format!("classes = {}\n", self.classes));
        out.push_str(&format!("normalize = {}\n", self.normalize));
        out.push_str("\n[model]\n");
        out.push_str(&format!("model = {}\n", self.model.name()));
        if let Some(w) = &self.widths {
            out.push_str(&format!("widths = {}\n", join(w)));
        }
        out.push_str("\n[scheduler]\n");
        out.push_str(&format!("dist = {}\n", self.dist.name()));
        if !self.sizes.is_empty() {
            out.push_str(&format!("sizes = {}\n", join(&self.sizes)));
        }
        if let Some((lo, hi)) = self.size_range {
            out.push_str(&format!("size_range = {lo}..{hi}\n"));
        }
        if !self.emphasized.is_empty() {
            out.push_str(&format!("emphasized = {}\n", join(&self.emphasized)));
        }
        out.push_str(&format!("score = {}\n", self.score));
        out.push_str("\n[trainer]\n");
        out.push_str(&format!("lr = {}\n", self.lr));
        out.push_str(&format!("weight_decay = {}\n", self.weight_decay));
        out.push_str(&format!("iterations = {}\n", self.iterations));
        out.push_str(&format!("decay = {}\n", self.decay));
        out.push_str(&format!("decay_steps = {}\n", self.decay_steps));
        out.push_str(&format!("batch = {}\n", self.batch));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("checkpoint_every = {}\n", self.checkpoint_every));
        out.push_str(&format!("val_every = {}\n", self.val_every));
        out.push_str(&format!("class_balance = {}\n", self.class_balance));
        out.push_str(&format!("score_warmup = {}\n", self.score_warmup));
        out.push_str(&format!("overlap = {}\n", self.overlap));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data]\ntrain_scenes = a.rsrf:a.rslb\nclasses = 2\n[scheduler]\nsizes = 7,14,21,28,35,42,49,56,63,70\n";

    #[test]
    fn parses_ten_candidates() {
        let c = RunConfig::parse(MINIMAL, Path::new("/d")).unwrap();
        assert_eq!(c.dist, DistName::UniformFixed);
        assert_eq!(c.distribution().unwrap().candidates().len(), 10);
        assert_eq!(c.train_scenes[0].image, Path::new("/d/a.rsrf"));
        assert_eq!(c.lr, 0.01);
        assert_eq!(c.batch, 16);
    }

    #[test]
    fn echo_roundtrips() {
        let text = "train_scenes = x:y, z:w\nclasses = 3\nmodel = DenseDilated6\nsize_range = 25..75\nemphasized = 45,55\nlr = 0.02\nseed = 8\noverlap = 0.25\n";
        let c = RunConfig::parse(text, Path::new("/d")).unwrap();
        assert_eq!(c.dist, DistName::Multinomial);
        let again = RunConfig::parse(&c.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_name_the_key() {
        let err = |t: &str| RunConfig::parse(t, Path::new(".")).unwrap_err().message;
        assert!(err(&format!("{MINIMAL}learning_rate = 1\n")).contains("`learning_rate`"));
        assert!(err(&format!("{MINIMAL}[model]\nlr = 1\n")).contains("belongs in [trainer]"));
        assert!(err("classes = 2\n").contains("train_scenes"));
        assert!(err("train_scenes = a:b\n").contains("`classes`"));
        assert!(err(&format!("{MINIMAL}model = resnet\n")).contains("`model`"));
        assert!(err(&format!("{MINIMAL}batch = many\n")).contains("`batch`"));
        assert!(err("train_scenes = a:b\nclasses = 2\n").contains("size_range"));
        assert!(err(&format!("{MINIMAL}[data]\nclasses = 3\n")).contains("duplicate"));
    }
}
