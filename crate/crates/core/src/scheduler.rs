//! Patch-size sampling and the per-size score table.
//!
//! Every training batch draws a size from a [`PatchSizeDistribution`], and
//! the batch statistic (accuracy or loss) is accumulated for that size in a
//! [`ScoreTable`]. At prediction time the size with the best mean score is
//! used.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DistributionKind {
    /// Every integer in `[lo, hi]` with equal probability.
    UniformRange { lo: usize, hi: usize },
    /// Equal probability over an explicit set.
    UniformFixed { sizes: Vec<usize> },
    /// Every integer in `[lo, hi]`, with `emphasized` sizes at twice the weight.
    Multinomial {
        lo: usize,
        hi: usize,
        emphasized: Vec<usize>,
    },
}

/// A normalized distribution over candidate patch sizes.
#[derive(Debug, Clone)]
pub struct PatchSizeDistribution {
    kind: DistributionKind,
    candidates: Vec<usize>,
    probabilities: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl PatchSizeDistribution {
    pub fn new(kind: DistributionKind) -> Result<Self> {
        let (candidates, weights): (Vec<usize>, Vec<f64>) = match &kind {
            DistributionKind::UniformRange { lo, hi } => {
                check_range(*lo, *hi)?;
                (*lo..=*hi).map(|s| (s, 1.0)).unzip()
            }
            DistributionKind::UniformFixed { sizes } => {
                let mut sizes = sizes.clone();
                sizes.sort_unstable();
                sizes.dedup();
                sizes.into_iter().map(|s| (s, 1.0)).unzip()
            }
            DistributionKind::Multinomial { lo, hi, emphasized } => {
                check_range(*lo, *hi)?;
                if let Some(e) = emphasized.iter().find(|e| !(*lo..=*hi).contains(*e)) {
                    return Err(Error::InvalidArgument(format!(
                        "emphasized size {e} outside range [{lo}, {hi}]"
                    )));
                }
                (*lo..=*hi)
                    .map(|s| (s, if emphasized.contains(&s) { 2.0 } else { 1.0 }))
                    .unzip()
            }
        };
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("patch size distribution has no candidates".into()));
        }
        if candidates.contains(&0) {
            return Err(Error::InvalidArgument("patch sizes must be >= 1".into()));
        }
        let total: f64 = weights.iter().sum();
        let probabilities = weights.iter().map(|w| w / total).collect();
        let sampler = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("invalid size weights: {e}")))?;
        Ok(PatchSizeDistribution {
            kind,
            candidates,
            probabilities,
            sampler,
        })
    }

    pub fn uniform_range(lo: usize, hi: usize) -> Result<Self> {
        Self::new(DistributionKind::UniformRange { lo, hi })
    }

    pub fn uniform_fixed(sizes: &[usize]) -> Result<Self> {
        Self::new(DistributionKind::UniformFixed { sizes: sizes.to_vec() })
    }

    pub fn multinomial(lo: usize, hi: usize, emphasized: &[usize]) -> Result<Self> {
        Self::new(DistributionKind::Multinomial {
            lo,
            hi,
            emphasized: emphasized.to_vec(),
        })
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    /// Sorted candidate sizes.
    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    /// Probability of each candidate, aligned with [`Self::candidates`].
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.candidates[self.sampler.sample(rng)]
    }
}

fn check_range(lo: usize, hi: usize) -> Result<()> {
    if lo == 0 || lo > hi {
        return Err(Error::InvalidArgument(format!("invalid size range [{lo}, {hi}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Higher mean batch accuracy wins.
    Accuracy,
    /// Lower mean batch loss wins.
    Loss,
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMode::Accuracy => "accuracy",
            ScoreMode::Loss => "loss",
        })
    }
}

impl FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "accuracy" => Ok(ScoreMode::Accuracy),
            "loss" => Ok(ScoreMode::Loss),
            other => Err(Error::InvalidArgument(format!("unknown score mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreEntry {
    pub cumulative: f64,
    pub count: u64,
}

/// Cumulative batch statistic and selection count per candidate size.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    mode: ScoreMode,
    entries: BTreeMap<usize, ScoreEntry>,
}

impl ScoreTable {
    pub fn new(mode: ScoreMode, candidates: &[usize]) -> Self {
        ScoreTable {
            mode,
            entries: candidates.iter().map(|&s| (s, ScoreEntry::default())).collect(),
        }
    }

    pub fn mode(&self) -> ScoreMode {
        self.mode
    }

    pub fn entries(&self) -> &BTreeMap<usize, ScoreEntry> {
        &self.entries
    }

    pub fn entry(&self, size: usize) -> Option<ScoreEntry> {
        self.entries.get(&size).copied()
    }

    pub fn total_updates(&self) -> u64 {
        self.entries.values().map(|e| e.count).sum()
    }

    /// Adds `batch_stat` to the entry of `size`.
    pub fn update(&mut self, size: usize, batch_stat: f64) -> Result<()> {
        let e = self.entries.get_mut(&size).ok_or(Error::UnknownSize(size))?;
        e.cumulative += batch_stat;
        e.count += 1;
        Ok(())
    }

    /// Mean statistic of every size selected at least once.
    pub fn mean_scores(&self) -> BTreeMap<usize, f64> {
        self.entries
            .iter()
            .filter(|(_, e)| e.count > 0)
            .map(|(&s, e)| (s, e.cumulative / e.count as f64))
            .collect()
    }

    /// Size with the highest (accuracy) or lowest (loss) mean; ties go to
    /// the smallest size.
    pub fn best_size(&self) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (size, mean) in self.mean_scores() {
            let better = match best {
                None => true,
                Some((_, b)) => match self.mode {
                    ScoreMode::Accuracy => mean > b,
                    ScoreMode::Loss => mean < b,
                },
            };
            if better {
                best = Some((size, mean));
            }
        }
        best.map(|(s, _)| s).ok_or(Error::EmptyScores)
    }

    /// One line per size: `size cumulative count mode`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (size, e) in &self.entries {
            out.push_str(&format!("{size} {} {} {}\n", e.cumulative, e.count, self.mode));
        }
        out
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut mode = None;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| format!("line {}: {m}", lineno + 1);
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [size, cum, count, m] = fields[..] else {
                return Err(err("expected `size cumulative count mode`"));
            };
            let size: usize = size.parse().map_err(|_| err("bad size"))?;
            let cumulative: f64 = cum.parse().map_err(|_| err("bad cumulative score"))?;
            let count: u64 = count.parse().map_err(|_| err("bad count"))?;
            let m: ScoreMode = m.parse().map_err(|e: Error| err(&e.to_string()))?;
            if *mode.get_or_insert(m) != m {
                return Err(err("mixed score modes"));
            }
            if entries.insert(size, ScoreEntry { cumulative, count }).is_some() {
                return Err(err("duplicate size"));
            }
        }
        Ok(ScoreTable {
            mode: mode.ok_or("empty score table")?,
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|m| Error::format(path, m))
    }
}
