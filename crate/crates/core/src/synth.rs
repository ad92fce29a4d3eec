//! Synthetic streak-texture scenes with known label maps.
//!
//! Every class is white noise averaged along a class-specific direction over
//! `scale` pixels (horizontal, vertical, and the two diagonals), plus
//! independent per-pixel noise. A window shorter than about `scale` pixels
//! sees only part of a streak, so `scale` sets the patch size at which the
//! classes become reliably separable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{RasterScene, VOID};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Streak directions as (row step, column step), one per class.
const DIRECTIONS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

pub const MAX_CLASSES: usize = DIRECTIONS.len();

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Scenes are `size x size`.
    pub size: usize,
    pub bands: usize,
    pub classes: usize,
    /// Streak length in pixels.
    pub scale: usize,
    /// Side of the square label cells.
    pub cell: usize,
    /// Standard deviation of the per-pixel noise added on top of the streaks.
    pub noise: f64,
    /// Probability that a pixel is marked void.
    pub void_frac: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            size: 128,
            bands: 3,
            classes: 2,
            scale: 24,
            cell: 64,
            noise: 0.5,
            void_frac: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.size == 0 || self.bands == 0 || self.scale == 0 || self.cell == 0 {
            return bad("size, bands, scale and cell must be >= 1".into());
        }
        if !(2..=MAX_CLASSES).contains(&self.classes) {
            return bad(format!("classes must be in 2..={MAX_CLASSES}, got {}", self.classes));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.void_frac) {
            return bad(format!("void fraction must be in [0, 1), got {}", self.void_frac));
        }
        Ok(())
    }

    /// Smallest patch side that spans a whole streak.
    pub fn min_separable_size(&self) -> usize {
        self.scale
    }
}

/// Label map: a checkerboard for two classes, otherwise a class per cell.
fn label_map(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = cfg.size;
    let off_r = rng.random_range(0..cfg.cell);
    let off_c = rng.random_range(0..cfg.cell);
    let cells = (n + 2 * cfg.cell) / cfg.cell;
    let table: Vec<u8> = (0..cells * cells)
        .map(|i| {
            if cfg.classes == 2 {
                ((i / cells + i % cells) % 2) as u8
            } else {
                rng.random_range(0..cfg.classes) as u8
            }
        })
        .collect();
    let mut labels = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let cr = (r + off_r) / cfg.cell;
            let cc = (c + off_c) / cfg.cell;
            labels.push(table[cr * cells + cc]);
        }
    }
    labels
}

/// Unit-variance noise averaged over `len` pixels along `dir`.
fn streak_field(n: usize, len: usize, dir: (isize, isize), rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pad = len;
    let side = n + 2 * pad;
    let white: Vec<f64> = (0..side * side).map(|_| rng.sample(StandardNormal)).collect();
    let norm = 1.0 / (len as f64).sqrt();
    let half = (len / 2) as isize;
    let mut out = Vec::with_capacity(n * n);
    for r in 0..n as isize {
        for c in 0..n as isize {
            let mut acc = 0.0;
            for t in 0..len as isize {
                let rr = (r + (t - half) * dir.0 + pad as isize) as usize;
                let cc = (c + (t - half) * dir.1 + pad as isize) as usize;
                acc += white[rr * side + cc];
            }
            out.push(acc * norm);
        }
    }
    out
}

/// Generates scene `index` of the dataset seeded with `seed`.
pub fn generate_scene(cfg: &SynthConfig, seed: u64, index: usize) -> Result<RasterScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let n = cfg.size;
    let mut labels = label_map(cfg, &mut rng);
    let mut bands = Tensor::zeros(Shape::new(1, cfg.bands, n, n));
    for b in 0..cfg.bands {
        let fields: Vec<Vec<f64>> = DIRECTIONS[..cfg.classes]
            .iter()
            .map(|&d| streak_field(n, cfg.scale, d, &mut rng))
            .collect();
        let plane = &mut bands.data_mut()[b * n * n..(b + 1) * n * n];
        for (i, v) in plane.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            *v = (fields[labels[i] as usize][i] + cfg.noise * e) as f32;
        }
    }
    if cfg.void_frac > 0.0 {
        for l in labels.iter_mut() {
            if rng.random::<f64>() < cfg.void_frac {
                *l = VOID;
            }
        }
    }
    RasterScene::new(format!("synth_{index:03}"), bands, labels)
}

pub fn generate(cfg: &SynthConfig, seed: u64, count: usize) -> Result<Vec<RasterScene>> {
    (0..count).map(|i| generate_scene(cfg, seed, i)).collect()
}

/// Plain-text description of a generated dataset.
pub fn manifest(cfg: &SynthConfig, seed: u64, files: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str("# synthetic streak-texture dataset\n");
    out.push_str(&format!("seed = {seed}\n"));
    out.push_str(&format!("size = {}\n", cfg.size));
    out.push_str(&format!("bands = {}\n", cfg.bands));
    out.push_str(&format!("classes = {}\n", cfg.classes));
    out.push_str(&format!("scale = {}\n", cfg.scale));
    out.push_str(&format!("cell = {}\n", cfg.cell));
    out.push_str(&format!("noise = {}\n", cfg.noise));
    out.push_str(&format!("void_frac = {}\n", cfg.void_frac));
    out.push_str(&format!(
        "# classes are streaks of length {} px; patches smaller than {} px see only part of a streak\n",
        cfg.scale,
        cfg.min_separable_size()
    ));
    out.push_str(&format!("min_separable_size = {}\n", cfg.min_separable_size()));
    for (img, lab) in files {
        out.push_str(&format!("scene = {img}:{lab}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            size: 32,
            ..SynthConfig::default()
        };
        assert_eq!(generate_scene(&cfg, 3, 1).unwrap(), generate_scene(&cfg, 3, 1).unwrap());
        assert_ne!(generate_scene(&cfg, 3, 1).unwrap(), generate_scene(&cfg, 3, 2).unwrap());
    }

    #[test]
    fn labels_partition_without_void() {
        let cfg = SynthConfig {
            size: 40,
            cell: 10,
            ..SynthConfig::default()
        };
        let s = generate_scene(&cfg, 0, 0).unwrap();
        assert!(s.labels.iter().all(|&l| l < 2));
        assert!(s.labels.contains(&0) && s.labels.contains(&1));
    }

    #[test]
    fn void_fraction_applied() {
        let cfg = SynthConfig {
            size: 64,
            void_frac: 0.3,
            ..SynthConfig::default()
        };
        let f = generate_scene(&cfg, 0, 0).unwrap().void_fraction();
        assert!((f - 0.3).abs() < 0.05, "{f}");
    }

    #[test]
    fn streaks_correlate_along_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 64;
        let f = streak_field(n, 16, (0, 1), &mut rng);
        let (mut along, mut across) = (0.0, 0.0);
        for r in 0..n - 1 {
            for c in 0..n - 1 {
                along += f[r * n + c] * f[r * n + c + 1];
                across += f[r * n + c] * f[(r + 1) * n + c];
            }
        }
        assert!(along > 5.0 * across.abs(), "{along} {across}");
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig {
            classes: 5,
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
