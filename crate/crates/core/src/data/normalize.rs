use std::fs;
use std::path::Path;

use super::RasterScene;
use crate::error::{Error, Result};

/// Smallest standard deviation used for scaling.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-band mean and standard deviation fitted on non-void training pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Pools the non-void pixels of every scene. Scenes must agree on band count.
    pub fn fit(scenes: &[RasterScene]) -> Result<Self> {
        let bands = scenes
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot fit a normalizer on zero scenes".into()))?
            .num_bands();
        if let Some(s) = scenes.iter().find(|s| s.num_bands() != bands) {
            return Err(Error::shape("normalizer band count", bands, s.num_bands()));
        }
        let mut mean = vec![0.0; bands];
        let mut std = vec![1.0; bands];
        for b in 0..bands {
            let pixels = || {
                scenes.iter().flat_map(move |s| {
                    s.bands
                        .plane(0, b)
                        .iter()
                        .zip(&s.void_mask)
                        .filter(|(_, v)| !**v)
                        .map(|(&x, _)| x as f64)
                })
            };
            let (mut n, mut sum) = (0usize, 0.0);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in pixels() {
                n += 1;
                sum += x;
                lo = lo.min(x);
                hi = hi.max(x);
            }
            if n == 0 {
                continue;
            }
            // Exact for constant bands so they normalize to exactly zero.
            let m = if lo == hi { lo } else { sum / n as f64 };
            let var = pixels().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            mean[b] = m;
            std[b] = var.sqrt().max(STD_FLOOR);
        }
        Ok(Normalizer { mean, std })
    }

    pub fn num_bands(&self) -> usize {
        self.mean.len()
    }

    /// Returns a copy of `scene` with every pixel standardized.
    pub fn apply(&self, scene: &RasterScene) -> Result<RasterScene> {
        if scene.num_bands() != self.num_bands() {
            return Err(Error::shape("normalizer band count", self.num_bands(), scene.num_bands()));
        }
        let mut bands = scene.bands.clone();
        let plane = scene.num_pixels();
        for (b, chunk) in bands.data_mut().chunks_mut(plane.max(1)).enumerate().take(self.num_bands()) {
            let (m, s) = (self.mean[b], self.std[b]);
            for v in chunk {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
        scene.with_bands(bands)
    }

    /// One line per band: `mean std`.
    pub fn to_text(&self) -> String {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| format!("{m} {s}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut out = Normalizer {
            mean: Vec::new(),
            std: Vec::new(),
        };
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(m)), Some(Ok(s)), None) if s > 0.0 => {
                    out.mean.push(m);
                    out.std.push(s);
                }
                _ => return Err(format!("line {}: expected `mean std`", i + 1)),
            }
        }
        Ok(out)
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::VOID;
    use crate::tensor::{Shape, Tensor};

    fn scene(values: Vec<f32>, labels: Vec<u8>, rows: usize, cols: usize) -> RasterScene {
        let bands = values.len() / (rows * cols);
        RasterScene::new("s", Tensor::from_vec(Shape::new(1, bands, rows, cols), values).unwrap(), labels).unwrap()
    }

    #[test]
    fn constant_band_normalizes_to_zero() {
        let s = scene(vec![0.1; 6], vec![0; 6], 2, 3);
        let n = Normalizer::fit(std::slice::from_ref(&s)).unwrap();
        assert_eq!(n.std[0], STD_FLOOR);
        let out = n.apply(&s).unwrap();
        assert!(out.bands.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pooled_statistics_over_non_void() {
        let a = scene(vec![1.0, 2.0, 3.0, 100.0], vec![0, 0, 1, VOID], 2, 2);
        let b = scene(vec![5.0, 7.0], vec![1, 1], 1, 2);
        let n = Normalizer::fit(&[a.clone(), b]).unwrap();
        let pool = [1.0f64, 2.0, 3.0, 5.0, 7.0];
        let mean = pool.iter().sum::<f64>() / 5.0;
        let std = (pool.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
        assert!((n.mean[0] - mean).abs() < 1e-12);
        assert!((n.std[0] - std).abs() < 1e-12);

        // applying to another scene uses the fitted statistics
        let test = scene(vec![mean as f32; 4], vec![0; 4], 2, 2);
        let out = n.apply(&test).unwrap();
        assert!(out.bands.data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn text_roundtrip() {
        let n = Normalizer {
            mean: vec![0.1, -3.5],
            std: vec![1.0 / 3.0, 2.0],
        };
        assert_eq!(Normalizer::from_text(&n.to_text()).unwrap(), n);
        assert!(Normalizer::from_text("1.0\n").is_err());
    }
}
