//! Random square patch batches.
//!
//! A patch is drawn by picking an eligible scene uniformly, then a top-left
//! corner uniformly among positions where the window fits. Scenes narrower
//! than the patch along an axis are mirror-padded (without repeating the
//! edge) up to the patch size, which supports sizes up to `3n - 2`.

use rand::Rng;

use super::{reflect, RasterScene};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    pub size: usize,
    /// Shape `(N, bands, size, size)`.
    pub inputs: Tensor<f32>,
    /// `(n, i, j)` row-major labels; void pixels keep the sentinel.
    pub labels: Vec<u8>,
    pub void_mask: Vec<bool>,
    /// `(scene index, top row, left col)` of every patch in padded
    /// coordinates (negative when the scene is padded).
    pub corners: Vec<(usize, isize, isize)>,
}

/// Largest patch side a scene of this extent supports.
pub fn max_supported_size(rows: usize, cols: usize) -> usize {
    let axis = |n: usize| if n == 0 { 0 } else { 3 * n - 2 };
    axis(rows).min(axis(cols))
}

/// Valid window origins along one axis of extent `n` for a patch of `size`.
fn axis_origins(n: usize, size: usize) -> (isize, isize) {
    if n >= size {
        (0, (n - size) as isize)
    } else {
        let lead = ((size - n) / 2) as isize;
        (-lead, -lead)
    }
}

/// Reusable sampler over a fixed scene set.
#[derive(Debug)]
pub struct PatchSampler<'a> {
    scenes: &'a [RasterScene],
    /// Per class: every `(scene, pixel)` with that label, when balancing.
    class_pixels: Option<Vec<Vec<(usize, usize)>>>,
}

impl<'a> PatchSampler<'a> {
    pub fn new(scenes: &'a [RasterScene]) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::InvalidArgument("no scenes to sample from".into()));
        }
        let bands = scenes[0].num_bands();
        if let Some(s) = scenes.iter().find(|s| s.num_bands() != bands) {
            return Err(Error::shape("scene band count", bands, s.num_bands()));
        }
        Ok(PatchSampler {
            scenes,
            class_pixels: None,
        })
    }

    /// Centers patches on a pixel of a uniformly chosen class instead of
    /// sampling corners uniformly.
    pub fn class_balanced(mut self) -> Self {
        let mut by_class: Vec<Vec<(usize, usize)>> = Vec::new();
        for (si, s) in self.scenes.iter().enumerate() {
            for (p, (&l, &v)) in s.labels.iter().zip(&s.void_mask).enumerate() {
                if v {
                    continue;
                }
                if by_class.len() <= l as usize {
                    by_class.resize(l as usize + 1, Vec::new());
                }
                by_class[l as usize].push((si, p));
            }
        }
        by_class.retain(|c| !c.is_empty());
        self.class_pixels = Some(by_class);
        self
    }

    fn eligible(&self, size: usize) -> Vec<usize> {
        (0..self.scenes.len())
            .filter(|&i| size <= max_supported_size(self.scenes[i].height(), self.scenes[i].width()))
            .collect()
    }

    pub fn extract<R: Rng + ?Sized>(&self, size: usize, batch_size: usize, rng: &mut R) -> Result<PatchBatch> {
        if size == 0 || batch_size == 0 {
            return Err(Error::InvalidArgument("patch size and batch size must be >= 1".into()));
        }
        let eligible = self.eligible(size);
        if eligible.is_empty() {
            let max = self
                .scenes
                .iter()
                .map(|s| max_supported_size(s.height(), s.width()))
                .max()
                .unwrap_or(0);
            return Err(Error::PatchTooLarge { size, max });
        }
        let mut corners = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            corners.push(self.draw_corner(&eligible, size, rng));
        }
        Ok(self.cut(size, corners))
    }

    fn draw_corner<R: Rng + ?Sized>(&self, eligible: &[usize], size: usize, rng: &mut R) -> (usize, isize, isize) {
        if let Some(classes) = self.class_pixels.as_ref().filter(|c| !c.is_empty()) {
            let fits: Vec<Vec<&(usize, usize)>> = classes
                .iter()
                .map(|c| c.iter().filter(|(s, _)| eligible.contains(s)).collect::<Vec<_>>())
                .filter(|c: &Vec<_>| !c.is_empty())
                .collect();
            if !fits.is_empty() {
                let class = &fits[rng.random_range(0..fits.len())];
                let &(si, p) = class[rng.random_range(0..class.len())];
                let s = &self.scenes[si];
                let (i, j) = ((p / s.width()) as isize, (p % s.width()) as isize);
                let half = (size / 2) as isize;
                let (r0, r1) = axis_origins(s.height(), size);
                let (c0, c1) = axis_origins(s.width(), size);
                return (si, (i - half).clamp(r0, r1), (j - half).clamp(c0, c1));
            }
        }
        let si = eligible[rng.random_range(0..eligible.len())];
        let s = &self.scenes[si];
        let (r0, r1) = axis_origins(s.height(), size);
        let (c0, c1) = axis_origins(s.width(), size);
        (
            si,
            rng.random_range(r0 as i64..=r1 as i64) as isize,
            rng.random_range(c0 as i64..=c1 as i64) as isize,
        )
    }

    /// Copies the windows at `corners` into a batch.
    pub fn cut(&self, size: usize, corners: Vec<(usize, isize, isize)>) -> PatchBatch {
        let bands = self.scenes[0].num_bands();
        let n = corners.len();
        let plane = size * size;
        let mut inputs = Tensor::zeros(Shape::new(n, bands, size, size));
        let mut labels = vec![0u8; n * plane];
        let mut void_mask = vec![false; n * plane];
        for (k, &(si, top, left)) in corners.iter().enumerate() {
            let s = &self.scenes[si];
            let (h, w) = (s.height(), s.width());
            let rows: Vec<usize> = (0..size).map(|i| reflect(top + i as isize, h)).collect();
            let cols: Vec<usize> = (0..size).map(|j| reflect(left + j as isize, w)).collect();
            let item = inputs.item_mut(k);
            for b in 0..bands {
                let src = s.bands.plane(0, b);
                for (i, &si) in rows.iter().enumerate() {
                    let dst = &mut item[(b * size + i) * size..(b * size + i + 1) * size];
                    for (d, &sj) in dst.iter_mut().zip(&cols) {
                        *d = src[si * w + sj];
                    }
                }
            }
            for (i, &si) in rows.iter().enumerate() {
                for (j, &sj) in cols.iter().enumerate() {
                    labels[k * plane + i * size + j] = s.labels[si * w + sj];
                    void_mask[k * plane + i * size + j] = s.void_mask[si * w + sj];
                }
            }
        }
        PatchBatch {
            size,
            inputs,
            labels,
            void_mask,
            corners,
        }
    }
}

/// Draws `batch_size` uniformly placed `size x size` patches.
pub fn extract_batch<R: Rng + ?Sized>(
    scenes: &[RasterScene],
    size: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<PatchBatch> {
    PatchSampler::new(scenes)?.extract(size, batch_size, rng)
}
