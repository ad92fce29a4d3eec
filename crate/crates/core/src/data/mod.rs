//! Scenes, file formats, normalization and patch batches.

mod extract;
mod io;
mod normalize;

pub use extract::{extract_batch, max_supported_size, PatchBatch, PatchSampler};
pub use io::{
    load_labels, load_raster, load_scene, read_rslb, read_rsrf, save_rslb, save_rsrf, write_rslb, write_rsrf,
};
pub use normalize::{Normalizer, STD_FLOOR};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Label value marking an unlabeled pixel in label files.
pub const VOID: u8 = 255;

/// A multi-band image with its label map.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterScene {
    pub id: String,
    /// Shape `(1, bands, height, width)`.
    pub bands: Tensor<f32>,
    /// Row-major class indices; [`VOID`] where `void_mask` is set.
    pub labels: Vec<u8>,
    /// True for unlabeled pixels.
    pub void_mask: Vec<bool>,
}

impl RasterScene {
    /// Builds a scene, deriving the void mask from [`VOID`] labels.
    pub fn new(id: impl Into<String>, bands: Tensor<f32>, labels: Vec<u8>) -> Result<Self> {
        let s = bands.shape();
        if s.batch != 1 {
            return Err(Error::shape("scene bands batch", 1, s.batch));
        }
        if labels.len() != s.plane() {
            return Err(Error::shape(
                "scene label extents (image rows x cols vs labels)",
                format!("{}x{}", s.rows, s.cols),
                format!("{} labels", labels.len()),
            ));
        }
        let void_mask = labels.iter().map(|&l| l == VOID).collect();
        Ok(RasterScene {
            id: id.into(),
            bands,
            labels,
            void_mask,
        })
    }

    /// A scene without ground truth: every pixel void.
    pub fn unlabeled(id: impl Into<String>, bands: Tensor<f32>) -> Result<Self> {
        let n = bands.shape().plane();
        Self::new(id, bands, vec![VOID; n])
    }

    pub fn height(&self) -> usize {
        self.bands.shape().rows
    }

    pub fn width(&self) -> usize {
        self.bands.shape().cols
    }

    pub fn num_bands(&self) -> usize {
        self.bands.shape().channels
    }

    pub fn num_pixels(&self) -> usize {
        self.bands.shape().plane()
    }

    pub fn void_fraction(&self) -> f64 {
        if self.void_mask.is_empty() {
            return 1.0;
        }
        self.void_mask.iter().filter(|v| **v).count() as f64 / self.void_mask.len() as f64
    }

    pub fn has_labels(&self) -> bool {
        self.void_mask.iter().any(|v| !*v)
    }

    /// Rejects labels outside `[0, num_classes)` at non-void pixels.
    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        if let Some((i, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(i, &l)| !self.void_mask[*i] && l as usize >= num_classes)
        {
            return Err(Error::InvalidArgument(format!(
                "scene {}: label {l} at pixel ({}, {}) outside [0, {num_classes})",
                self.id,
                i / self.width(),
                i % self.width()
            )));
        }
        Ok(())
    }

    /// The same image with its bands transformed to shape `(1, B, H, W)`.
    pub fn with_bands(&self, bands: Tensor<f32>) -> Result<Self> {
        let s = self.bands.shape();
        if bands.shape() != Shape::new(1, bands.shape().channels, s.rows, s.cols) {
            return Err(Error::shape("replacement bands", s, bands.shape()));
        }
        Ok(RasterScene {
            bands,
            ..self.clone()
        })
    }
}

/// Mirror index into `0..n` without repeating the edge sample, for any offset.
pub(crate) fn reflect(t: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = t.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}
