//! Whole-scene prediction by tiling, and class-map rendering.
//!
//! Tiles of side `size` are laid on a grid with stride
//! `floor(size * (1 - overlap))` (at least 1). The scene is mirror-padded on
//! the trailing side so the last tile reaches the border. Per-class softmax
//! probabilities are summed per pixel in grid order and divided by the
//! number of tiles covering the pixel.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::data::{max_supported_size, PatchSampler, RasterScene, VOID};
use crate::engine::softmax_channels;
use crate::error::{Error, Result};
use crate::models::{forward, NetworkSpec, Params};
use crate::tensor::{Shape, Tensor};

/// Tiles evaluated per forward pass.
const TILE_BATCH: usize = 8;

pub const MAX_OVERLAP: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub width: usize,
    pub height: usize,
    /// Row-major winning class per pixel.
    pub classes: Vec<u8>,
    /// Mean probability of the winning class.
    pub confidence: Vec<f32>,
    /// Mean per-class probabilities, shape `(1, C, H, W)`.
    pub probabilities: Tensor<f32>,
    /// Number of tiles covering each pixel.
    pub coverage: Vec<u32>,
}

/// Tile origins along one axis of extent `n`.
pub fn tile_starts(n: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut starts = vec![0];
    if n > size {
        let steps = (n - size).div_ceil(stride);
        starts.extend((1..=steps).map(|k| k * stride));
    }
    starts
}

pub fn tile_stride(size: usize, overlap: f64) -> usize {
    ((size as f64 * (1.0 - overlap)).floor() as usize).max(1)
}

pub fn predict_scene(
    spec: &NetworkSpec,
    params: &Params<f32>,
    scene: &RasterScene,
    size: usize,
    overlap: f64,
) -> Result<Prediction> {
    if size == 0 {
        return Err(Error::InvalidArgument("tile size must be >= 1".into()));
    }
    if !(0.0..=MAX_OVERLAP).contains(&overlap) {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap} outside [0, {MAX_OVERLAP}]"
        )));
    }
    let (h, w) = (scene.height(), scene.width());
    let max = max_supported_size(h, w);
    if size > max {
        return Err(Error::PatchTooLarge { size, max });
    }
    let stride = tile_stride(size, overlap);
    let mut corners = Vec::new();
    for &r in &tile_starts(h, size, stride) {
        for &c in &tile_starts(w, size, stride) {
            corners.push((0usize, r as isize, c as isize));
        }
    }
    let classes = spec.num_classes;
    let plane = h * w;
    let mut sum = vec![0f32; classes * plane];
    let mut coverage = vec![0u32; plane];
    let sampler = PatchSampler::new(std::slice::from_ref(scene))?;
    for chunk in corners.chunks(TILE_BATCH) {
        let batch = sampler.cut(size, chunk.to_vec());
        let mut probs = forward(spec, params, &batch.inputs, false)?.logits;
        softmax_channels(&mut probs);
        for (k, &(_, top, left)) in chunk.iter().enumerate() {
            let (top, left) = (top as usize, left as usize);
            let rows = size.min(h.saturating_sub(top));
            let cols = size.min(w.saturating_sub(left));
            for i in 0..rows {
                for j in 0..cols {
                    let p = (top + i) * w + left + j;
                    coverage[p] += 1;
                    for c in 0..classes {
                        sum[c * plane + p] += probs.get(k, c, i, j);
                    }
                }
            }
        }
    }
    let mut class_map = vec![0u8; plane];
    let mut confidence = vec![0f32; plane];
    for p in 0..plane {
        let n = coverage[p] as f32;
        let mut best = (0usize, f32::NEG_INFINITY);
        for c in 0..classes {
            let v = sum[c * plane + p] / n;
            sum[c * plane + p] = v;
            if v > best.1 {
                best = (c, v);
            }
        }
        class_map[p] = best.0 as u8;
        confidence[p] = best.1;
    }
    Ok(Prediction {
        width: w,
        height: h,
        classes: class_map,
        confidence,
        probabilities: Tensor::from_vec(Shape::new(1, classes, h, w), sum)?,
        coverage,
    })
}

/// Class colors for rendering; unlabeled pixels are black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
}

impl Palette {
    /// Class 0 non-coffee (black), class 1 coffee (white).
    pub fn coffee() -> Self {
        Palette {
            colors: vec![[0, 0, 0], [255, 255, 255]],
        }
    }

    /// Impervious surfaces, buildings, low vegetation, trees, cars, clutter.
    pub fn isprs() -> Self {
        Palette {
            colors: vec![
                [255, 255, 255],
                [0, 0, 255],
                [0, 255, 255],
                [0, 255, 0],
                [255, 255, 0],
                [255, 0, 0],
            ],
        }
    }

    /// Distinct non-black colors for `classes` classes.
    pub fn distinct(classes: usize) -> Self {
        const BASE: [[u8; 3]; 12] = [
            [230, 25, 75],
            [60, 180, 75],
            [255, 225, 25],
            [0, 130, 200],
            [245, 130, 48],
            [145, 30, 180],
            [70, 240, 240],
            [240, 50, 230],
            [210, 245, 60],
            [250, 190, 212],
            [0, 128, 128],
            [170, 110, 40],
        ];
        let colors = (0..classes)
            .map(|c| {
                let base = BASE[c % BASE.len()];
                let shade = (c / BASE.len()) as u8;
                base.map(|v| v.saturating_sub(shade.saturating_mul(37)).max(1))
            })
            .collect();
        Palette { colors }
    }

    pub fn by_name(name: &str, classes: usize) -> Result<Self> {
        match name {
            "coffee" => Ok(Self::coffee()),
            "isprs" => Ok(Self::isprs()),
            "default" | "distinct" => Ok(Self::distinct(classes)),
            other => Err(Error::InvalidArgument(format!("unknown palette `{other}`"))),
        }
    }

    fn color(&self, class: u8) -> [u8; 3] {
        if class == VOID {
            return [0, 0, 0];
        }
        self.colors.get(class as usize).copied().unwrap_or([0, 0, 0])
    }
}

pub fn render_map(classes: &[u8], width: usize, height: usize, palette: &Palette) -> Result<RgbImage> {
    if classes.len() != width * height {
        return Err(Error::shape("class map extents", width * height, classes.len()));
    }
    let mut img = RgbImage::new(width as u32, height as u32);
    for (px, &c) in img.pixels_mut().zip(classes) {
        *px = Rgb(palette.color(c));
    }
    Ok(img)
}

/// Renders `classes` and writes it as an 8-bit RGB PNG.
pub fn save_map_png(
    path: impl AsRef<Path>,
    classes: &[u8],
    width: usize,
    height: usize,
    palette: &Palette,
) -> Result<()> {
    let path = path.as_ref();
    render_map(classes, width, height, palette)?
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Inverse of [`render_map`]: first palette entry with the pixel's color,
/// or [`VOID`] when none matches.
pub fn decode_map(img: &RgbImage, palette: &Palette) -> Vec<u8> {
    img.pixels()
        .map(|px| {
            palette
                .colors
                .iter()
                .position(|c| *c == px.0)
                .map_or(VOID, |i| i as u8)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiling_arithmetic() {
        assert_eq!(tile_starts(20, 10, 10), vec![0, 10]);
        assert_eq!(tile_starts(10, 10, 10), vec![0]);
        assert_eq!(tile_starts(21, 10, 10), vec![0, 10, 20]);
        assert_eq!(tile_starts(6, 10, 5), vec![0]);
        assert_eq!(tile_starts(20, 10, 5), vec![0, 5, 10]);
        assert_eq!(tile_stride(10, 0.0), 10);
        assert_eq!(tile_stride(10, 0.5), 5);
        assert_eq!(tile_stride(1, 0.9), 1);
    }

    #[test]
    fn coffee_palette_colors() {
        let img = render_map(&[0, 1, VOID], 3, 1, &Palette::coffee()).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(img.get_pixel(1, 0).0, [255, 255, 255]);
        assert_eq!(img.get_pixel(2, 0).0, [0, 0, 0]);
    }

    #[test]
    fn empty_map_renders_empty_image() {
        let img = render_map(&[], 0, 0, &Palette::isprs()).unwrap();
        assert_eq!(img.dimensions(), (0, 0));
    }

    #[test]
    fn render_decode_roundtrip() {
        for palette in [Palette::isprs(), Palette::distinct(30)] {
            let n = palette.colors.len();
            let map: Vec<u8> = (0..64).map(|i| ((i * 7) % n) as u8).collect();
            let img = render_map(&map, 8, 8, &palette).unwrap();
            assert_eq!(decode_map(&img, &palette), map);
        }
        let d = Palette::distinct(30);
        for (i, a) in d.colors.iter().enumerate() {
            assert!(d.colors[i + 1..].iter().all(|b| b != a));
            assert_ne!(*a, [0, 0, 0]);
        }
    }
}
