//! Raster and label file formats.
//!
//! * `RSRF`: magic, u32 LE width, height, bands, dtype (0 = f32), then
//!   band-sequential row-major f32 LE samples.
//! * `RSLB`: magic, u32 LE width, height, then row-major u8 labels
//!   (255 = void).
//! * 8-bit PNG: grayscale, gray+alpha, RGB or RGBA images (alpha dropped,
//!   samples scaled to `[0, 1]`); grayscale PNG for labels.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::RasterScene;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

const RSRF: &[u8; 4] = b"RSRF";
const RSLB: &[u8; 4] = b"RSLB";
const PNG: &[u8; 4] = b"\x89PNG";
const DTYPE_F32: u32 = 0;

fn read_u32(r: &mut impl Read, offset: &mut usize) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| format!("truncated header at byte {offset}"))?;
    *offset += 4;
    Ok(u32::from_le_bytes(b))
}

fn ensure_eof(r: &mut impl Read, offset: usize) -> std::result::Result<(), String> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => Ok(()),
        Ok(_) => Err(format!("trailing data after byte {offset}")),
        Err(e) => Err(e.to_string()),
    }
}

pub fn write_rsrf(mut w: impl Write, bands: &Tensor<f32>) -> std::io::Result<()> {
    let s = bands.shape();
    assert_eq!(s.batch, 1, "RSRF holds a single image");
    w.write_all(RSRF)?;
    for v in [s.cols as u32, s.rows as u32, s.channels as u32, DTYPE_F32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(s.len() * 4);
    for v in bands.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

/// Parses an RSRF stream into a `(1, bands, height, width)` tensor.
pub fn read_rsrf(mut r: impl Read) -> std::result::Result<Tensor<f32>, String> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| "truncated magic at byte 0")?;
    if &magic != RSRF {
        return Err("bad magic at byte 0, expected RSRF".into());
    }
    let mut offset = 4;
    let width = read_u32(&mut r, &mut offset)? as usize;
    let height = read_u32(&mut r, &mut offset)? as usize;
    let bands = read_u32(&mut r, &mut offset)? as usize;
    let dtype = read_u32(&mut r, &mut offset)?;
    if dtype != DTYPE_F32 {
        return Err(format!("unsupported dtype code {dtype} at byte 16"));
    }
    let shape = Shape::new(1, bands, height, width);
    let bytes = shape
        .len()
        .checked_mul(4)
        .ok_or("raster extents overflow")?;
    let mut buf = vec![0u8; bytes];
    r.read_exact(&mut buf).map_err(|_| {
        format!(
            "truncated sample data: header at byte 0..{offset} declares {bytes} bytes for {width}x{height}x{bands}"
        )
    })?;
    ensure_eof(&mut r, offset + bytes)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::from_vec(shape, data).map_err(|e| e.to_string())
}

pub fn write_rslb(mut w: impl Write, width: usize, height: usize, labels: &[u8]) -> std::io::Result<()> {
    assert_eq!(labels.len(), width * height, "label extents");
    w.write_all(RSLB)?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    w.write_all(labels)?;
    w.flush()
}

/// Parses an RSLB stream into `(width, height, labels)`.
pub fn read_rslb(mut r: impl Read) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| "truncated magic at byte 0")?;
    if &magic != RSLB {
        return Err("bad magic at byte 0, expected RSLB".into());
    }
    let mut offset = 4;
    let width = read_u32(&mut r, &mut offset)? as usize;
    let height = read_u32(&mut r, &mut offset)? as usize;
    let n = width.checked_mul(height).ok_or("label extents overflow")?;
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels)
        .map_err(|_| format!("truncated label data: header at byte 0..{offset} declares {n} bytes"))?;
    ensure_eof(&mut r, offset + n)?;
    Ok((width, height, labels))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn sniff(path: &Path) -> Result<[u8; 4]> {
    let mut magic = [0u8; 4];
    open(path)?
        .read_exact(&mut magic)
        .map_err(|_| Error::format(path, "file shorter than 4 bytes"))?;
    Ok(magic)
}

fn decode_png(path: &Path) -> Result<image::DynamicImage> {
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Loads an RSRF raster or an 8-bit PNG image as `(1, bands, H, W)`.
pub fn load_raster(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    match &sniff(path)? {
        RSRF => read_rsrf(open(path)?).map_err(|m| Error::format(path, m)),
        PNG => {
            use image::DynamicImage as D;
            let img = decode_png(path)?;
            let (w, h) = (img.width() as usize, img.height() as usize);
            let (channels, raw): (usize, Vec<u8>) = match img {
                D::ImageLuma8(b) => (1, b.into_raw()),
                D::ImageLumaA8(_) => (1, img.to_luma8().into_raw()),
                D::ImageRgb8(b) => (3, b.into_raw()),
                D::ImageRgba8(_) => (3, img.to_rgb8().into_raw()),
                other => {
                    return Err(Error::format(
                        path,
                        format!("unsupported PNG color type {:?}, expected 8-bit", other.color()),
                    ))
                }
            };
            let plane = w * h;
            let mut data = vec![0f32; channels * plane];
            for (p, px) in raw.chunks_exact(channels).enumerate() {
                for (c, &v) in px.iter().enumerate() {
                    data[c * plane + p] = v as f32 / 255.0;
                }
            }
            Tensor::from_vec(Shape::new(1, channels, h, w), data)
        }
        _ => Err(Error::format(path, "unrecognized raster format at byte 0 (expected RSRF or PNG)")),
    }
}

/// Loads an RSLB or grayscale PNG label map as `(width, height, labels)`.
pub fn load_labels(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    match &sniff(path)? {
        RSLB => read_rslb(open(path)?).map_err(|m| Error::format(path, m)),
        PNG => match decode_png(path)? {
            image::DynamicImage::ImageLuma8(b) => {
                let (w, h) = (b.width() as usize, b.height() as usize);
                Ok((w, h, b.into_raw()))
            }
            other => Err(Error::format(
                path,
                format!("label PNG must be 8-bit grayscale, got {:?}", other.color()),
            )),
        },
        _ => Err(Error::format(path, "unrecognized label format at byte 0 (expected RSLB or PNG)")),
    }
}

/// Loads an image and optional label map. Without labels every pixel is void.
pub fn load_scene(image_path: impl AsRef<Path>, label_path: Option<&Path>) -> Result<RasterScene> {
    let image_path = image_path.as_ref();
    let bands = load_raster(image_path)?;
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let Some(label_path) = label_path else {
        return RasterScene::unlabeled(id, bands);
    };
    let (w, h, labels) = load_labels(label_path)?;
    let s = bands.shape();
    if (w, h) != (s.cols, s.rows) {
        return Err(Error::format(
            label_path,
            format!(
                "extent mismatch: labels are {w}x{h} but image {} is {}x{}",
                image_path.display(),
                s.cols,
                s.rows
            ),
        ));
    }
    RasterScene::new(id, bands, labels)
}

pub fn save_rsrf(path: impl AsRef<Path>, bands: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    if bands.shape().batch != 1 {
        return Err(Error::shape("RSRF batch", 1, bands.shape().batch));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rsrf(BufWriter::new(f), bands).map_err(|e| Error::io(path, e))
}

pub fn save_rslb(path: impl AsRef<Path>, width: usize, height: usize, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != width * height {
        return Err(Error::shape("RSLB extents", width * height, labels.len()));
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rslb(BufWriter::new(f), width, height, labels).map_err(|e| Error::io(path, e))
}
