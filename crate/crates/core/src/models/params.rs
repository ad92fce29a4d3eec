//! Parameter storage, initialization and the `DSW1` weight file.
//!
//! Layout: magic `DSW1`, then little-endian u32 fields `arch tag`,
//! `in_channels`, `num_classes`, `classifier_dense`, `layer count`, and per
//! layer `kind`, `kernel`, `rate`, `width`, `dense_input`. Parameters follow
//! as little-endian f32 in convolution order, weights before bias, with the
//! classifier last.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Architecture, LayerKind, LayerSpec, NetworkSpec};
use crate::engine::ConvParams;
use crate::error::{Error, Result};
use crate::tensor::Real;

const MAGIC: &[u8; 4] = b"DSW1";

/// One [`ConvParams`] per convolution, classifier last.
///
/// The same type carries parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub convs: Vec<ConvParams<T>>,
}

impl<T: Real> Params<T> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Params {
            convs: spec
                .conv_shapes()
                .into_iter()
                .map(|(out, inp, k, r)| ConvParams::zeros(out, inp, k, r))
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.convs.iter().map(ConvParams::num_params).sum()
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            convs: self
                .convs
                .iter()
                .map(|c| ConvParams {
                    weights: c.weights.cast(),
                    bias: c.bias.iter().map(|&b| U::from_f64(b.to_f64())).collect(),
                    rate: c.rate,
                })
                .collect(),
        }
    }

    /// Visits every scalar, weights before bias, layer by layer.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut T)) {
        for c in &mut self.convs {
            c.weights.data_mut().iter_mut().for_each(&mut f);
            c.bias.iter_mut().for_each(&mut f);
        }
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.convs
            .iter()
            .flat_map(|c| c.weights.data().iter().chain(c.bias.iter()).copied())
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        let shapes = spec.conv_shapes();
        shapes.len() == self.convs.len()
            && shapes.iter().zip(&self.convs).all(|(&(o, i, k, r), c)| {
                c.weights.shape().batch == o
                    && c.weights.shape().channels == i
                    && c.kernel() == (k, k)
                    && c.rate == r
                    && c.bias.len() == o
            })
    }
}

/// Zero bias and Gaussian weights with standard deviation `sqrt(2 / fan_in)`.
pub fn init_params<T: Real>(spec: &NetworkSpec, seed: u64) -> Params<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::zeros(spec);
    for c in &mut params.convs {
        let (kh, kw) = c.kernel();
        let fan_in = c.in_channels() * kh * kw;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        for w in c.weights.data_mut() {
            *w = T::from_f64(normal.sample(&mut rng));
        }
    }
    params
}

fn put(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// Writes a `DSW1` stream. Values are stored as f32.
pub fn write_params<T: Real>(mut w: impl Write, spec: &NetworkSpec, params: &Params<T>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    put(&mut w, spec.arch.tag())?;
    put(&mut w, spec.in_channels as u32)?;
    put(&mut w, spec.num_classes as u32)?;
    put(&mut w, spec.classifier_dense as u32)?;
    put(&mut w, spec.layers.len() as u32)?;
    for l in &spec.layers {
        put(&mut w, matches!(l.kind, LayerKind::MaxPool) as u32)?;
        put(&mut w, l.kernel as u32)?;
        put(&mut w, l.rate as u32)?;
        put(&mut w, l.width as u32)?;
        put(&mut w, l.dense_input as u32)?;
    }
    for v in params.values() {
        w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
    }
    w.flush()
}

pub fn save_params<T: Real>(path: impl AsRef<Path>, spec: &NetworkSpec, params: &Params<T>) -> Result<()> {
    let path = path.as_ref();
    if !params.matches(spec) {
        return Err(Error::InvalidArgument("parameters do not match the network spec".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_params(BufWriter::new(file), spec, params).map_err(|e| Error::io(path, e))
}

struct Reader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| format!("truncated at byte {}: {e}", self.offset))?;
        self.offset += N;
        Ok(buf)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
}

/// Parses a `DSW1` stream, validating the header against the architecture rules.
pub fn read_params(r: impl Read) -> std::result::Result<(NetworkSpec, Params<f32>), String> {
    let mut r = Reader { inner: r, offset: 0 };
    if &r.bytes::<4>()? != MAGIC {
        return Err("bad magic, expected DSW1".into());
    }
    let tag = r.u32()?;
    let arch = Architecture::from_tag(tag as u32).ok_or_else(|| format!("unknown architecture tag {tag}"))?;
    let in_channels = r.u32()?;
    let num_classes = r.u32()?;
    let classifier_dense = r.u32()? != 0;
    let count = r.u32()?;
    if count > 64 {
        return Err(format!("implausible layer count {count}"));
    }
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = if r.u32()? == 0 { LayerKind::DilatedConv } else { LayerKind::MaxPool };
        layers.push(LayerSpec {
            kind,
            kernel: r.u32()?,
            rate: r.u32()?,
            width: r.u32()?,
            dense_input: r.u32()? != 0,
        });
    }
    let spec = NetworkSpec {
        arch,
        in_channels,
        num_classes,
        layers,
        classifier_dense,
    };
    spec.validate().map_err(|e| format!("header: {e}"))?;
    let mut params = Params::<f32>::zeros(&spec);
    let mut failure = None;
    params.for_each_mut(|v| {
        if failure.is_none() {
            match r.bytes::<4>() {
                Ok(b) => *v = f32::from_le_bytes(b),
                Err(e) => failure = Some(e),
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let mut extra = [0u8; 1];
    if r.inner.read(&mut extra).map_err(|e| e.to_string())? != 0 {
        return Err(format!("trailing data after byte {}", r.offset));
    }
    Ok((spec, params))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(NetworkSpec, Params<f32>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(BufReader::new(file)).map_err(|m| Error::format(path, m))
}
