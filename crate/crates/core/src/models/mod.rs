//! The four resolution-preserving architectures and their parameters.
//!
//! All of them share the same convolution schedule: two 5x5 layers at rates
//! 1 and 2, two 4x4 layers at rates 3 and 4, then 3x3 layers at rates 5, 6
//! (and 7, 8 for the eight-layer variant), followed by a 1x1 classifier.

mod network;
mod params;
mod probe;

use std::fmt;
use std::str::FromStr;

pub use network::{backward, forward, Forward, Gradients, Trace};
pub use params::{init_params, load_params, read_params, save_params, write_params, Params};
pub use probe::gradient_support;

use crate::error::{Error, Result};

/// (kernel, rate) of the i-th dilated convolution.
const CONV_SCHEDULE: [(usize, usize); 8] = [(5, 1), (5, 2), (4, 3), (4, 4), (3, 5), (3, 6), (3, 7), (3, 8)];

pub const POOL_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Dilated6,
    DenseDilated6,
    Dilated6Pooling,
    Dilated8Pooling,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Dilated6,
        Architecture::DenseDilated6,
        Architecture::Dilated6Pooling,
        Architecture::Dilated8Pooling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Dilated6 => "Dilated6",
            Architecture::DenseDilated6 => "DenseDilated6",
            Architecture::Dilated6Pooling => "Dilated6Pooling",
            Architecture::Dilated8Pooling => "Dilated8Pooling",
        }
    }

    pub fn conv_layers(self) -> usize {
        match self {
            Architecture::Dilated8Pooling => 8,
            _ => 6,
        }
    }

    fn pooling(self) -> bool {
        matches!(self, Architecture::Dilated6Pooling | Architecture::Dilated8Pooling)
    }

    fn dense(self) -> bool {
        self == Architecture::DenseDilated6
    }

    pub fn default_widths(self) -> &'static [usize] {
        match self {
            Architecture::Dilated6 | Architecture::Dilated6Pooling => &[64, 64, 128, 128, 256, 256],
            Architecture::DenseDilated6 => &[32, 32, 64, 64, 128, 128],
            Architecture::Dilated8Pooling => &[64, 64, 128, 128, 192, 192, 224, 224],
        }
    }

    pub(crate) fn tag(self) -> u32 {
        match self {
            Architecture::Dilated6 => 0,
            Architecture::DenseDilated6 => 1,
            Architecture::Dilated6Pooling => 2,
            Architecture::Dilated8Pooling => 3,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        Architecture::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownArchitecture(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    DilatedConv,
    /// Stride-1 max pooling; `kernel` holds the window.
    MaxPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub rate: usize,
    /// Output channels of a convolution; zero for pooling.
    pub width: usize,
    /// Consumes the concatenation of the network input and every preceding
    /// block output instead of only the previous one.
    pub dense_input: bool,
}

impl LayerSpec {
    pub fn conv(kernel: usize, rate: usize, width: usize, dense_input: bool) -> Self {
        LayerSpec {
            kind: LayerKind::DilatedConv,
            kernel,
            rate,
            width,
            dense_input,
        }
    }

    pub fn pool(window: usize) -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool,
            kernel: window,
            rate: 1,
            width: 0,
            dense_input: false,
        }
    }
}

/// Declarative description of a network; the classifier is an implicit
/// final 1x1 convolution to `num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub arch: Architecture,
    pub in_channels: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
    /// Classifier consumes the input and all block outputs.
    pub classifier_dense: bool,
}

/// Builds `arch` with its default widths.
pub fn build(arch: Architecture, in_channels: usize, num_classes: usize) -> Result<NetworkSpec> {
    build_with_widths(arch, in_channels, num_classes, arch.default_widths())
}

pub fn build_named(name: &str, in_channels: usize, num_classes: usize) -> Result<NetworkSpec> {
    build(name.parse()?, in_channels, num_classes)
}

/// Builds `arch` with one explicit width per dilated convolution.
pub fn build_with_widths(
    arch: Architecture,
    in_channels: usize,
    num_classes: usize,
    widths: &[usize],
) -> Result<NetworkSpec> {
    if in_channels == 0 || num_classes == 0 {
        return Err(Error::InvalidArgument(
            "in_channels and num_classes must be >= 1".into(),
        ));
    }
    if widths.len() != arch.conv_layers() {
        return Err(Error::InvalidArgument(format!(
            "{arch} needs {} widths, got {}",
            arch.conv_layers(),
            widths.len()
        )));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidArgument("layer widths must be >= 1".into()));
    }
    let mut layers = Vec::new();
    for (&(kernel, rate), &width) in CONV_SCHEDULE.iter().zip(widths) {
        layers.push(LayerSpec::conv(kernel, rate, width, arch.dense()));
        if arch.pooling() {
            layers.push(LayerSpec::pool(POOL_WINDOW));
        }
    }
    Ok(NetworkSpec {
        arch,
        in_channels,
        num_classes,
        layers,
        classifier_dense: arch.dense(),
    })
}

impl NetworkSpec {
    pub fn widths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::DilatedConv)
            .map(|l| l.width)
            .collect()
    }

    /// Checks the structural rules of the named architecture.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = build_with_widths(self.arch, self.in_channels, self.num_classes, &self.widths())?;
        if rebuilt != *self {
            return Err(Error::InvalidArgument(format!(
                "layer list does not match the {} layout",
                self.arch
            )));
        }
        Ok(())
    }

    /// Evaluation order with value identifiers; value 0 is the network input.
    pub(crate) fn plan(&self) -> Plan {
        let mut nodes = Vec::new();
        let mut channels = vec![self.in_channels];
        let mut history = vec![0usize];
        let mut current = 0usize;
        let mut conv_index = 0;
        let push = |nodes: &mut Vec<Node>, channels: &mut Vec<usize>, inputs: Vec<usize>, op: Op, out_ch: usize| {
            let output = channels.len();
            channels.push(out_ch);
            nodes.push(Node { op, inputs, output });
            output
        };
        for layer in &self.layers {
            match layer.kind {
                LayerKind::DilatedConv => {
                    if history.last() != Some(&current) {
                        history.push(current);
                    }
                    let inputs = if layer.dense_input { history.clone() } else { vec![current] };
                    let in_ch = inputs.iter().map(|&v| channels[v]).sum();
                    current = push(
                        &mut nodes,
                        &mut channels,
                        inputs,
                        Op::Conv {
                            param: conv_index,
                            in_channels: in_ch,
                            kernel: layer.kernel,
                            rate: layer.rate,
                            relu: true,
                        },
                        layer.width,
                    );
                    conv_index += 1;
                }
                LayerKind::MaxPool => {
                    let ch = channels[current];
                    current = push(&mut nodes, &mut channels, vec![current], Op::Pool { window: layer.kernel }, ch);
                }
            }
        }
        if history.last() != Some(&current) {
            history.push(current);
        }
        let inputs = if self.classifier_dense { history } else { vec![current] };
        let in_ch = inputs.iter().map(|&v| channels[v]).sum();
        push(
            &mut nodes,
            &mut channels,
            inputs,
            Op::Conv {
                param: conv_index,
                in_channels: in_ch,
                kernel: 1,
                rate: 1,
                relu: false,
            },
            self.num_classes,
        );
        Plan { nodes, channels }
    }

    /// `(out, in, kernel, rate)` of every convolution, classifier last.
    pub fn conv_shapes(&self) -> Vec<(usize, usize, usize, usize)> {
        let plan = self.plan();
        plan.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Conv {
                    in_channels,
                    kernel,
                    rate,
                    ..
                } => Some((plan.channels[n.output], in_channels, kernel, rate)),
                Op::Pool { .. } => None,
            })
            .collect()
    }

    /// Input channel count of every convolution, classifier last.
    pub fn conv_input_channels(&self) -> Vec<usize> {
        self.conv_shapes().into_iter().map(|(_, i, _, _)| i).collect()
    }
}

/// Number of trainable weight and bias elements.
pub fn param_count(spec: &NetworkSpec) -> usize {
    spec.conv_shapes()
        .into_iter()
        .map(|(out, inp, k, _)| out * inp * k * k + out)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    Conv {
        param: usize,
        in_channels: usize,
        kernel: usize,
        rate: usize,
        relu: bool,
    },
    Pool {
        window: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub op: Op,
    pub inputs: Vec<usize>,
    pub output: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub nodes: Vec<Node>,
    /// Channel count of every value.
    pub channels: Vec<usize>,
}
