//! Three-layer 1x1-convolution mask head with per-layer dynamic/static choice.

use std::fmt;

use crate::error::{Error, Result};

use super::DenseMap;

/// Per-pixel affine map `y = W x + b`, `W` stored out-by-in row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1 {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1x1 {
    pub fn new(in_channels: usize, out_channels: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != in_channels * out_channels || bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "1x1 conv {in_channels}->{out_channels} needs {} weights and {out_channels} biases, got {} and {}",
                in_channels * out_channels,
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weight,
            bias,
        })
    }

    pub fn identity(channels: usize) -> Self {
        let mut weight = vec![0.0; channels * channels];
        for i in 0..channels {
            weight[i * channels + i] = 1.0;
        }
        Self {
            in_channels: channels,
            out_channels: channels,
            weight,
            bias: vec![0.0; channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>, relu: bool) {
        out.clear();
        for o in 0..self.out_channels {
            let row = &self.weight[o * self.in_channels..(o + 1) * self.in_channels];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(if relu { acc.max(0.0) } else { acc });
        }
    }
}

/// Weights of the three mask-head layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHeadWeights {
    pub layers: [Conv1x1; 3],
}

impl MaskHeadWeights {
    pub fn new(layers: [Conv1x1; 3]) -> Self {
        Self { layers }
    }

    /// `(in, out)` per layer.
    pub fn layout(&self) -> [(usize, usize); 3] {
        self.layers.each_ref().map(|l| (l.in_channels, l.out_channels))
    }

    /// Flattens as `W1, b1, W2, b2, W3, b3`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`MaskHeadWeights::to_flat`] for a given layout.
    pub fn from_flat(layout: [(usize, usize); 3], params: &[f64]) -> Result<Self> {
        let needed: usize = layout.iter().map(|&(i, o)| i * o + o).sum();
        if params.len() != needed {
            return Err(Error::Shape(format!(
                "mask head layout needs {needed} parameters, got {}",
                params.len()
            )));
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = params[at..at + n].to_vec();
            at += n;
            s
        };
        let mut build = |(i, o): (usize, usize)| {
            let w = take(i * o);
            let b = take(o);
            Conv1x1::new(i, o, w, b)
        };
        Ok(Self {
            layers: [build(layout[0])?, build(layout[1])?, build(layout[2])?],
        })
    }
}

/// One of the seven dynamic/static layer combinations.
///
/// The index `r` in `1..=7` is the 3-bit code read first-layer-first: `"100"`
/// is `r = 4` with a dynamic first layer and static second and third layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathSpec {
    index: u8,
}

impl PathSpec {
    pub const ALL_DYNAMIC: PathSpec = PathSpec { index: 7 };

    pub fn new(index: u8) -> Result<Self> {
        if !(1..=7).contains(&index) {
            return Err(Error::Config(format!("path index {index} outside 1..=7")));
        }
        Ok(Self { index })
    }

    pub fn all() -> impl Iterator<Item = PathSpec> {
        (1..=7).map(|index| PathSpec { index })
    }

    pub fn index(self) -> u8 {
        self.index
    }

    /// `true` selects the dynamic weights for that layer.
    pub fn layer_choice(self) -> [bool; 3] {
        [
            self.index & 0b100 != 0,
            self.index & 0b010 != 0,
            self.index & 0b001 != 0,
        ]
    }

    pub fn from_layer_choice(choice: [bool; 3]) -> Result<Self> {
        let index = choice.iter().fold(0u8, |acc, &dynamic| (acc << 1) | u8::from(dynamic));
        Self::new(index)
    }

    pub fn code(self) -> String {
        self.layer_choice().iter().map(|&d| if d { '1' } else { '0' }).collect()
    }

    pub fn from_code(code: &str) -> Result<Self> {
        let bits: Vec<bool> = code
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::Config(format!("bad path code {code:?}"))),
            })
            .collect::<Result<_>>()?;
        let choice: [bool; 3] = bits
            .try_into()
            .map_err(|_| Error::Config(format!("path code {code:?} must have 3 digits")))?;
        Self::from_layer_choice(choice)
    }
}

impl serde::Serialize for PathSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.code())
    }
}

impl fmt::Display for PathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r={} ({})", self.index, self.code())
    }
}

/// Runs the mask head along `path`: three 1x1 layers, ReLU after the first
/// two, yielding single-channel logits.
pub fn mask_head_forward(
    features: &DenseMap,
    dynamic: &MaskHeadWeights,
    static_: &MaskHeadWeights,
    path: PathSpec,
) -> Result<DenseMap> {
    let choice = path.layer_choice();
    let layers: [&Conv1x1; 3] = std::array::from_fn(|i| {
        if choice[i] {
            &dynamic.layers[i]
        } else {
            &static_.layers[i]
        }
    });
    let mut channels = features.channels();
    for (i, l) in layers.iter().enumerate() {
        if l.in_channels != channels {
            return Err(Error::Shape(format!(
                "layer {} of {path} expects {} input channels, got {channels}",
                i + 1,
                l.in_channels
            )));
        }
        channels = l.out_channels;
    }
    if channels != 1 {
        return Err(Error::Shape(format!(
            "mask head must end in 1 channel, {path} ends in {channels}"
        )));
    }
    let mut out = Vec::with_capacity(features.pixels());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for p in 0..features.pixels() {
        layers[0].apply(features.pixel(p), &mut a, true);
        layers[1].apply(&a, &mut b, true);
        layers[2].apply(&b, &mut a, false);
        out.push(a[0]);
    }
    DenseMap::new(features.height(), features.width(), 1, out)
}
