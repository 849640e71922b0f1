//! Network architecture description and validation.
//!
//! The text format holds one layer per line, `#` starts a comment:
//!
//! ```text
//! input <channels> <w0>
//! conv <maps> <k>
//! maxpool <k>
//! fc <neurons>
//! activation <hidden> <output>   # optional, default: tanh softmax
//! ```
//!
//! Layer 0 must be `input`, followed by conv/maxpool layers `1..=L`, then
//! any number of fc layers.

use std::fmt::{self, Display};
use std::str::FromStr;

use crate::error::{range, Error, Result};

/// Pointwise nonlinearity applied after conv and hidden fc layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HiddenActivation {
    Identity,
    #[default]
    Tanh,
    Relu,
}

/// Nonlinearity of the last fc layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    #[default]
    Softmax,
}

impl FromStr for HiddenActivation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(Self::Identity),
            "tanh" => Ok(Self::Tanh),
            "relu" => Ok(Self::Relu),
            other => Err(format!("unknown hidden activation '{other}'")),
        }
    }
}

impl FromStr for OutputActivation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(Self::Identity),
            "softmax" => Ok(Self::Softmax),
            other => Err(format!("unknown output activation '{other}'")),
        }
    }
}

impl Display for HiddenActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Tanh => "tanh",
            Self::Relu => "relu",
        })
    }
}

impl Display for OutputActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Softmax => "softmax",
        })
    }
}

/// One layer of the architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Input { channels: usize, size: usize },
    Conv { maps: usize, kernel: usize },
    MaxPool { kernel: usize },
    Fc { neurons: usize },
}

impl LayerSpec {
    pub fn is_spatial(&self) -> bool {
        matches!(self, Self::Conv { .. } | Self::MaxPool { .. })
    }
}

impl Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Input { channels, size } => write!(f, "input {channels} {size}"),
            Self::Conv { maps, kernel } => write!(f, "conv {maps} {kernel}"),
            Self::MaxPool { kernel } => write!(f, "maxpool {kernel}"),
            Self::Fc { neurons } => write!(f, "fc {neurons}"),
        }
    }
}

/// A validated architecture with its patch-level map sizes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetSpec {
    layers: Vec<LayerSpec>,
    /// `w_l` for `l` in `0..=L`.
    patch_sizes: Vec<usize>,
    /// `|P_l|` for `l` in `0..=L`, then neuron counts for fc layers.
    map_counts: Vec<usize>,
    last_spatial: usize,
    pub hidden: HiddenActivation,
    pub output: OutputActivation,
}

impl NetSpec {
    /// Validates a layer list. Sizes follow `w_l = w_{l-1} - (k-1)` for
    /// conv and `w_l = w_{l-1} / k` with `w_{l-1} mod k = 0` for pooling.
    pub fn new(layers: Vec<LayerSpec>, hidden: HiddenActivation, output: OutputActivation) -> Result<Self> {
        let Some(&LayerSpec::Input { channels, size }) = layers.first() else {
            return Err(Error::Architecture("layer 0 must be an input layer".into()));
        };
        if channels == 0 || size == 0 {
            return Err(Error::Size {
                layer: 0,
                rule: format!("input needs at least one channel and size >= 1, got {channels} {size}"),
            });
        }
        let mut patch_sizes = vec![size];
        let mut map_counts = vec![channels];
        let mut last_spatial = 0;
        let mut seen_fc = false;
        for (l, layer) in layers.iter().enumerate().skip(1) {
            let w_prev = *patch_sizes.last().unwrap();
            let maps_prev = *map_counts.last().unwrap();
            match *layer {
                LayerSpec::Input { .. } => {
                    return Err(Error::Architecture(format!(
                        "layer {l}: input is only allowed as layer 0"
                    )))
                }
                LayerSpec::Conv { .. } | LayerSpec::MaxPool { .. } if seen_fc => {
                    return Err(Error::Architecture(format!(
                        "layer {l}: {layer} follows a fully connected layer"
                    )))
                }
                LayerSpec::Conv { maps, kernel } => {
                    if maps == 0 || kernel == 0 {
                        return Err(Error::Size {
                            layer: l,
                            rule: format!("conv needs maps >= 1 and k >= 1, got {maps} {kernel}"),
                        });
                    }
                    if kernel > w_prev {
                        return Err(Error::Size {
                            layer: l,
                            rule: format!("kernel {kernel} exceeds map size {w_prev}"),
                        });
                    }
                    patch_sizes.push(w_prev - (kernel - 1));
                    map_counts.push(maps);
                    last_spatial = l;
                }
                LayerSpec::MaxPool { kernel } => {
                    if kernel < 2 {
                        return Err(Error::Size {
                            layer: l,
                            rule: format!("maxpool needs k >= 2, got {kernel}"),
                        });
                    }
                    if w_prev % kernel != 0 {
                        return Err(Error::Size {
                            layer: l,
                            rule: format!("mod({w_prev},{kernel}) != 0"),
                        });
                    }
                    patch_sizes.push(w_prev / kernel);
                    map_counts.push(maps_prev);
                    last_spatial = l;
                }
                LayerSpec::Fc { neurons } => {
                    if neurons == 0 {
                        return Err(Error::Size {
                            layer: l,
                            rule: "fc needs at least one neuron".into(),
                        });
                    }
                    seen_fc = true;
                    map_counts.push(neurons);
                }
            }
        }
        Ok(Self {
            layers,
            patch_sizes,
            map_counts,
            last_spatial,
            hidden,
            output,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> LayerSpec {
        self.layers[l]
    }

    /// Patch-level map sizes `w_0..=w_L`.
    pub fn patch_sizes(&self) -> &[usize] {
        &self.patch_sizes
    }

    /// Patch size `w_0`.
    pub fn input_size(&self) -> usize {
        self.patch_sizes[0]
    }

    pub fn input_channels(&self) -> usize {
        self.map_counts[0]
    }

    /// Index `L` of the last conv/maxpool layer (0 when there is none).
    pub fn last_spatial(&self) -> usize {
        self.last_spatial
    }

    /// `w_L`, the map size entering the first fc layer.
    pub fn final_patch_size(&self) -> usize {
        self.patch_sizes[self.last_spatial]
    }

    /// Map count (or neuron count for fc layers) at the output of layer `l`.
    pub fn map_count(&self, l: usize) -> usize {
        self.map_counts[l]
    }

    /// Indices of fc layers, in order.
    pub fn fc_layers(&self) -> impl Iterator<Item = usize> + '_ {
        (self.last_spatial + 1)..self.layers.len()
    }

    /// Number of classes the net emits, if it has a classifier.
    pub fn class_count(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::Fc { neurons }) => Some(*neurons),
            _ => None,
        }
    }

    /// `F_l`: the product of `k^2` over pooling layers up to `l`.
    pub fn fragment_count(&self, l: usize) -> Result<usize> {
        if l > self.last_spatial {
            return Err(range(
                "layer index",
                format!("{l} is beyond the last conv/pool layer {}", self.last_spatial),
            ));
        }
        Ok(self.layers[1..=l]
            .iter()
            .filter_map(|layer| match layer {
                LayerSpec::MaxPool { kernel } => Some(kernel * kernel),
                _ => None,
            })
            .product())
    }

    /// Product of pooling kernel sizes over all of `1..=L`.
    pub fn total_stride(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|layer| match layer {
                LayerSpec::MaxPool { kernel } => Some(*kernel),
                _ => None,
            })
            .product()
    }

    /// Serializes back to the line format accepted by [`parse_net`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for layer in &self.layers {
            out.push_str(&layer.to_string());
            out.push('\n');
        }
        out.push_str(&format!("activation {} {}\n", self.hidden, self.output));
        out
    }
}

impl FromStr for NetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_net(s)
    }
}

fn parse_count(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("{what} '{tok}' is not a non-negative integer"),
    })
}

/// Parses and validates a network description.
pub fn parse_net(text: &str) -> Result<NetSpec> {
    let mut layers = Vec::new();
    let mut hidden = HiddenActivation::default();
    let mut output = OutputActivation::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let keyword = toks.next().unwrap();
        let layer = match keyword {
            "input" => LayerSpec::Input {
                channels: parse_count(toks.next(), line, "channel count")?,
                size: parse_count(toks.next(), line, "input size")?,
            },
            "conv" => LayerSpec::Conv {
                maps: parse_count(toks.next(), line, "map count")?,
                kernel: parse_count(toks.next(), line, "kernel size")?,
            },
            "maxpool" => LayerSpec::MaxPool {
                kernel: parse_count(toks.next(), line, "kernel size")?,
            },
            "fc" => LayerSpec::Fc {
                neurons: parse_count(toks.next(), line, "neuron count")?,
            },
            "activation" => {
                let parse_err = |msg| Error::Parse { line, msg };
                hidden = toks
                    .next()
                    .ok_or_else(|| parse_err("missing hidden activation".into()))?
                    .parse()
                    .map_err(parse_err)?;
                output = toks
                    .next()
                    .ok_or_else(|| parse_err("missing output activation".into()))?
                    .parse()
                    .map_err(parse_err)?;
                if let Some(extra) = toks.next() {
                    return Err(parse_err(format!("unexpected token '{extra}'")));
                }
                continue;
            }
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown keyword '{other}'"),
                })
            }
        };
        if let Some(extra) = toks.next() {
            return Err(Error::Parse {
                line,
                msg: format!("unexpected token '{extra}'"),
            });
        }
        layers.push(layer);
    }
    NetSpec::new(layers, hidden, output)
}
