//! Layer parameters, deterministic synthetic initialization and the FSW1
//! weight file.
//!
//! FSW1 layout (all little-endian):
//!
//! ```text
//! "FSW1"
//! repeated for every conv and fc layer, in layer order:
//!     u32  layer index
//!     u64  value count
//!     f32  values: kernels (output-major, then input, then row-major), then biases
//! ```

use crate::error::{Error, Result};
use crate::net::{LayerSpec, NetSpec};
use crate::rng::XorShift64Star;
use crate::tensor::Scalar;

pub const WEIGHT_MAGIC: &[u8; 4] = b"FSW1";

/// Parameters of one conv or fc layer.
///
/// For conv layers `inputs` is the input map count and `kernel` the kernel
/// width. For fc layers `inputs` is the flattened input length and `kernel`
/// is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<T> {
    pub layer: usize,
    pub outputs: usize,
    pub inputs: usize,
    pub kernel: usize,
    weights: Vec<T>,
    biases: Vec<T>,
}

impl<T: Scalar> LayerWeights<T> {
    pub fn new(
        layer: usize,
        outputs: usize,
        inputs: usize,
        kernel: usize,
        weights: Vec<T>,
        biases: Vec<T>,
    ) -> Result<Self> {
        if weights.len() != outputs * inputs * kernel * kernel || biases.len() != outputs {
            return Err(Error::Shape(format!(
                "layer {layer}: expected {} weights and {outputs} biases, got {} and {}",
                outputs * inputs * kernel * kernel,
                weights.len(),
                biases.len()
            )));
        }
        Ok(Self {
            layer,
            outputs,
            inputs,
            kernel,
            weights,
            biases,
        })
    }

    /// All weights feeding output `o`.
    #[inline]
    pub fn row(&self, o: usize) -> &[T] {
        let n = self.inputs * self.kernel * self.kernel;
        &self.weights[o * n..(o + 1) * n]
    }

    /// The `kernel`x`kernel` values connecting input `i` to output `o`.
    #[inline]
    pub fn kernel_of(&self, o: usize, i: usize) -> &[T] {
        let kk = self.kernel * self.kernel;
        let start = (o * self.inputs + i) * kk;
        &self.weights[start..start + kk]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn biases(&self) -> &[T] {
        &self.biases
    }

    pub fn value_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn cast<U: Scalar>(&self) -> LayerWeights<U> {
        LayerWeights {
            layer: self.layer,
            outputs: self.outputs,
            inputs: self.inputs,
            kernel: self.kernel,
            weights: self.weights.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            biases: self.biases.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Parameters for every conv and fc layer of a net.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet<T> {
    layers: Vec<LayerWeights<T>>,
}

/// `(layer, outputs, inputs, kernel)` for each parameterized layer.
fn layer_shapes(net: &NetSpec) -> Vec<(usize, usize, usize, usize)> {
    let mut shapes = Vec::new();
    let mut first_fc = true;
    for (l, layer) in net.layers().iter().enumerate() {
        match *layer {
            LayerSpec::Conv { maps, kernel } => {
                shapes.push((l, maps, net.map_count(l - 1), kernel));
            }
            LayerSpec::Fc { neurons } => {
                let inputs = if first_fc {
                    let w = net.final_patch_size();
                    net.map_count(net.last_spatial()) * w * w
                } else {
                    net.map_count(l - 1)
                };
                first_fc = false;
                shapes.push((l, neurons, inputs, 1));
            }
            _ => {}
        }
    }
    shapes
}

impl<T: Scalar> WeightSet<T> {
    /// Builds a weight set from a generator called once per value, in file order.
    pub fn generate(net: &NetSpec, mut value: impl FnMut() -> T) -> Self {
        let layers = layer_shapes(net)
            .into_iter()
            .map(|(layer, outputs, inputs, kernel)| {
                let weights = (0..outputs * inputs * kernel * kernel).map(|_| value()).collect();
                let biases = (0..outputs).map(|_| value()).collect();
                LayerWeights {
                    layer,
                    outputs,
                    inputs,
                    kernel,
                    weights,
                    biases,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(net: &NetSpec) -> Self {
        Self::generate(net, T::zero)
    }

    pub fn from_layers(net: &NetSpec, layers: Vec<LayerWeights<T>>) -> Result<Self> {
        let set = Self { layers };
        set.check_against(net)?;
        Ok(set)
    }

    pub fn layers(&self) -> &[LayerWeights<T>] {
        &self.layers
    }

    /// Weights of network layer `l`, if it is parameterized.
    pub fn for_layer(&self, l: usize) -> Option<&LayerWeights<T>> {
        self.layers.iter().find(|w| w.layer == l)
    }

    pub fn value_count(&self) -> usize {
        self.layers.iter().map(LayerWeights::value_count).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }

    pub fn check_against(&self, net: &NetSpec) -> Result<()> {
        let shapes = layer_shapes(net);
        if shapes.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "net has {} parameterized layers, weights have {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (&(layer, outputs, inputs, kernel), w) in shapes.iter().zip(&self.layers) {
            if (w.layer, w.outputs, w.inputs, w.kernel) != (layer, outputs, inputs, kernel) {
                return Err(Error::Shape(format!(
                    "layer {layer}: expected {outputs}x{inputs}x{kernel}^2 parameters, got layer {} with {}x{}x{}^2",
                    w.layer, w.outputs, w.inputs, w.kernel
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> WeightSet<U> {
        WeightSet {
            layers: self.layers.iter().map(LayerWeights::cast).collect(),
        }
    }

    /// Encodes as FSW1. Values are stored as `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.layers.len() * 12 + self.value_count() * 4);
        out.extend_from_slice(WEIGHT_MAGIC);
        for layer in &self.layers {
            out.extend_from_slice(&(layer.layer as u32).to_le_bytes());
            out.extend_from_slice(&(layer.value_count() as u64).to_le_bytes());
            for v in layer.weights.iter().chain(&layer.biases) {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        out
    }

    /// Decodes an FSW1 buffer and checks it against `net`.
    pub fn from_bytes(net: &NetSpec, bytes: &[u8]) -> Result<Self> {
        let fail = |msg: String| Error::Format { format: "FSW1", msg };
        let rest = bytes
            .strip_prefix(WEIGHT_MAGIC.as_slice())
            .ok_or_else(|| fail("missing FSW1 magic".into()))?;
        let mut cursor = Cursor { buf: rest, pos: 0 };
        let mut layers = Vec::new();
        for (layer, outputs, inputs, kernel) in layer_shapes(net) {
            let index = cursor
                .u32()
                .ok_or_else(|| fail(format!("truncated header for layer {layer}")))?;
            let count = cursor
                .u64()
                .ok_or_else(|| fail(format!("truncated header for layer {layer}")))?;
            if index as usize != layer {
                return Err(fail(format!("expected layer {layer}, found layer {index}")));
            }
            let n_weights = outputs * inputs * kernel * kernel;
            if count != (n_weights + outputs) as u64 {
                return Err(fail(format!(
                    "layer {layer}: expected {} values, found {count}",
                    n_weights + outputs
                )));
            }
            let mut values = Vec::with_capacity(count as usize);
            for _ in 0..count {
                let v = cursor
                    .f32()
                    .ok_or_else(|| fail(format!("truncated values for layer {layer}")))?;
                values.push(T::from_f32(v));
            }
            let biases = values.split_off(n_weights);
            layers.push(LayerWeights {
                layer,
                outputs,
                inputs,
                kernel,
                weights: values,
                biases,
            });
        }
        if cursor.pos != cursor.buf.len() {
            return Err(fail(format!("{} trailing bytes", cursor.buf.len() - cursor.pos)));
        }
        Ok(Self { layers })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let bytes = self.buf.get(self.pos..self.pos + N)?;
        self.pos += N;
        bytes.try_into().ok()
    }

    fn u32(&mut self) -> Option<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> Option<f32> {
        self.take().map(f32::from_le_bytes)
    }
}

/// Deterministic weights uniform in `[-0.5, 0.5)` drawn from
/// [`XorShift64Star`] seeded with `seed`, in FSW1 value order.
///
/// Every value is a multiple of 2^-24, so the `f32` and `f64` sets hold
/// identical numbers.
pub fn init_weights<T: Scalar>(net: &NetSpec, seed: u64) -> WeightSet<T> {
    let mut rng = XorShift64Star::new(seed);
    WeightSet::generate(net, || T::from_f32(rng.next_centered_f32()))
}
