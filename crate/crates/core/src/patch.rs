//! Patch-level forward propagation and the naive sliding-window scanner.
//!
//! This is the reference implementation every optimized path is checked
//! against, so it is kept deliberately plain: explicit loops, one window at
//! a time, no reuse between windows.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::io::mirror_pad_set;
use crate::net::{LayerSpec, NetSpec};
use crate::output::{ClassPosterior, DenseOutput};
use crate::par;
use crate::tensor::{Plane, PlaneSet, Scalar};
use crate::weights::{LayerWeights, WeightSet};

/// Valid (unpadded) correlation of every input map with its kernel, summed
/// over inputs, plus bias, then `activation`.
///
/// Each output value accumulates `bias`, then the products over input maps
/// in index order and, within a kernel, in row-major order.
pub fn conv_forward_patch<T: Scalar>(
    maps: &PlaneSet<T>,
    weights: &LayerWeights<T>,
    activation: Activation,
) -> Result<PlaneSet<T>> {
    let k = weights.kernel;
    let (w, h) = (maps.width(), maps.height());
    if w < k || h < k {
        return Err(Error::Shape(format!("{w}x{h} map is smaller than the {k}x{k} kernel")));
    }
    if maps.count() != weights.inputs {
        return Err(Error::Shape(format!(
            "layer {} expects {} input maps, got {}",
            weights.layer,
            weights.inputs,
            maps.count()
        )));
    }
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut outputs = Vec::with_capacity(weights.outputs);
    for o in 0..weights.outputs {
        let mut data = Vec::with_capacity(ow * oh);
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = weights.biases()[o];
                for (i, input) in maps.planes().iter().enumerate() {
                    let kernel = weights.kernel_of(o, i);
                    for ky in 0..k {
                        for kx in 0..k {
                            acc = acc + kernel[ky * k + kx] * input.get(x + kx, y + ky);
                        }
                    }
                }
                data.push(activation.apply(acc));
            }
        }
        outputs.push(Plane::new(ow, oh, data)?);
    }
    PlaneSet::new(outputs)
}

/// Non-overlapping `k`x`k` max-pooling. Map sizes must be multiples of `k`.
pub fn maxpool_forward_patch<T: Scalar>(maps: &PlaneSet<T>, k: usize) -> Result<PlaneSet<T>> {
    let (w, h) = (maps.width(), maps.height());
    if k == 0 || w % k != 0 || h % k != 0 {
        return Err(Error::Shape(format!(
            "{w}x{h} map is not divisible by pooling size {k}"
        )));
    }
    let (ow, oh) = (w / k, h / k);
    let planes = maps
        .planes()
        .iter()
        .map(|input| {
            Plane::from_fn(ow, oh, |x, y| {
                let mut m = input.get(k * x, k * y);
                for dy in 0..k {
                    for dx in 0..k {
                        m = m.max(input.get(k * x + dx, k * y + dy));
                    }
                }
                m
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PlaneSet::new(planes)
}

/// Flattens maps plane-major, row-major within a plane.
pub fn flatten<T: Scalar>(maps: &PlaneSet<T>) -> Vec<T> {
    maps.planes().iter().flat_map(|p| p.data().iter().copied()).collect()
}

/// `activation(W x + b)`, accumulating `b` first and then inputs in order.
pub fn fc_forward<T: Scalar>(input: &[T], weights: &LayerWeights<T>, activation: Activation) -> Result<Vec<T>> {
    if input.len() != weights.inputs * weights.kernel * weights.kernel {
        return Err(Error::Shape(format!(
            "layer {} expects {} inputs, got {}",
            weights.layer,
            weights.inputs * weights.kernel * weights.kernel,
            input.len()
        )));
    }
    let mut out: Vec<T> = (0..weights.outputs)
        .map(|o| {
            let mut acc = weights.biases()[o];
            for (&w, &x) in weights.row(o).iter().zip(input) {
                acc = acc + w * x;
            }
            acc
        })
        .collect();
    activation.apply_vec(&mut out);
    Ok(out)
}

fn layer_weights<T: Scalar>(weights: &WeightSet<T>, l: usize) -> Result<&LayerWeights<T>> {
    weights
        .for_layer(l)
        .ok_or_else(|| Error::Shape(format!("no weights for layer {l}")))
}

/// Activation used by fc layer `l`.
pub(crate) fn fc_activation(net: &NetSpec, l: usize) -> Activation {
    if l + 1 == net.layers().len() {
        net.output.into()
    } else {
        net.hidden.into()
    }
}

/// Patch-level maps `P_0..=P_L` for one `w0`x`w0` patch.
pub fn forward_patch_trace<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    patch: &PlaneSet<T>,
) -> Result<Vec<PlaneSet<T>>> {
    let w0 = net.input_size();
    if patch.width() != w0 || patch.height() != w0 {
        return Err(Error::Shape(format!(
            "patch is {}x{}, the net expects {w0}x{w0}",
            patch.width(),
            patch.height()
        )));
    }
    if patch.count() != net.input_channels() {
        return Err(Error::Shape(format!(
            "patch has {} channels, the net expects {}",
            patch.count(),
            net.input_channels()
        )));
    }
    let mut trace = vec![patch.clone()];
    for l in 1..=net.last_spatial() {
        let prev = trace.last().unwrap();
        let next = match net.layer(l) {
            LayerSpec::Conv { .. } => conv_forward_patch(prev, layer_weights(weights, l)?, net.hidden.into())?,
            LayerSpec::MaxPool { kernel } => maxpool_forward_patch(prev, kernel)?,
            _ => unreachable!("layers 1..=L are conv or maxpool"),
        };
        trace.push(next);
    }
    Ok(trace)
}

/// Runs one patch through the whole net.
pub fn forward_patch<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    patch: &PlaneSet<T>,
) -> Result<ClassPosterior<T>> {
    if net.class_count().is_none() {
        return Err(Error::Architecture("net has no fully connected classifier".into()));
    }
    let trace = forward_patch_trace(net, weights, patch)?;
    let mut values = flatten(trace.last().unwrap());
    for l in net.fc_layers() {
        values = fc_forward(&values, layer_weights(weights, l)?, fc_activation(net, l))?;
    }
    Ok(ClassPosterior { values })
}

/// Image actually scanned, plus the output size.
pub(crate) struct ScanInput<T> {
    pub image: PlaneSet<T>,
    pub out_width: usize,
    pub out_height: usize,
}

/// Pads (if asked) and checks the image against the net.
///
/// With `pad`, the image is mirrored by `(w0-1)/2` on every side so each
/// original pixel owns the window centered on it; this needs an odd `w0`.
pub(crate) fn prepare_scan<T: Scalar>(net: &NetSpec, image: &PlaneSet<T>, pad: bool) -> Result<ScanInput<T>> {
    let w0 = net.input_size();
    if image.count() != net.input_channels() {
        return Err(Error::Shape(format!(
            "image has {} channels, the net expects {}",
            image.count(),
            net.input_channels()
        )));
    }
    if pad {
        if w0.is_multiple_of(2) {
            return Err(Error::Architecture(format!(
                "mirror-padded scans need an odd patch size, got {w0}"
            )));
        }
        let image = mirror_pad_set(image, (w0 - 1) / 2)?;
        let out_width = image.width() - w0 + 1;
        let out_height = image.height() - w0 + 1;
        return Ok(ScanInput {
            image,
            out_width,
            out_height,
        });
    }
    if image.width() < w0 || image.height() < w0 {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image cannot hold a {w0}x{w0} window",
            image.width(),
            image.height()
        )));
    }
    Ok(ScanInput {
        out_width: image.width() - w0 + 1,
        out_height: image.height() - w0 + 1,
        image: image.clone(),
    })
}

/// Classifies every window independently.
///
/// Without `pad` the output is `(W-w0+1)x(H-w0+1)` and pixel `(x, y)` holds
/// the window with top-left corner `(x, y)`. With `pad` the output is `WxH`
/// and pixel `(x, y)` holds the window centered on it.
pub fn scan_naive<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    image: &PlaneSet<T>,
    pad: bool,
) -> Result<DenseOutput<T>> {
    let ScanInput {
        image,
        out_width,
        out_height,
    } = prepare_scan(net, image, pad)?;
    let w0 = net.input_size();
    let rows = par::map_range(out_height, |y| {
        (0..out_width)
            .map(|x| {
                let patch = image.crop(x, y, w0, w0)?;
                forward_patch(net, weights, &patch).map(|p| p.values)
            })
            .collect::<Result<Vec<_>>>()
    });
    let mut pixels = Vec::with_capacity(out_width * out_height);
    for row in rows {
        pixels.extend(row?);
    }
    DenseOutput::from_pixels(out_width, out_height, &pixels)
}
