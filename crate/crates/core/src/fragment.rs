//! Image-level forward propagation over extended maps.
//!
//! Convolutions run once over whole (extended) maps instead of once per
//! window. Each max-pooling layer with kernel `k` splits every fragment into
//! `k^2` fragments, one per start offset in `{0..k-1}^2`, so that no window
//! loses the pooling grid it would have seen at patch level. Fully connected
//! layers become sliding dot products over each fragment. Finally every
//! window's output is gathered back into a dense map using each fragment's
//! anchor and stride.
//!
//! All arithmetic reproduces the accumulation order of [`crate::patch`], so
//! both engines agree to the last bit on the same platform.

use crate::activation::{softmax, Activation};
use crate::error::{Error, Result};
use crate::net::{LayerSpec, NetSpec};
use crate::output::DenseOutput;
use crate::par;
use crate::patch::{fc_activation, prepare_scan};
use crate::tensor::{Fragment, FragmentLayerState, Plane, PlaneSet, Scalar};
use crate::weights::{LayerWeights, WeightSet};

/// Counters gathered while scanning.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScanStats {
    /// Multiply-accumulates executed by conv layers.
    pub conv_macs: u64,
    /// Multiply-accumulates executed by fc layers.
    pub fc_macs: u64,
    /// Fragments present after each layer `0..=L`.
    pub fragments_per_layer: Vec<usize>,
    /// Fragments discarded because they were too small to yield any output.
    pub dropped_fragments: usize,
}

/// Order in which fragments are pushed through the layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalOrder {
    /// Layer by layer across all fragments.
    #[default]
    BreadthFirst,
    /// Each fragment runs to the end before its siblings.
    DepthFirst,
}

/// Valid correlation over whole maps.
///
/// `weights` is laid out output-major, then input, then row-major `k`x`k`.
/// Each output pixel accumulates its bias, then products in (input, ky, kx)
/// order, matching [`crate::patch::conv_forward_patch`]. Returns the output
/// maps and the number of multiply-accumulates performed.
fn correlate<T: Scalar>(
    maps: &PlaneSet<T>,
    outputs: usize,
    k: usize,
    weights: &[T],
    biases: &[T],
    activation: Activation,
) -> (Vec<Plane<T>>, u64) {
    let inputs = maps.count();
    let (ow, oh) = (maps.width() - k + 1, maps.height() - k + 1);
    let kk = k * k;
    let results = par::map_range(outputs, |o| {
        let mut out = vec![biases[o]; ow * oh];
        let mut macs = 0u64;
        for (i, input) in maps.planes().iter().enumerate() {
            let kernel = &weights[(o * inputs + i) * kk..(o * inputs + i + 1) * kk];
            for ky in 0..k {
                for kx in 0..k {
                    let w = kernel[ky * k + kx];
                    for (y, dst) in out.chunks_exact_mut(ow).enumerate() {
                        let src = &input.row(y + ky)[kx..kx + ow];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + w * s;
                        }
                        macs += ow as u64;
                    }
                }
            }
        }
        if activation.is_pointwise() && activation != Activation::Identity {
            out.iter_mut().for_each(|v| *v = activation.apply(*v));
        }
        (Plane::from_raw(ow, oh, out), macs)
    });
    let macs = results.iter().map(|(_, m)| m).sum();
    let planes: Vec<Plane<T>> = results.into_iter().map(|(p, _)| p).collect();
    let planes = if activation == Activation::Softmax {
        softmax_across(planes)
    } else {
        planes
    };
    (planes, macs)
}

/// Softmax over planes at every pixel.
fn softmax_across<T: Scalar>(planes: Vec<Plane<T>>) -> Vec<Plane<T>> {
    let (w, h) = (planes[0].width(), planes[0].height());
    let mut data: Vec<Vec<T>> = planes.into_iter().map(Plane::into_data).collect();
    let mut scratch = vec![T::zero(); data.len()];
    for i in 0..w * h {
        for (s, d) in scratch.iter_mut().zip(&data) {
            *s = d[i];
        }
        softmax(&mut scratch);
        for (s, d) in scratch.iter().zip(data.iter_mut()) {
            d[i] = *s;
        }
    }
    data.into_iter().map(|d| Plane::from_raw(w, h, d)).collect()
}

fn conv_fragment<T: Scalar>(
    fragment: &Fragment<T>,
    weights: &LayerWeights<T>,
    activation: Activation,
) -> (Fragment<T>, u64) {
    let (planes, macs) = correlate(
        fragment.maps(),
        weights.outputs,
        weights.kernel,
        weights.weights(),
        weights.biases(),
        activation,
    );
    (fragment.with_maps(PlaneSet::from_raw(planes)), macs)
}

fn check_fits<T: Scalar>(state: &FragmentLayerState<T>, window: usize, what: &str) -> Result<()> {
    if let Some((i, f)) = state
        .fragments
        .iter()
        .enumerate()
        .find(|(_, f)| f.width() < window || f.height() < window)
    {
        return Err(Error::ImageTooSmall(format!(
            "fragment {i} is {}x{}, smaller than the {window}x{window} {what}",
            f.width(),
            f.height()
        )));
    }
    Ok(())
}

/// Applies a conv layer to every fragment. Fragment count, anchors and
/// strides are unchanged; map sizes shrink by `k-1`. Also returns the
/// multiply-accumulate count.
pub fn conv_forward_extended<T: Scalar>(
    state: &FragmentLayerState<T>,
    weights: &LayerWeights<T>,
    activation: Activation,
) -> Result<(FragmentLayerState<T>, u64)> {
    check_fits(state, weights.kernel, "kernel")?;
    if let Some(f) = state.fragments.iter().find(|f| f.maps().count() != weights.inputs) {
        return Err(Error::Shape(format!(
            "layer {} expects {} input maps, fragment has {}",
            weights.layer,
            weights.inputs,
            f.maps().count()
        )));
    }
    let results = par::map_slice(&state.fragments, |f| conv_fragment(f, weights, activation));
    let macs = results.iter().map(|(_, m)| m).sum();
    Ok((
        FragmentLayerState {
            fragments: results.into_iter().map(|(f, _)| f).collect(),
            layer_index: weights.layer,
        },
        macs,
    ))
}

/// Pools one plane starting at offset `(ox, oy)`. `None` if the output
/// would be empty.
fn pool_plane<T: Scalar>(input: &Plane<T>, k: usize, ox: usize, oy: usize) -> Option<Plane<T>> {
    let ow = input.width().checked_sub(ox)? / k;
    let oh = input.height().checked_sub(oy)? / k;
    if ow == 0 || oh == 0 {
        return None;
    }
    let mut data = Vec::with_capacity(ow * oh);
    for yb in 0..oh {
        let top = oy + k * yb;
        let first = input.row(top);
        data.extend((0..ow).map(|xb| first[ox + k * xb]));
        let out_row = &mut data[yb * ow..];
        for y in top..top + k {
            let row = &input.row(y)[ox..ox + k * ow];
            for (m, block) in out_row.iter_mut().zip(row.chunks_exact(k)) {
                for &v in block {
                    *m = m.max(v);
                }
            }
        }
    }
    Some(Plane::from_raw(ow, oh, data))
}

/// Splits one fragment into up to `k^2` pooled fragments, one per offset
/// `(ox, oy)` with `ox` varying fastest. Offsets whose output would be empty
/// are skipped.
fn pool_fragment<T: Scalar>(fragment: &Fragment<T>, k: usize) -> Vec<Fragment<T>> {
    let (ax, ay) = fragment.anchor();
    let stride = fragment.stride();
    let mut out = Vec::with_capacity(k * k);
    for oy in 0..k {
        for ox in 0..k {
            let planes: Option<Vec<_>> = fragment
                .maps()
                .planes()
                .iter()
                .map(|p| pool_plane(p, k, ox, oy))
                .collect();
            if let Some(planes) = planes {
                out.push(Fragment::from_raw(
                    PlaneSet::from_raw(planes),
                    ax + ox * stride,
                    ay + oy * stride,
                    stride * k,
                ));
            }
        }
    }
    out
}

/// Max-pools every fragment at all `k^2` offsets.
///
/// The output fragment for offset `(ox, oy)` has size
/// `div(s_x - ox, k) x div(s_y - oy, k)`; its pixel `(xb, yb)` is the maximum
/// over input `x` in `ox + k*xb ..= ox + k*xb + k - 1` (likewise `y`). The
/// leftmost `ox` columns, top `oy` rows and the remainder strips are
/// ignored. Offsets that would give an empty map are dropped.
pub fn pool_forward_fragment<T: Scalar>(state: &FragmentLayerState<T>, k: usize) -> Result<FragmentLayerState<T>> {
    if k < 2 {
        return Err(Error::Shape(format!("pooling size must be at least 2, got {k}")));
    }
    check_fits(state, k, "pooling window")?;
    let split = par::map_slice(&state.fragments, |f| pool_fragment(f, k));
    Ok(FragmentLayerState {
        fragments: split.into_iter().flatten().collect(),
        layer_index: state.layer_index + 1,
    })
}

/// Applies all fc layers densely. The first fc layer slides a
/// `w_L`x`w_L` window over each fragment, flattening it in the patch
/// engine's order; later layers act as 1x1 maps. Returns the final state
/// (one plane per output neuron) and the fc multiply-accumulate count.
pub fn fc_forward_dense<T: Scalar>(
    state: &FragmentLayerState<T>,
    net: &NetSpec,
    weights: &WeightSet<T>,
) -> Result<(FragmentLayerState<T>, u64)> {
    let w_l = net.final_patch_size();
    check_fits(state, w_l, "fc window")?;
    let layers = net
        .fc_layers()
        .map(|l| {
            weights
                .for_layer(l)
                .map(|w| (w, fc_activation(net, l)))
                .ok_or_else(|| Error::Shape(format!("no weights for layer {l}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() {
        return Err(Error::Architecture("net has no fully connected classifier".into()));
    }
    let maps_l = net.map_count(net.last_spatial());
    if layers[0].0.inputs != maps_l * w_l * w_l {
        return Err(Error::Shape(format!(
            "first fc layer expects {} inputs, the net provides {}",
            layers[0].0.inputs,
            maps_l * w_l * w_l
        )));
    }
    let results = par::map_slice(&state.fragments, |fragment| {
        let mut maps = fragment.maps().clone();
        let mut macs = 0;
        for (idx, (w, activation)) in layers.iter().enumerate() {
            let k = if idx == 0 { w_l } else { 1 };
            let (planes, m) = correlate(&maps, w.outputs, k, w.weights(), w.biases(), *activation);
            maps = PlaneSet::from_raw(planes);
            macs += m;
        }
        (fragment.with_maps(maps), macs)
    });
    let macs = results.iter().map(|(_, m)| m).sum();
    Ok((
        FragmentLayerState {
            fragments: results.into_iter().map(|(f, _)| f).collect(),
            layer_index: net.layers().len() - 1,
        },
        macs,
    ))
}

/// Gathers per-window outputs into a dense `out_w`x`out_h` map. The window
/// with top-left `(x, y)` is read from the fragment whose anchor is
/// congruent to `(x, y)` modulo its stride.
pub fn reassemble<T: Scalar>(state: &FragmentLayerState<T>, out_w: usize, out_h: usize) -> Result<DenseOutput<T>> {
    let first = state
        .fragments
        .first()
        .ok_or_else(|| Error::Coverage("no fragments to reassemble".into()))?;
    let stride = first.stride();
    let classes = first.maps().count();
    let mut by_residue: Vec<Option<&Fragment<T>>> = vec![None; stride * stride];
    for f in &state.fragments {
        if f.stride() != stride || f.maps().count() != classes {
            return Err(Error::Coverage("fragments disagree on stride or output count".into()));
        }
        let (ax, ay) = f.anchor();
        let slot = &mut by_residue[ay * stride + ax];
        if slot.is_some() {
            return Err(Error::Coverage(format!("two fragments anchored at ({ax}, {ay})")));
        }
        *slot = Some(f);
    }
    let mut planes = vec![Vec::with_capacity(out_w * out_h); classes];
    for y in 0..out_h {
        for x in 0..out_w {
            let (f, (cx, cy)) = by_residue[(y % stride) * stride + x % stride]
                .and_then(|f| f.locate(x, y, 1).map(|c| (f, c)))
                .ok_or_else(|| Error::Coverage(format!("window ({x}, {y}) is not covered by any fragment")))?;
            for (plane, src) in planes.iter_mut().zip(f.maps().planes()) {
                plane.push(src.get(cx, cy));
            }
        }
    }
    let planes = planes
        .into_iter()
        .map(|data| Plane::new(out_w, out_h, data))
        .collect::<Result<Vec<_>>>()?;
    Ok(DenseOutput::from_posteriors(PlaneSet::new(planes)?))
}

/// Drops fragments smaller than `window` in either dimension; they hold no
/// complete window. Returns how many were dropped.
fn retain_fitting<T: Scalar>(fragments: &mut Vec<Fragment<T>>, window: usize) -> usize {
    let before = fragments.len();
    fragments.retain(|f| f.width() >= window && f.height() >= window);
    before - fragments.len()
}

/// Minimum fragment size a layer needs to produce any output.
fn layer_window(layer: LayerSpec) -> usize {
    match layer {
        LayerSpec::Conv { kernel, .. } | LayerSpec::MaxPool { kernel } => kernel,
        _ => 1,
    }
}

fn conv_weights<T: Scalar>(weights: &WeightSet<T>, l: usize) -> Result<&LayerWeights<T>> {
    weights
        .for_layer(l)
        .ok_or_else(|| Error::Shape(format!("no weights for layer {l}")))
}

/// Runs layer `l` (conv or maxpool) over a state, after dropping fragments
/// too small for it.
fn step<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    mut state: FragmentLayerState<T>,
    l: usize,
    stats: &mut ScanStats,
) -> Result<FragmentLayerState<T>> {
    let layer = net.layer(l);
    stats.dropped_fragments += retain_fitting(&mut state.fragments, layer_window(layer));
    if state.is_empty() {
        return Err(Error::ImageTooSmall(format!(
            "no fragment is large enough for layer {l}"
        )));
    }
    let mut next = match layer {
        LayerSpec::Conv { .. } => {
            let (next, macs) = conv_forward_extended(&state, conv_weights(weights, l)?, net.hidden.into())?;
            stats.conv_macs += macs;
            next
        }
        LayerSpec::MaxPool { kernel } => pool_forward_fragment(&state, kernel)?,
        _ => unreachable!("layers 1..=L are conv or maxpool"),
    };
    next.layer_index = l;
    Ok(next)
}

/// States after every layer `0..=L` for an already padded image. Breadth-first.
pub fn propagate_trace<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    image: &PlaneSet<T>,
) -> Result<Vec<FragmentLayerState<T>>> {
    let mut stats = ScanStats::default();
    let mut trace = vec![FragmentLayerState::from_image(image.clone())];
    for l in 1..=net.last_spatial() {
        let next = step(net, weights, trace.last().unwrap().clone(), l, &mut stats)?;
        trace.push(next);
    }
    Ok(trace)
}

fn propagate_breadth_first<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    image: PlaneSet<T>,
    stats: &mut ScanStats,
) -> Result<FragmentLayerState<T>> {
    let mut state = FragmentLayerState::from_image(image);
    stats.fragments_per_layer.push(state.len());
    for l in 1..=net.last_spatial() {
        state = step(net, weights, state, l, stats)?;
        stats.fragments_per_layer.push(state.len());
    }
    Ok(state)
}

fn propagate_depth_first<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    fragment: Fragment<T>,
    l: usize,
    stats: &mut ScanStats,
) -> Result<Vec<Fragment<T>>> {
    if l > net.last_spatial() {
        return Ok(vec![fragment]);
    }
    let state = FragmentLayerState {
        fragments: vec![fragment],
        layer_index: l - 1,
    };
    let mut local = ScanStats::default();
    let next = match step(net, weights, state, l, &mut local) {
        Ok(next) => next,
        // A single branch running dry is not an error for the whole scan.
        Err(Error::ImageTooSmall(_)) => {
            stats.dropped_fragments += 1;
            return Ok(Vec::new());
        }
        Err(e) => return Err(e),
    };
    stats.conv_macs += local.conv_macs;
    stats.dropped_fragments += local.dropped_fragments;
    stats.fragments_per_layer[l] += next.len();
    let results = par::map_slice(&next.fragments, |child| {
        let mut child_stats = ScanStats {
            fragments_per_layer: vec![0; net.last_spatial() + 1],
            ..ScanStats::default()
        };
        propagate_depth_first(net, weights, child.clone(), l + 1, &mut child_stats).map(|f| (f, child_stats))
    });
    let mut finals = Vec::new();
    for result in results {
        let (fragments, child_stats) = result?;
        stats.conv_macs += child_stats.conv_macs;
        stats.dropped_fragments += child_stats.dropped_fragments;
        for (total, n) in stats
            .fragments_per_layer
            .iter_mut()
            .zip(child_stats.fragments_per_layer)
        {
            *total += n;
        }
        finals.extend(fragments);
    }
    Ok(finals)
}

/// Dense scan with instrumentation and a chosen evaluation order.
pub fn scan_fragment_with<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    image: &PlaneSet<T>,
    pad: bool,
    order: EvalOrder,
) -> Result<(DenseOutput<T>, ScanStats)> {
    weights.check_against(net)?;
    if net.class_count().is_none() {
        return Err(Error::Architecture("net has no fully connected classifier".into()));
    }
    let input = prepare_scan(net, image, pad)?;
    let mut stats = ScanStats::default();
    let mut state = match order {
        EvalOrder::BreadthFirst => propagate_breadth_first(net, weights, input.image, &mut stats)?,
        EvalOrder::DepthFirst => {
            stats.fragments_per_layer = vec![0; net.last_spatial() + 1];
            stats.fragments_per_layer[0] = 1;
            let fragments = propagate_depth_first(net, weights, Fragment::whole_image(input.image), 1, &mut stats)?;
            if fragments.is_empty() {
                return Err(Error::ImageTooSmall("every fragment was dropped".into()));
            }
            FragmentLayerState {
                fragments,
                layer_index: net.last_spatial(),
            }
        }
    };
    stats.dropped_fragments += retain_fitting(&mut state.fragments, net.final_patch_size());
    let (state, fc_macs) = fc_forward_dense(&state, net, weights)?;
    stats.fc_macs = fc_macs;
    let output = reassemble(&state, input.out_width, input.out_height)?;
    Ok((output, stats))
}

/// Dense scan with the same contract as [`crate::patch::scan_naive`].
pub fn scan_fragment<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    image: &PlaneSet<T>,
    pad: bool,
) -> Result<DenseOutput<T>> {
    scan_fragment_with(net, weights, image, pad, EvalOrder::BreadthFirst).map(|(out, _)| out)
}
