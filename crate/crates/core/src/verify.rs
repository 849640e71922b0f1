//! Cross-checks between the fragment engine and the patch-level oracle.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::fragment::propagate_trace;
use crate::net::NetSpec;
use crate::output::DenseOutput;
use crate::patch::{forward_patch_trace, prepare_scan};
use crate::tensor::{planes_equal, Comparison, Scalar};
use crate::weights::WeightSet;

/// Outcome of [`crop_correspondence`].
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceReport {
    /// Windows checked at every layer.
    pub windows: usize,
    /// Layers checked, `0..=L`.
    pub layers: usize,
    /// Largest difference between a crop and the patch-level maps.
    pub max_abs_diff: f64,
    /// First failure found, if any.
    pub failure: Option<String>,
}

impl CorrespondenceReport {
    pub fn holds(&self) -> bool {
        self.failure.is_none()
    }
}

/// Checks, after every layer `l` in `0..=L`, that each window's patch-level
/// maps `P_l` equal (within `tol`) the `w_l`x`w_l` crop of exactly one
/// fragment, and that the (fragment, coordinate) pairs holding a full crop
/// are in one-to-one correspondence with the windows of the image.
pub fn crop_correspondence<T: Scalar>(
    net: &NetSpec,
    weights: &WeightSet<T>,
    image: &crate::tensor::PlaneSet<T>,
    pad: bool,
    tol: f64,
) -> Result<CorrespondenceReport> {
    let input = prepare_scan(net, image, pad)?;
    let trace = propagate_trace(net, weights, &input.image)?;
    let w0 = net.input_size();
    let windows: Vec<(usize, usize)> = (0..input.out_height)
        .flat_map(|y| (0..input.out_width).map(move |x| (x, y)))
        .collect();
    let patch_traces = windows
        .iter()
        .map(|&(x, y)| forward_patch_trace(net, weights, &input.image.crop(x, y, w0, w0)?))
        .collect::<Result<Vec<_>>>()?;

    let mut report = CorrespondenceReport {
        windows: windows.len(),
        layers: trace.len(),
        max_abs_diff: 0.0,
        failure: None,
    };
    for (l, state) in trace.iter().enumerate() {
        let w_l = net.patch_sizes()[l];
        // Every (fragment, coordinate) with a full crop must map to a distinct window.
        let mut seen = HashSet::new();
        for (fi, f) in state.fragments.iter().enumerate() {
            if f.width() < w_l || f.height() < w_l {
                continue;
            }
            let (ax, ay) = f.anchor();
            for cy in 0..=f.height() - w_l {
                for cx in 0..=f.width() - w_l {
                    let window = (ax + f.stride() * cx, ay + f.stride() * cy);
                    if window.0 >= input.out_width || window.1 >= input.out_height {
                        report.failure.get_or_insert(format!(
                            "layer {l}: fragment {fi} coordinate ({cx}, {cy}) maps to window {window:?} outside the image"
                        ));
                    } else if !seen.insert(window) {
                        report
                            .failure
                            .get_or_insert(format!("layer {l}: window {window:?} held by two crops"));
                    }
                }
            }
        }
        if seen.len() != windows.len() {
            report.failure.get_or_insert(format!(
                "layer {l}: {} of {} windows covered",
                seen.len(),
                windows.len()
            ));
        }
        for (&(x, y), patch) in windows.iter().zip(&patch_traces) {
            let holders: Vec<_> = state
                .fragments
                .iter()
                .filter_map(|f| f.locate(x, y, w_l).map(|c| (f, c)))
                .collect();
            let [(f, (cx, cy))] = holders.as_slice() else {
                report.failure.get_or_insert(format!(
                    "layer {l}: window ({x}, {y}) found in {} fragments",
                    holders.len()
                ));
                continue;
            };
            let crop = f.maps().crop(*cx, *cy, w_l, w_l)?;
            let cmp = planes_equal(&crop, &patch[l], tol);
            report.max_abs_diff = report.max_abs_diff.max(cmp.max_abs_diff);
            if !cmp.equal {
                report
                    .failure
                    .get_or_insert(format!("layer {l}: window ({x}, {y}) differs: {cmp}"));
            }
        }
    }
    Ok(report)
}

/// Compares two dense outputs over all posteriors.
pub fn compare_outputs<T: Scalar>(a: &DenseOutput<T>, b: &DenseOutput<T>, tol: f64) -> Comparison {
    planes_equal(a.posteriors(), b.posteriors(), tol)
}

/// Errors unless `report` holds.
pub fn require(report: &CorrespondenceReport) -> Result<()> {
    match &report.failure {
        None => Ok(()),
        Some(msg) => Err(Error::Coverage(msg.clone())),
    }
}
