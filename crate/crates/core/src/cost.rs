//! Analytical FLOPS model for patch-based and image-based scanning.
//!
//! Patch-based scanning of `N` windows charges every conv layer
//! `N * |P_{l-1}| * |P_l| * w_l^2 * k_l^2 * 2`.
//!
//! Image-based scanning charges `s_x * s_y * |P_{l-1}| * |P_l| * F_l * k_l^2 * 2`
//! per conv layer. Two size models are available:
//!
//! * [`CostMode::PaperApprox`] treats all fragments as equal squares. The
//!   input side is `s + (w0-1)/2`, conv layers leave it unchanged and each
//!   pooling layer divides it by `k` (floor). Conv layer `l` is charged with
//!   the side entering it.
//! * [`CostMode::Exact`] follows every fragment's true size through the
//!   conv/pool recurrences on the mirror-padded (or unpadded) image,
//!   dropping fragments too small to produce output, and counts the output
//!   positions actually computed. It equals twice the multiply-accumulate
//!   count of the fragment engine.
//!
//! Max-pooling comparisons are left out unless asked for; fc layers are
//! never charged.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::net::{LayerSpec, NetSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostMode {
    PaperApprox,
    /// True fragment sizes for an `s`x`s` image, optionally mirror-padded.
    Exact {
        pad: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostKind {
    Conv,
    /// `k^2 - 1` comparisons per pooled output.
    Pool,
}

/// One row of the report.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCost {
    pub layer_index: usize,
    pub kind: CostKind,
    /// Per-fragment map side entering the layer (largest fragment in exact mode).
    pub s_in: usize,
    pub maps_in: usize,
    pub maps_out: usize,
    pub w_l: usize,
    pub k_l: usize,
    pub fragments: usize,
    pub flops_patch: u64,
    pub flops_image: u64,
    pub speedup: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub mode: CostMode,
    pub image_size: usize,
    pub rows: Vec<LayerCost>,
    pub total_patch: u64,
    pub total_image: u64,
}

impl CostReport {
    pub fn total_speedup(&self) -> f64 {
        self.total_patch as f64 / self.total_image as f64
    }

    pub fn conv_rows(&self) -> impl Iterator<Item = &LayerCost> {
        self.rows.iter().filter(|r| r.kind == CostKind::Conv)
    }

    /// Aligned plain-text table. FLOPS in units of 10^9; patch counts are
    /// truncated to whole units, image counts rounded to one decimal.
    pub fn render_text(&self) -> String {
        let mode = match self.mode {
            CostMode::PaperApprox => "paper-approx",
            CostMode::Exact { pad: true } => "exact, mirror-padded",
            CostMode::Exact { pad: false } => "exact, unpadded",
        };
        let mut out = String::new();
        let _ = writeln!(out, "conv FLOPS for a {0}x{0} image ({mode})", self.image_size);
        let _ = writeln!(
            out,
            "{:<6} {:>6} {:>8} {:>8} {:>5} {:>4} {:>6} {:>16} {:>16} {:>10}",
            "layer", "s_in", "maps_in", "maps_out", "w_l", "k_l", "F_l", "patch[1e9]", "image[1e9]", "speedup"
        );
        for r in &self.rows {
            let label = match r.kind {
                CostKind::Conv => r.layer_index.to_string(),
                CostKind::Pool => format!("{}p", r.layer_index),
            };
            let _ = writeln!(
                out,
                "{:<6} {:>6} {:>8} {:>8} {:>5} {:>4} {:>6} {:>16} {:>16.1} {:>10.1}",
                label,
                r.s_in,
                r.maps_in,
                r.maps_out,
                r.w_l,
                r.k_l,
                r.fragments,
                r.flops_patch / 1_000_000_000,
                r.flops_image as f64 / 1e9,
                r.speedup
            );
        }
        let _ = writeln!(
            out,
            "{:<6} {:>6} {:>8} {:>8} {:>5} {:>4} {:>6} {:>16} {:>16.1} {:>10.1}",
            "total",
            "",
            "",
            "",
            "",
            "",
            "",
            self.total_patch / 1_000_000_000,
            self.total_image as f64 / 1e9,
            self.total_speedup()
        );
        out
    }

    /// Comma-separated rows with raw counts; the last row holds the totals.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("layer,s_in,maps_in,maps_out,w_l,k_l,F_l,flops_patch,flops_image,speedup\n");
        for r in &self.rows {
            let label = match r.kind {
                CostKind::Conv => r.layer_index.to_string(),
                CostKind::Pool => format!("{}p", r.layer_index),
            };
            let _ = writeln!(
                out,
                "{label},{},{},{},{},{},{},{},{},{:.6}",
                r.s_in, r.maps_in, r.maps_out, r.w_l, r.k_l, r.fragments, r.flops_patch, r.flops_image, r.speedup
            );
        }
        let _ = writeln!(
            out,
            "total,,,,,,,{},{},{:.6}",
            self.total_patch,
            self.total_image,
            self.total_speedup()
        );
        out
    }
}

/// Per-layer image-side charge.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageCost {
    pub layer_index: usize,
    pub kind: CostKind,
    pub s_in: usize,
    pub fragments: usize,
    pub flops: u64,
}

fn spatial_layers(net: &NetSpec) -> impl Iterator<Item = (usize, LayerSpec)> + '_ {
    (1..=net.last_spatial()).map(move |l| (l, net.layer(l)))
}

/// Patch-based conv FLOPS for `windows` windows, per conv layer.
pub fn flops_patch_windows(net: &NetSpec, windows: u64) -> Vec<(usize, u64)> {
    spatial_layers(net)
        .filter_map(|(l, layer)| match layer {
            LayerSpec::Conv { maps, kernel } => {
                let w = net.patch_sizes()[l] as u64;
                let k = kernel as u64;
                Some((
                    l,
                    windows * net.map_count(l - 1) as u64 * maps as u64 * w * w * k * k * 2,
                ))
            }
            _ => None,
        })
        .collect()
}

/// Patch-based conv FLOPS for an `s`x`s` image scanned at every pixel (`s^2` windows).
pub fn flops_patch(net: &NetSpec, s: usize) -> Vec<(usize, u64)> {
    flops_patch_windows(net, (s * s) as u64)
}

fn pool_patch_windows(net: &NetSpec, windows: u64) -> Vec<(usize, u64)> {
    spatial_layers(net)
        .filter_map(|(l, layer)| match layer {
            LayerSpec::MaxPool { kernel } => {
                let w = net.patch_sizes()[l] as u64;
                let k = kernel as u64;
                Some((l, windows * net.map_count(l) as u64 * w * w * (k * k - 1)))
            }
            _ => None,
        })
        .collect()
}

fn paper_image_costs(net: &NetSpec, s: usize) -> Vec<ImageCost> {
    let mut side = s + (net.input_size() - 1) / 2;
    let mut fragments = 1usize;
    let mut costs = Vec::new();
    for (l, layer) in spatial_layers(net) {
        match layer {
            LayerSpec::Conv { maps, kernel } => {
                let per_pos = net.map_count(l - 1) as u64 * maps as u64 * (kernel * kernel) as u64 * 2;
                costs.push(ImageCost {
                    layer_index: l,
                    kind: CostKind::Conv,
                    s_in: side,
                    fragments,
                    flops: (side * side) as u64 * fragments as u64 * per_pos,
                });
            }
            LayerSpec::MaxPool { kernel } => {
                let s_in = side;
                side /= kernel;
                fragments *= kernel * kernel;
                costs.push(ImageCost {
                    layer_index: l,
                    kind: CostKind::Pool,
                    s_in,
                    fragments,
                    flops: (side * side) as u64
                        * fragments as u64
                        * net.map_count(l) as u64
                        * (kernel * kernel - 1) as u64,
                });
            }
            _ => unreachable!(),
        }
    }
    costs
}

/// Scanned image size and window count for an `s`x`s` image.
fn exact_geometry(net: &NetSpec, s: usize, pad: bool) -> Result<(usize, u64)> {
    let w0 = net.input_size();
    if pad {
        if w0.is_multiple_of(2) {
            return Err(Error::Architecture(format!(
                "mirror padding needs an odd patch size, got {w0}"
            )));
        }
        let margin = (w0 - 1) / 2;
        if margin > 0 && margin >= s {
            return Err(Error::ImageTooSmall(format!(
                "{s}x{s} image cannot be mirrored by {margin}"
            )));
        }
        Ok((s + 2 * margin, (s * s) as u64))
    } else {
        if s < w0 {
            return Err(Error::ImageTooSmall(format!(
                "{s}x{s} image cannot hold a {w0}x{w0} window"
            )));
        }
        let n = (s - w0 + 1) as u64;
        Ok((s, n * n))
    }
}

fn exact_image_costs(net: &NetSpec, side: usize) -> Result<Vec<ImageCost>> {
    let mut sizes = vec![(side, side)];
    let mut costs = Vec::new();
    for (l, layer) in spatial_layers(net) {
        let k = match layer {
            LayerSpec::Conv { kernel, .. } | LayerSpec::MaxPool { kernel } => kernel,
            _ => unreachable!(),
        };
        sizes.retain(|&(w, h)| w >= k && h >= k);
        if sizes.is_empty() {
            return Err(Error::ImageTooSmall(format!(
                "no fragment is large enough for layer {l}"
            )));
        }
        let s_in = sizes.iter().map(|&(w, _)| w).max().unwrap_or(0);
        match layer {
            LayerSpec::Conv { maps, .. } => {
                let per_pos = net.map_count(l - 1) as u64 * maps as u64 * (k * k) as u64 * 2;
                for size in sizes.iter_mut() {
                    *size = (size.0 - (k - 1), size.1 - (k - 1));
                }
                let positions: u64 = sizes.iter().map(|&(w, h)| (w * h) as u64).sum();
                costs.push(ImageCost {
                    layer_index: l,
                    kind: CostKind::Conv,
                    s_in,
                    fragments: sizes.len(),
                    flops: positions * per_pos,
                });
            }
            LayerSpec::MaxPool { .. } => {
                sizes = sizes
                    .iter()
                    .flat_map(|&(w, h)| (0..k).flat_map(move |oy| (0..k).map(move |ox| ((w - ox) / k, (h - oy) / k))))
                    .filter(|&(w, h)| w > 0 && h > 0)
                    .collect();
                let positions: u64 = sizes.iter().map(|&(w, h)| (w * h) as u64).sum();
                costs.push(ImageCost {
                    layer_index: l,
                    kind: CostKind::Pool,
                    s_in,
                    fragments: sizes.len(),
                    flops: positions * net.map_count(l) as u64 * (k * k - 1) as u64,
                });
            }
            _ => unreachable!(),
        }
    }
    Ok(costs)
}

/// Image-based FLOPS per conv layer, plus pooling rows.
pub fn image_costs(net: &NetSpec, s: usize, mode: CostMode) -> Result<Vec<ImageCost>> {
    match mode {
        CostMode::PaperApprox => Ok(paper_image_costs(net, s)),
        CostMode::Exact { pad } => {
            let (side, _) = exact_geometry(net, s, pad)?;
            exact_image_costs(net, side)
        }
    }
}

/// Image-based conv FLOPS per conv layer.
pub fn flops_image(net: &NetSpec, s: usize, mode: CostMode) -> Result<Vec<(usize, u64)>> {
    Ok(image_costs(net, s, mode)?
        .into_iter()
        .filter(|c| c.kind == CostKind::Conv)
        .map(|c| (c.layer_index, c.flops))
        .collect())
}

/// Full comparison for an `s`x`s` image.
pub fn speedup_report(net: &NetSpec, s: usize, mode: CostMode, include_pooling: bool) -> Result<CostReport> {
    let windows = match mode {
        CostMode::PaperApprox => (s * s) as u64,
        CostMode::Exact { pad } => exact_geometry(net, s, pad)?.1,
    };
    let conv_patch = flops_patch_windows(net, windows);
    let pool_patch = pool_patch_windows(net, windows);
    let mut rows = Vec::new();
    for cost in image_costs(net, s, mode)? {
        let patch = match cost.kind {
            CostKind::Conv => &conv_patch,
            CostKind::Pool if include_pooling => &pool_patch,
            CostKind::Pool => continue,
        };
        let flops_patch = patch
            .iter()
            .find(|(l, _)| *l == cost.layer_index)
            .map(|(_, f)| *f)
            .unwrap_or(0);
        let l = cost.layer_index;
        let k_l = match net.layer(l) {
            LayerSpec::Conv { kernel, .. } | LayerSpec::MaxPool { kernel } => kernel,
            _ => unreachable!(),
        };
        rows.push(LayerCost {
            layer_index: l,
            kind: cost.kind,
            s_in: cost.s_in,
            maps_in: net.map_count(l - 1),
            maps_out: net.map_count(l),
            w_l: net.patch_sizes()[l],
            k_l,
            fragments: cost.fragments,
            flops_patch,
            flops_image: cost.flops,
            speedup: flops_patch as f64 / cost.flops as f64,
        });
    }
    let total_patch = rows.iter().map(|r| r.flops_patch).sum();
    let total_image = rows.iter().map(|r| r.flops_image).sum();
    Ok(CostReport {
        mode,
        image_size: s,
        rows,
        total_patch,
        total_image,
    })
}
