//! Dense sliding-window inference for CNNs with interleaved convolution and
//! max-pooling layers.
//!
//! Scanning an image with a window classifier naively repeats almost every
//! convolution once per overlapping window. [`fragment::scan_fragment`]
//! instead convolves whole images once and splits the maps at every pooling
//! layer into one fragment per pooling offset, so each window still sees the
//! exact pooling grid it would see on its own. The result is identical to
//! [`patch::scan_naive`], which evaluates every window independently and is
//! kept as the correctness oracle. [`cost`] predicts the work of both.
//!
//! ```
//! use fragscan_core::{init_weights, parse_net, scan_fragment, scan_naive, Plane, PlaneSet};
//!
//! let net = parse_net("input 1 8\nconv 3 3\nmaxpool 2\nfc 4\nfc 2\n").unwrap();
//! let weights = init_weights::<f64>(&net, 7);
//! let image = PlaneSet::single(Plane::from_fn(20, 20, |x, y| ((x * y) % 5) as f64 / 5.0).unwrap());
//!
//! let fast = scan_fragment(&net, &weights, &image, false).unwrap();
//! let slow = scan_naive(&net, &weights, &image, false).unwrap();
//! assert_eq!(fast, slow);
//! ```
//!
//! With the default `parallel` feature, windows and fragments are processed
//! on rayon; without it everything runs sequentially. Results are identical
//! either way.

pub mod activation;
pub mod cost;
pub mod error;
pub mod fragment;
pub mod io;
pub mod net;
pub mod output;
pub mod par;
pub mod patch;
pub mod rng;
pub mod tensor;
pub mod verify;
pub mod weights;

pub use activation::Activation;
pub use cost::{flops_image, flops_patch, speedup_report, CostKind, CostMode, CostReport, LayerCost};
pub use error::{Error, Result};
pub use fragment::{
    conv_forward_extended, fc_forward_dense, pool_forward_fragment, propagate_trace, reassemble, scan_fragment,
    scan_fragment_with, EvalOrder, ScanStats,
};
pub use io::{mirror_pad, read_pgm, write_pgm};
pub use net::{parse_net, HiddenActivation, LayerSpec, NetSpec, OutputActivation};
pub use output::{ClassPosterior, DenseOutput};
pub use patch::{
    conv_forward_patch, fc_forward, forward_patch, forward_patch_trace, maxpool_forward_patch, scan_naive,
};
pub use rng::XorShift64Star;
pub use tensor::{crop, planes_equal, Comparison, Fragment, FragmentLayerState, Plane, PlaneSet, Scalar};
pub use verify::{compare_outputs, crop_correspondence, CorrespondenceReport};
pub use weights::{init_weights, LayerWeights, WeightSet};

/// Random image with values uniform in `[0, 1)`, for tests, fixtures and benchmarks.
pub fn random_image<T: Scalar>(channels: usize, width: usize, height: usize, seed: u64) -> Result<PlaneSet<T>> {
    let mut rng = XorShift64Star::new(seed);
    PlaneSet::new(
        (0..channels)
            .map(|_| Plane::from_fn(width, height, |_, _| T::from_f32(rng.next_unit_f32())))
            .collect::<Result<Vec<_>>>()?,
    )
}
