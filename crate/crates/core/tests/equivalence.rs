mod common;

use fragscan_core::cost::{flops_image, CostMode};
use fragscan_core::par::with_threads;
use fragscan_core::{
    compare_outputs, crop_correspondence, init_weights, random_image, scan_fragment, scan_fragment_with, scan_naive,
    EvalOrder, LayerSpec, NetSpec,
};
use proptest::prelude::*;

use common::small_net;

const TOL_F32: f64 = 1e-5;
const TOL_F64: f64 = 1e-12;

/// Net, image size, seed and pad flag. Padding is only drawn for odd `w0`.
fn scan_case() -> impl Strategy<Value = (NetSpec, usize, usize, u64, bool)> {
    small_net(3, 24).prop_flat_map(|net| {
        let w0 = net.input_size();
        let pad = if w0 % 2 == 1 {
            any::<bool>().boxed()
        } else {
            Just(false).boxed()
        };
        (Just(net), w0..w0 + 9, w0..w0 + 9, any::<u64>(), pad)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn engines_agree_f32((net, w, h, seed, pad) in scan_case()) {
        let weights = init_weights::<f32>(&net, seed);
        let image = random_image::<f32>(net.input_channels(), w, h, seed ^ 1).unwrap();
        let fast = scan_fragment(&net, &weights, &image, pad).unwrap();
        let slow = scan_naive(&net, &weights, &image, pad).unwrap();
        let cmp = compare_outputs(&fast, &slow, TOL_F32);
        prop_assert!(cmp.equal, "{}", cmp);
        prop_assert_eq!(fast.classes(), slow.classes());
    }

    #[test]
    fn engines_agree_f64((net, w, h, seed, pad) in scan_case()) {
        let weights = init_weights::<f64>(&net, seed);
        let image = random_image::<f64>(net.input_channels(), w, h, seed ^ 1).unwrap();
        let fast = scan_fragment(&net, &weights, &image, pad).unwrap();
        let slow = scan_naive(&net, &weights, &image, pad).unwrap();
        let cmp = compare_outputs(&fast, &slow, TOL_F64);
        prop_assert!(cmp.equal, "{}", cmp);
    }

    #[test]
    fn output_size_law((net, w, h, seed, pad) in scan_case()) {
        let weights = init_weights::<f32>(&net, seed);
        let image = random_image::<f32>(net.input_channels(), w, h, seed).unwrap();
        let out = scan_fragment(&net, &weights, &image, pad).unwrap();
        let w0 = net.input_size();
        let expected = if pad { (w, h) } else { (w - w0 + 1, h - w0 + 1) };
        prop_assert_eq!((out.width(), out.height()), expected);
        prop_assert_eq!(out.class_count(), net.class_count().unwrap());
    }

    #[test]
    fn crops_match_patch_maps((net, w, h, seed, pad) in scan_case()) {
        let weights = init_weights::<f64>(&net, seed);
        let image = random_image::<f64>(net.input_channels(), w, h, seed).unwrap();
        let report = crop_correspondence(&net, &weights, &image, pad, TOL_F64).unwrap();
        prop_assert!(report.holds(), "{:?}", report.failure);
        prop_assert_eq!(report.layers, net.last_spatial() + 1);
    }

    #[test]
    fn fragment_census((net, w, h, seed, pad) in scan_case()) {
        let weights = init_weights::<f32>(&net, seed);
        let image = random_image::<f32>(net.input_channels(), w, h, seed).unwrap();
        let (_, stats) = scan_fragment_with(&net, &weights, &image, pad, EvalOrder::BreadthFirst).unwrap();
        let margin = if pad { net.input_size() - 1 } else { 0 };
        let expected = simulate_census(&net, w + margin, h + margin);
        prop_assert_eq!(&stats.fragments_per_layer, &expected);
        for (l, &f) in expected.iter().enumerate() {
            prop_assert!(f <= net.fragment_count(l).unwrap());
        }
    }

    #[test]
    fn exact_cost_matches_executed_macs((net, w, _h, seed, pad) in scan_case()) {
        let weights = init_weights::<f32>(&net, seed);
        let image = random_image::<f32>(net.input_channels(), w, w, seed).unwrap();
        let (_, stats) = scan_fragment_with(&net, &weights, &image, pad, EvalOrder::BreadthFirst).unwrap();
        let predicted: u64 = flops_image(&net, w, CostMode::Exact { pad }).unwrap().iter().map(|(_, f)| f).sum();
        prop_assert_eq!(predicted, 2 * stats.conv_macs);
    }

    #[test]
    fn eval_orders_agree((net, w, h, seed, pad) in scan_case()) {
        let weights = init_weights::<f32>(&net, seed);
        let image = random_image::<f32>(net.input_channels(), w, h, seed).unwrap();
        let (a, sa) = scan_fragment_with(&net, &weights, &image, pad, EvalOrder::BreadthFirst).unwrap();
        let (b, sb) = scan_fragment_with(&net, &weights, &image, pad, EvalOrder::DepthFirst).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(sa.conv_macs, sb.conv_macs);
        prop_assert_eq!(sa.fragments_per_layer, sb.fragments_per_layer);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn thread_count_does_not_change_results((net, w, h, seed, pad) in scan_case()) {
        let weights = init_weights::<f32>(&net, seed);
        let image = random_image::<f32>(net.input_channels(), w, h, seed).unwrap();
        let single = with_threads(1, || scan_fragment(&net, &weights, &image, pad).unwrap());
        let many = with_threads(4, || scan_fragment(&net, &weights, &image, pad).unwrap());
        prop_assert_eq!(&single, &many);
        let naive_single = with_threads(1, || scan_naive(&net, &weights, &image, pad).unwrap());
        let naive_many = with_threads(4, || scan_naive(&net, &weights, &image, pad).unwrap());
        prop_assert_eq!(naive_single, naive_many);
    }
}

/// Fragment sizes tracked without any maps: a fragment narrower than a
/// layer's kernel is dropped, and a pooling offset leaving no output is
/// dropped.
fn simulate_census(net: &NetSpec, w: usize, h: usize) -> Vec<usize> {
    let mut sizes = vec![(w, h)];
    let mut counts = vec![1];
    for l in 1..=net.last_spatial() {
        let k = match net.layer(l) {
            LayerSpec::Conv { kernel, .. } | LayerSpec::MaxPool { kernel } => kernel,
            _ => unreachable!(),
        };
        sizes.retain(|&(fw, fh)| fw >= k && fh >= k);
        sizes = match net.layer(l) {
            LayerSpec::Conv { .. } => sizes.iter().map(|&(fw, fh)| (fw - k + 1, fh - k + 1)).collect(),
            _ => sizes
                .iter()
                .flat_map(|&(fw, fh)| (0..k).flat_map(move |oy| (0..k).map(move |ox| ((fw - ox) / k, (fh - oy) / k))))
                .filter(|&(fw, fh)| fw > 0 && fh > 0)
                .collect(),
        };
        counts.push(sizes.len());
    }
    counts
}
