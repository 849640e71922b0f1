#![allow(dead_code)]

use fragscan_core::{parse_net, NetSpec};
use proptest::prelude::*;

/// One spatial layer of a generated architecture.
#[derive(Clone, Copy, Debug)]
pub enum Op {
    Conv { maps: usize, kernel: usize },
    Pool { kernel: usize },
}

/// Builds the net text by working backwards from the final patch size, so
/// every pooling input divides evenly.
pub fn net_text(channels: usize, ops: &[Op], w_last: usize, fc: &[usize]) -> String {
    let mut w = w_last;
    for op in ops.iter().rev() {
        w = match *op {
            Op::Conv { kernel, .. } => w + kernel - 1,
            Op::Pool { kernel } => w * kernel,
        };
    }
    let mut text = format!("input {channels} {w}\n");
    for op in ops {
        match *op {
            Op::Conv { maps, kernel } => text += &format!("conv {maps} {kernel}\n"),
            Op::Pool { kernel } => text += &format!("maxpool {kernel}\n"),
        }
    }
    for n in fc {
        text += &format!("fc {n}\n");
    }
    text
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (1usize..=3, 1usize..=3).prop_map(|(maps, kernel)| Op::Conv { maps, kernel }),
        (2usize..=3).prop_map(|kernel| Op::Pool { kernel }),
    ]
}

/// Small valid nets with at most `max_pools` pooling layers and input side
/// at most `max_w0`.
pub fn small_net(max_pools: usize, max_w0: usize) -> impl Strategy<Value = NetSpec> {
    (
        1usize..=2,
        prop::collection::vec(op(), 1..=5),
        1usize..=3,
        prop::collection::vec(1usize..=3, 1..=2),
    )
        .prop_filter_map("too many pools or too large", move |(c, ops, w_last, fc)| {
            if ops.iter().filter(|o| matches!(o, Op::Pool { .. })).count() > max_pools {
                return None;
            }
            let net = parse_net(&net_text(c, &ops, w_last, &fc)).ok()?;
            (net.input_size() <= max_w0).then_some(net)
        })
}
