#![allow(dead_code)]

use layerpar::netspec::{Activation, InputDims, LayerSpec, NetworkModel};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct ConvDraw {
    out: u64,
    kernel: u64,
    pad: u64,
    stride: u64,
    pool: bool,
}

fn conv_draw() -> impl Strategy<Value = ConvDraw> {
    (1u64..=24, 1u64..=3, 0u64..=1, 1u64..=2, any::<bool>()).prop_map(
        |(out, kernel, pad, stride, pool)| ConvDraw {
            out,
            kernel,
            pad,
            stride,
            pool,
        },
    )
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::None),
        Just(Activation::Relu),
        Just(Activation::Sigmoid),
        Just(Activation::Tanh),
    ]
}

/// Conv-then-fc chains with `1..=max_layers` weighted layers. Draws that
/// would shrink a spatial extent below 1 are skipped layer by layer.
pub fn network(max_layers: usize) -> impl Strategy<Value = NetworkModel> {
    (
        1u64..=64,
        (1u64..=20, 1u64..=20, 1u64..=8),
        prop::collection::vec(conv_draw(), 0..=max_layers),
        prop::collection::vec((1u64..=300, activation()), 0..=max_layers),
        1usize..=max_layers,
    )
        .prop_filter_map(
            "at least one layer",
            move |(batch, (h, w, c), convs, fcs, want)| {
                let mut layers = Vec::new();
                let (mut hh, mut ww, mut cc) = (h, w, c);
                for d in convs {
                    if layers.len() >= want {
                        break;
                    }
                    let span = |x: u64| x + 2 * d.pad;
                    if span(hh) < d.kernel || span(ww) < d.kernel {
                        continue;
                    }
                    let (oh, ow) = (
                        (span(hh) - d.kernel) / d.stride + 1,
                        (span(ww) - d.kernel) / d.stride + 1,
                    );
                    let mut spec = LayerSpec::conv(cc, d.out, d.kernel)
                        .with_stride(d.stride)
                        .with_padding(d.pad);
                    let (mut nh, mut nw) = (oh, ow);
                    if d.pool && oh >= 2 && ow >= 2 {
                        spec = spec.with_pool(2, 2);
                        nh = oh / 2;
                        nw = ow / 2;
                    }
                    layers.push(spec);
                    hh = nh;
                    ww = nw;
                    cc = d.out;
                }
                let mut width = hh * ww * cc;
                for (out, act) in fcs {
                    if layers.len() >= want {
                        break;
                    }
                    layers.push(LayerSpec::fc(width, out).with_activation(act));
                    width = out;
                }
                if layers.is_empty() {
                    return None;
                }
                let input = InputDims {
                    height: h,
                    width: w,
                    channels: c,
                };
                NetworkModel::new("random", batch, input, layers).ok()
            },
        )
}

/// Deterministic draws from `strategy`.
pub fn samples<S: Strategy>(strategy: S, n: usize) -> Vec<S::Value> {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let mut runner = TestRunner::new_with_rng(
        Config::default(),
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    (0..n)
        .map(|_| {
            strategy
                .new_tree(&mut runner)
                .expect("strategy draws")
                .current()
        })
        .collect()
}
