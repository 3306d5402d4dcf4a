use super::{LayerKind, NetworkModel};
use crate::commcost::Parallelism;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Spatial height, width and channel extent of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub h: u64,
    pub w: u64,
    pub c: u64,
}

impl Dims {
    pub fn new(h: u64, w: u64, c: u64) -> Self {
        Dims { h, w, c }
    }

    pub fn elements(&self) -> u64 {
        self.h * self.w * self.c
    }
}

/// Derived geometry of one weighted layer.
///
/// `input` is the feature map F_l (and the error E_l, which mirrors it).
/// `conv_out` is the raw product of the layer, before pooling; `output` is
/// F_{l+1} after pooling, the tensor the next layer consumes. A fully
/// connected layer sees its input flattened to `1 x 1 x C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub index: usize,
    pub kind: LayerKind,
    pub batch: u64,
    pub input: Dims,
    pub conv_out: Dims,
    pub output: Dims,
    pub kernel: u64,
}

impl LayerShape {
    /// elems(F_l) == elems(E_l).
    pub fn input_elems(&self) -> u64 {
        self.batch * self.input.elements()
    }

    /// elems(F_{l+1}) == elems(E_{l+1}).
    pub fn output_elems(&self) -> u64 {
        self.batch * self.output.elements()
    }

    /// Elements of the un-pooled product. Partial sums are reduced at this
    /// size since pooling and activation need complete sums.
    pub fn partial_sum_elems(&self) -> u64 {
        self.batch * self.conv_out.elements()
    }

    /// elems(W_l) == elems(dW_l).
    pub fn weight_elems(&self) -> u64 {
        self.kernel * self.kernel * self.input.c * self.output.c
    }

    /// Geometry of W_l: `[K, K, C_l, C_{l+1}]` or `[C_l, C_{l+1}]`.
    pub fn weight_dims(&self) -> Vec<u64> {
        match self.kind {
            LayerKind::Conv => vec![self.kernel, self.kernel, self.input.c, self.output.c],
            LayerKind::FullyConnected => vec![self.input.c, self.output.c],
        }
    }

    pub fn macs(&self) -> u64 {
        self.batch
            * self.kernel
            * self.kernel
            * self.input.c
            * self.conv_out.c
            * self.conv_out.h
            * self.conv_out.w
    }

    pub fn forward_flops(&self) -> u64 {
        2 * self.macs()
    }

    /// Error backward multiplies the same operands transposed.
    pub fn backward_flops(&self) -> u64 {
        self.forward_flops()
    }

    pub fn gradient_flops(&self) -> u64 {
        self.forward_flops()
    }
}

/// Shapes of every weighted layer of a network at one batch size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShapes {
    pub network: String,
    pub batch: u64,
    pub precision_bytes: u32,
    pub layers: Vec<LayerShape>,
}

impl LayerShapes {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, index: usize) -> Result<&LayerShape> {
        self.layers.get(index).ok_or(Error::LayerOutOfRange {
            index,
            len: self.layers.len(),
        })
    }

    /// The network's final output F_L.
    pub fn final_output(&self) -> Option<Dims> {
        self.layers.last().map(|l| l.output)
    }

    pub fn total_flops(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| l.forward_flops() + l.backward_flops() + l.gradient_flops())
            .sum()
    }

    /// Tensors one half of the array holds after a bipartition by `row`.
    ///
    /// dp layers keep half the batch; mp layers keep half their output
    /// channels, and the successor keeps half its input channels. Odd
    /// extents round up.
    pub fn split(&self, row: &[Parallelism]) -> Result<LayerShapes> {
        if row.len() != self.layers.len() {
            return Err(Error::PlanLength {
                expected: self.layers.len(),
                found: row.len(),
            });
        }
        let mut layers = self.layers.clone();
        for (l, p) in row.iter().enumerate() {
            match p {
                Parallelism::Dp => layers[l].batch = half(layers[l].batch),
                Parallelism::Mp => {
                    layers[l].conv_out.c = half(layers[l].conv_out.c);
                    layers[l].output.c = half(layers[l].output.c);
                    if let Some(next) = layers.get_mut(l + 1) {
                        next.input.c = half(next.input.c);
                    }
                }
            }
        }
        Ok(LayerShapes {
            network: self.network.clone(),
            batch: self.batch,
            precision_bytes: self.precision_bytes,
            layers,
        })
    }

    /// Shapes of a network made of layer `index` alone, with its inputs and
    /// batch as they are here.
    pub fn isolate(&self, index: usize) -> Result<LayerShapes> {
        let mut layer = *self.layer(index)?;
        layer.index = 0;
        Ok(LayerShapes {
            network: format!("{}[{index}]", self.network),
            batch: layer.batch,
            precision_bytes: self.precision_bytes,
            layers: vec![layer],
        })
    }
}

fn half(n: u64) -> u64 {
    n.div_ceil(2)
}

fn conv_extent(extent: u64, kernel: u64, stride: u64, padding: u64) -> Option<u64> {
    let padded = extent + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Per-layer ceiling on element and MAC counts; keeps every downstream sum
/// comfortably inside u64.
const MAX_LAYER_COUNT: u128 = 1 << 50;

fn check_magnitude(s: &LayerShape) -> Result<()> {
    let b = s.batch as u128;
    let k2 = (s.kernel as u128).pow(2);
    let weight = k2 * s.input.c as u128 * s.output.c as u128;
    let macs = b * k2 * s.input.c as u128 * s.conv_out.elements() as u128;
    let input = b * s.input.elements() as u128;
    let conv = b * s.conv_out.elements() as u128;
    if [weight, macs, input, conv]
        .iter()
        .any(|&v| v > MAX_LAYER_COUNT)
    {
        return Err(Error::Invalid(format!(
            "layer {}: tensor sizes exceed the supported range",
            s.index
        )));
    }
    Ok(())
}

/// Derives every layer's tensor geometry and checks chaining.
pub fn infer_shapes(model: &NetworkModel) -> Result<LayerShapes> {
    if model.layers.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let mut current = Dims::new(model.input.height, model.input.width, model.input.channels);
    let mut seen_fc = false;
    let mut layers = Vec::with_capacity(model.layers.len());

    for (index, spec) in model.layers.iter().enumerate() {
        let shape = match spec.kind {
            LayerKind::Conv => {
                if seen_fc {
                    return Err(Error::ConvAfterFc { layer: index });
                }
                if spec.in_channels != current.c {
                    return Err(Error::ChannelMismatch {
                        layer: index,
                        expected: current.c,
                        found: spec.in_channels,
                    });
                }
                let underflow = |dim| Error::ShapeUnderflow { layer: index, dim };
                let ch = conv_extent(current.h, spec.kernel, spec.stride, spec.padding)
                    .ok_or(underflow("height"))?;
                let cw = conv_extent(current.w, spec.kernel, spec.stride, spec.padding)
                    .ok_or(underflow("width"))?;
                let conv_out = Dims::new(ch, cw, spec.out_channels);
                let output = match spec.pool {
                    Some(pool) => Dims::new(
                        pool.reduce(ch).ok_or(underflow("height"))?,
                        pool.reduce(cw).ok_or(underflow("width"))?,
                        spec.out_channels,
                    ),
                    None => conv_out,
                };
                LayerShape {
                    index,
                    kind: LayerKind::Conv,
                    batch: model.batch,
                    input: current,
                    conv_out,
                    output,
                    kernel: spec.kernel,
                }
            }
            LayerKind::FullyConnected => {
                seen_fc = true;
                let flat = current.elements();
                if spec.in_channels != flat {
                    return Err(Error::ChannelMismatch {
                        layer: index,
                        expected: flat,
                        found: spec.in_channels,
                    });
                }
                let out = Dims::new(1, 1, spec.out_channels);
                LayerShape {
                    index,
                    kind: LayerKind::FullyConnected,
                    batch: model.batch,
                    input: Dims::new(1, 1, flat),
                    conv_out: out,
                    output: out,
                    kernel: 1,
                }
            }
        };
        check_magnitude(&shape)?;
        current = shape.output;
        layers.push(shape);
    }

    Ok(LayerShapes {
        network: model.name.clone(),
        batch: model.batch,
        precision_bytes: model.precision_bytes,
        layers,
    })
}
