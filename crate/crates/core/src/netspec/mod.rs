//! Model descriptions: weighted layers, validation, and tensor-shape inference.
//!
//! Pooling and activation ride along on the weighted layer that produces
//! them. A network is a chain of convolutions followed by fully connected
//! layers; flattening between the two is a free reinterpretation.

mod parse;
mod shapes;

pub use parse::{emit_model, parse_model, parse_model_bytes};
pub use shapes::{infer_shapes, Dims, LayerShape, LayerShapes};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Bytes per tensor element unless a model says otherwise (fp32).
pub const DEFAULT_PRECISION_BYTES: u32 = 4;

/// Upper bound on any single extent, count or hyperparameter.
pub const MAX_EXTENT: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    #[default]
    None,
}

impl Activation {
    pub fn keyword(self) -> Option<&'static str> {
        match self {
            Activation::Relu => Some("relu"),
            Activation::Sigmoid => Some("sigmoid"),
            Activation::Tanh => Some("tanh"),
            Activation::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pool {
    pub window: u64,
    pub stride: u64,
}

impl Pool {
    /// Output extent of a pooling window sweeping `extent`, or `None` if the
    /// window does not fit.
    pub fn reduce(&self, extent: u64) -> Option<u64> {
        if extent < self.window {
            return None;
        }
        Some((extent - self.window) / self.stride + 1)
    }
}

/// One weighted layer. `in_channels` of a fully connected layer counts the
/// flattened input vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: u64,
    pub out_channels: u64,
    pub kernel: u64,
    pub stride: u64,
    pub padding: u64,
    pub pool: Option<Pool>,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(in_channels: u64, out_channels: u64, kernel: u64) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: 0,
            pool: None,
            activation: Activation::None,
        }
    }

    pub fn fc(in_channels: u64, out_channels: u64) -> Self {
        LayerSpec {
            kind: LayerKind::FullyConnected,
            in_channels,
            out_channels,
            kernel: 1,
            stride: 1,
            padding: 0,
            pool: None,
            activation: Activation::None,
        }
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: u64) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_pool(mut self, window: u64, stride: u64) -> Self {
        self.pool = Some(Pool { window, stride });
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    fn check(&self, index: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invalid(format!("layer {index}: {msg}")));
        let pool_max = self.pool.map_or(0, |p| p.window.max(p.stride));
        if [
            self.out_channels,
            self.kernel,
            self.stride,
            self.padding,
            pool_max,
        ]
        .iter()
        .any(|&v| v > MAX_EXTENT)
        {
            return bad("hyperparameter exceeds the supported range");
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive");
        }
        match self.kind {
            LayerKind::Conv => {
                if self.kernel == 0 {
                    return bad("kernel must be at least 1");
                }
                if self.stride == 0 {
                    return bad("stride must be at least 1");
                }
                if let Some(pool) = self.pool {
                    if pool.window == 0 || pool.stride == 0 {
                        return bad("pool window and stride must be positive");
                    }
                }
            }
            LayerKind::FullyConnected => {
                if self.kernel != 1 || self.stride != 1 || self.padding != 0 || self.pool.is_some()
                {
                    return bad("fully connected layers take no kernel, stride, padding or pool");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputDims {
    pub height: u64,
    pub width: u64,
    pub channels: u64,
}

impl InputDims {
    pub fn elements(&self) -> u64 {
        self.height * self.width * self.channels
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkModel {
    pub name: String,
    pub batch: u64,
    pub input: InputDims,
    pub layers: Vec<LayerSpec>,
    pub precision_bytes: u32,
}

impl NetworkModel {
    /// Builds and validates a model.
    pub fn new(
        name: impl Into<String>,
        batch: u64,
        input: InputDims,
        layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        let model = NetworkModel {
            name: name.into(),
            batch,
            input,
            layers,
            precision_bytes: DEFAULT_PRECISION_BYTES,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Same network at a different batch size.
    pub fn with_batch(&self, batch: u64) -> Result<Self> {
        let mut m = self.clone();
        m.batch = batch;
        m.validate()?;
        Ok(m)
    }

    /// Checks every structural invariant, including that spatial extents
    /// never collapse.
    pub fn validate(&self) -> Result<()> {
        if !is_identifier(&self.name) {
            return Err(Error::Invalid(format!("bad network name `{}`", self.name)));
        }
        if self.batch == 0 {
            return Err(Error::Invalid("batch must be positive".into()));
        }
        if self.precision_bytes == 0 {
            return Err(Error::Invalid("precision must be positive".into()));
        }
        let InputDims {
            height,
            width,
            channels,
        } = self.input;
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Invalid("input dimensions must be positive".into()));
        }
        if [self.batch, height, width, channels]
            .iter()
            .any(|&v| v > MAX_EXTENT)
        {
            return Err(Error::Invalid(
                "dimension exceeds the supported range".into(),
            ));
        }
        if self.layers.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.check(i)?;
        }
        // Geometry (channel chaining, flattening, underflow) is checked by
        // walking the shapes.
        infer_shapes(self).map(|_| ())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
