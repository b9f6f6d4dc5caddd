//! Model descriptions and the deterministic flat-parameter layout derived from them.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Activation shape `(channels, depth, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    /// Builds a shape from 1 to 4 dimensions.
    ///
    /// `[f]` is a flat feature vector, `[c, w]` a 1D signal, `[c, h, w]` an image and
    /// `[c, d, h, w]` a volume.
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        let s = match *dims {
            [f] => [f, 1, 1, 1],
            [c, w] => [c, 1, 1, w],
            [c, h, w] => [c, 1, h, w],
            [c, d, h, w] => [c, d, h, w],
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "input shape must have 1 to 4 dims, got {}",
                    dims.len()
                )))
            }
        };
        if s.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "zero-sized input dimension in {dims:?}"
            )));
        }
        Ok(Shape(s))
    }

    pub fn channels(&self) -> usize {
        self.0[0]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    pub fn spatial_len(&self) -> usize {
        self.0[1] * self.0[2] * self.0[3]
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    /// Fully connected layer over the flattened input.
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Stride-1 convolution with symmetric zero padding. 2D and 1D kernels use 1 for
    /// the unused leading dims.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        #[serde(default)]
        padding: usize,
    },
    /// Per-sample, per-channel normalization with learnable scale and shift.
    InstanceNorm {
        channels: usize,
    },
    /// Non-overlapping max pooling (stride equals window, trailing remainder dropped).
    MaxPool {
        window: [usize; 3],
    },
    Relu,
    /// Global average pooling over all spatial positions.
    AvgPool,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::InstanceNorm { .. } => "instance_norm",
            LayerSpec::MaxPool { .. } => "max_pool",
            LayerSpec::Relu => "relu",
            LayerSpec::AvgPool => "avg_pool",
        }
    }
}

/// Objective minimized during training. MAE is always what gets reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Mse,
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub loss: Loss,
}

impl ModelSpec {
    /// Multilayer perceptron `inputs -> hidden... -> 1` with ReLU between dense layers.
    pub fn mlp(inputs: usize, hidden: &[usize]) -> Self {
        let mut layers = Vec::new();
        let mut prev = inputs;
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                inputs: prev,
                outputs: h,
            });
            layers.push(LayerSpec::Relu);
            prev = h;
        }
        layers.push(LayerSpec::Dense {
            inputs: prev,
            outputs: 1,
        });
        ModelSpec {
            input_shape: vec![inputs],
            layers,
            loss: Loss::Mse,
        }
    }

    /// Seven-block volumetric regressor.
    ///
    /// Blocks 1-5: 3x3x3 conv (padding 1), instance norm, 2x2x2 max pool, ReLU.
    /// Block 6: 1x1x1 conv, instance norm, ReLU. Block 7: global average pool, 1x1x1 conv
    /// to a single output. With `widths = [32, 64, 128, 256, 256, 64]` the model has
    /// 2,950,401 parameters regardless of the input volume size.
    pub fn seven_block_cnn(input: [usize; 4], widths: [usize; 6]) -> Self {
        let mut layers = Vec::new();
        let mut prev = input[0];
        for &w in &widths[..5] {
            layers.push(LayerSpec::Conv {
                in_channels: prev,
                out_channels: w,
                kernel: [3, 3, 3],
                padding: 1,
            });
            layers.push(LayerSpec::InstanceNorm { channels: w });
            layers.push(LayerSpec::MaxPool { window: [2, 2, 2] });
            layers.push(LayerSpec::Relu);
            prev = w;
        }
        layers.push(LayerSpec::Conv {
            in_channels: prev,
            out_channels: widths[5],
            kernel: [1, 1, 1],
            padding: 0,
        });
        layers.push(LayerSpec::InstanceNorm {
            channels: widths[5],
        });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::AvgPool);
        layers.push(LayerSpec::Conv {
            in_channels: widths[5],
            out_channels: 1,
            kernel: [1, 1, 1],
            padding: 0,
        });
        ModelSpec {
            input_shape: input.to_vec(),
            layers,
            loss: Loss::Mse,
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("model spec serializes");
        Sha256::digest(&bytes).into()
    }
}

/// Geometry of one layer inside a validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGeom {
    pub input: Shape,
    pub output: Shape,
    /// Range of this layer's parameters inside the flat vector.
    pub params: Range<usize>,
    /// Sub-range holding biases or normalization shift/scale (empty for weight-free layers).
    pub secondary: Range<usize>,
}

/// Validated shapes and parameter offsets for every layer of a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub input: Shape,
    pub geoms: Vec<LayerGeom>,
    pub num_params: usize,
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let input = Shape::from_dims(&spec.input_shape)?;
        if spec.layers.is_empty() {
            return Err(Error::InvalidSpec("model has no layers".into()));
        }
        let mut shape = input;
        let mut offset = 0;
        let mut geoms = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let fail =
                |msg: String| Error::InvalidSpec(format!("layer {i} ({}): {msg}", layer.kind()));
            let (output, weights, secondary) = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    if inputs != shape.numel() {
                        return Err(fail(format!(
                            "expects {inputs} inputs but receives {}",
                            shape.numel()
                        )));
                    }
                    if outputs == 0 {
                        return Err(fail("zero outputs".into()));
                    }
                    (Shape([outputs, 1, 1, 1]), inputs * outputs, outputs)
                }
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                } => {
                    if in_channels != shape.channels() {
                        return Err(fail(format!(
                            "expects {in_channels} channels but receives {}",
                            shape.channels()
                        )));
                    }
                    if out_channels == 0 || kernel.contains(&0) {
                        return Err(fail("zero-sized kernel or channel count".into()));
                    }
                    let mut out = [out_channels, 0, 0, 0];
                    for d in 0..3 {
                        let padded = shape.spatial()[d] + 2 * padding;
                        if kernel[d] > padded {
                            return Err(fail(format!(
                                "kernel {kernel:?} larger than padded input {:?}",
                                shape.spatial()
                            )));
                        }
                        out[d + 1] = padded - kernel[d] + 1;
                    }
                    let k: usize = kernel.iter().product();
                    (Shape(out), k * in_channels * out_channels, out_channels)
                }
                LayerSpec::InstanceNorm { channels } => {
                    if channels != shape.channels() {
                        return Err(fail(format!(
                            "expects {channels} channels but receives {}",
                            shape.channels()
                        )));
                    }
                    (shape, 0, 2 * channels)
                }
                LayerSpec::MaxPool { window } => {
                    let mut out = [shape.channels(), 0, 0, 0];
                    for d in 0..3 {
                        if window[d] == 0 || window[d] > shape.spatial()[d] {
                            return Err(fail(format!(
                                "window {window:?} does not fit input {:?}",
                                shape.spatial()
                            )));
                        }
                        out[d + 1] = shape.spatial()[d] / window[d];
                    }
                    (Shape(out), 0, 0)
                }
                LayerSpec::Relu => (shape, 0, 0),
                LayerSpec::AvgPool => (Shape([shape.channels(), 1, 1, 1]), 0, 0),
            };
            let start = offset;
            offset += weights + secondary;
            geoms.push(LayerGeom {
                input: shape,
                output,
                params: start..offset,
                secondary: start + weights..offset,
            });
            shape = output;
        }
        if shape.numel() != 1 {
            return Err(Error::InvalidSpec(format!(
                "model must end in a single regression output, got shape {:?}",
                shape.0
            )));
        }
        Ok(Layout {
            input,
            geoms,
            num_params: offset,
        })
    }

    /// Indices of layers that own parameters, in model order.
    pub fn parameterized_layers(&self) -> Vec<usize> {
        self.geoms
            .iter()
            .enumerate()
            .filter(|(_, g)| !g.params.is_empty())
            .map(|(i, _)| i)
            .collect()
    }
}
