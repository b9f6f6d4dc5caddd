//! CSR inference path and a fixed-duration throughput benchmark.
//!
//! Dense and convolutional layers are converted to compressed sparse rows (convolutions in
//! their lowered `out_channels x (in_channels * kernel)` form); every other layer reuses
//! the dense engine.

use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{layers, Batch, LayerGeom, LayerSpec, Network};
use crate::sparsify::{apply_mask, PruneMask};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseMatrix {
    fn from_fn(weights: &[f32], rows: usize, cols: usize, keep: impl Fn(usize) -> bool) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        let (mut indices, mut values) = (Vec::new(), Vec::new());
        offsets.push(0);
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if keep(i) {
                    indices.push(c as u32);
                    values.push(weights[i]);
                }
            }
            offsets.push(values.len());
        }
        SparseMatrix {
            rows,
            cols,
            offsets,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for k in self.offsets[r]..self.offsets[r + 1] {
                out[r * self.cols + self.indices[k] as usize] = self.values[k];
            }
        }
        out
    }

    /// Checks the CSR structural invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidData(format!("malformed CSR matrix: {m}")));
        if self.offsets.len() != self.rows + 1 || self.offsets[0] != 0 {
            return bad("offsets length");
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1])
            || *self.offsets.last().unwrap() != self.values.len()
        {
            return bad("offsets not non-decreasing");
        }
        if self.indices.len() != self.values.len() {
            return bad("indices and values differ in length");
        }
        for r in 0..self.rows {
            let row = &self.indices[self.offsets[r]..self.offsets[r + 1]];
            if row.iter().any(|&c| c as usize >= self.cols) || row.windows(2).any(|w| w[0] >= w[1])
            {
                return bad("column indices out of range or unsorted");
            }
        }
        Ok(())
    }

    /// `out[r] = bias[r] + sum_k values[k] * x[indices[k]]`
    pub fn matvec(&self, x: &[f32], bias: Option<&[f32]>, out: &mut Vec<f32>) {
        out.clear();
        for r in 0..self.rows {
            let mut acc = bias.map_or(0.0, |b| b[r]);
            for k in self.offsets[r]..self.offsets[r + 1] {
                acc += self.values[k] * x[self.indices[k] as usize];
            }
            out.push(acc);
        }
    }

    fn bytes(&self) -> usize {
        8 * self.offsets.len() + 4 * self.indices.len() + 4 * self.values.len()
    }
}

/// Row-major `rows x cols` weights restricted to the set bits of `mask`.
pub fn to_sparse(
    weights: &[f32],
    rows: usize,
    cols: usize,
    mask: &PruneMask,
) -> Result<SparseMatrix> {
    if weights.len() != rows * cols || mask.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            actual: if weights.len() != rows * cols {
                weights.len()
            } else {
                mask.len()
            },
            context: "layer weights / mask",
        });
    }
    Ok(SparseMatrix::from_fn(weights, rows, cols, |i| mask.get(i)))
}

#[derive(Debug, Clone)]
enum SparseLayer {
    Matrix {
        weights: SparseMatrix,
        bias: Vec<f32>,
    },
    Engine,
}

/// Inference-only model with sparse weight matrices.
#[derive(Debug, Clone)]
pub struct SparseModel {
    net: Network,
    params: Vec<f32>,
    layers: Vec<SparseLayer>,
}

impl SparseModel {
    pub fn new(net: &Network, params: &[f32], mask: &PruneMask) -> Result<Self> {
        if params.len() != net.num_params() || mask.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.num_params(),
                actual: if params.len() != net.num_params() {
                    params.len()
                } else {
                    mask.len()
                },
                context: "sparse model parameters",
            });
        }
        let masked = apply_mask(params, mask)?;
        let layers = net
            .spec()
            .layers
            .iter()
            .zip(&net.layout().geoms)
            .map(|(layer, g)| {
                let (rows, cols) = match *layer {
                    LayerSpec::Dense { inputs, outputs } => (outputs, inputs),
                    LayerSpec::Conv {
                        in_channels,
                        out_channels,
                        kernel,
                        ..
                    } => (out_channels, in_channels * kernel.iter().product::<usize>()),
                    _ => return SparseLayer::Engine,
                };
                let start = g.params.start;
                let weights =
                    SparseMatrix::from_fn(&masked[start..start + rows * cols], rows, cols, |i| {
                        mask.get(start + i)
                    });
                SparseLayer::Matrix {
                    weights,
                    bias: masked[g.secondary.clone()].to_vec(),
                }
            })
            .collect();
        Ok(SparseModel {
            net: net.clone(),
            params: masked.0,
            layers,
        })
    }

    pub fn nnz(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                SparseLayer::Matrix { weights, .. } => weights.nnz(),
                SparseLayer::Engine => 0,
            })
            .sum()
    }

    /// Bytes held by the sparse representation plus the largest lowered convolution input.
    pub fn footprint_bytes(&self) -> usize {
        let mut total = 4 * self.params.len();
        let mut scratch = 0;
        for (l, (spec, g)) in self
            .layers
            .iter()
            .zip(self.net.spec().layers.iter().zip(&self.net.layout().geoms))
        {
            if let SparseLayer::Matrix { weights, bias } = l {
                total += weights.bytes() + 4 * bias.len();
                if matches!(spec, LayerSpec::Conv { .. }) {
                    scratch = scratch.max(4 * weights.cols * g.output.spatial_len());
                }
            }
        }
        total + scratch
    }

    pub fn predict_one(&self, input: &[f32]) -> f32 {
        let mut act = input.to_vec();
        let mut out = Vec::new();
        for ((layer, spec), g) in self
            .layers
            .iter()
            .zip(&self.net.spec().layers)
            .zip(&self.net.layout().geoms)
        {
            match (layer, spec) {
                (SparseLayer::Matrix { weights, bias }, LayerSpec::Dense { .. }) => {
                    weights.matvec(&act, Some(bias), &mut out);
                    std::mem::swap(&mut act, &mut out);
                }
                (
                    SparseLayer::Matrix { weights, bias },
                    LayerSpec::Conv {
                        kernel, padding, ..
                    },
                ) => {
                    act = lowered_conv(weights, bias, g, &act, *kernel, *padding);
                }
                _ => act = layers::forward(spec, g, &self.params, &act).0,
            }
        }
        act[0]
    }

    pub fn forward(&self, inputs: &[f32]) -> Result<Vec<f32>> {
        let per = self.net.input_len();
        if !inputs.len().is_multiple_of(per) {
            return Err(Error::DimensionMismatch {
                expected: per,
                actual: inputs.len() % per,
                context: "per-sample input length",
            });
        }
        Ok(inputs
            .chunks_exact(per)
            .map(|x| self.predict_one(x))
            .collect())
    }
}

fn lowered_conv(
    w: &SparseMatrix,
    bias: &[f32],
    g: &LayerGeom,
    x: &[f32],
    k: [usize; 3],
    pad: usize,
) -> Vec<f32> {
    let [id, ih, iw] = g.input.spatial();
    let [od, oh, ow] = g.output.spatial();
    let out_len = od * oh * ow;
    // im2col: one row per (in_channel, kernel tap), one column per output position
    let mut cols = vec![0.0f32; w.cols * out_len];
    let ksz = k[0] * k[1] * k[2];
    for ci in 0..g.input.channels() {
        for a in 0..k[0] {
            for b in 0..k[1] {
                for c in 0..k[2] {
                    let row = ci * ksz + (a * k[1] + b) * k[2] + c;
                    let dst = &mut cols[row * out_len..(row + 1) * out_len];
                    for z in 0..od {
                        let Some(zi) = (z + a).checked_sub(pad).filter(|&v| v < id) else {
                            continue;
                        };
                        for r in 0..oh {
                            let Some(ri) = (r + b).checked_sub(pad).filter(|&v| v < ih) else {
                                continue;
                            };
                            for q in 0..ow {
                                let Some(qi) = (q + c).checked_sub(pad).filter(|&v| v < iw) else {
                                    continue;
                                };
                                dst[(z * oh + r) * ow + q] =
                                    x[((ci * id + zi) * ih + ri) * iw + qi];
                            }
                        }
                    }
                }
            }
        }
    }
    let mut y = vec![0.0f32; w.rows * out_len];
    for co in 0..w.rows {
        let yr = &mut y[co * out_len..(co + 1) * out_len];
        yr.fill(bias[co]);
        for kk in w.offsets[co]..w.offsets[co + 1] {
            let v = w.values[kk];
            let src = &cols[w.indices[kk] as usize * out_len..][..out_len];
            for (o, s) in yr.iter_mut().zip(src) {
                *o += v * s;
            }
        }
    }
    y
}

pub fn sparse_forward(model: &SparseModel, batch: &Batch) -> Result<Vec<f32>> {
    if batch.inputs.len() != batch.len() * model.net.input_len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len() * model.net.input_len(),
            actual: batch.inputs.len(),
            context: "batch inputs",
        });
    }
    model.forward(&batch.inputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub duration_s: f64,
    pub warmup_s: f64,
    pub memory_budget_bytes: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            duration_s: 60.0,
            warmup_s: 10.0,
            memory_budget_bytes: 1 << 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub items_per_second: f64,
    pub total_items: u64,
    pub elapsed_s: f64,
    pub warmup_s: f64,
}

/// Runs `infer` for `warmup_s`, then counts single-item calls for at least `duration_s`.
pub fn time_inference(
    mut infer: impl FnMut() -> f32,
    duration_s: f64,
    warmup_s: f64,
) -> Result<BenchReport> {
    if !(duration_s.is_finite() && duration_s >= 0.0 && warmup_s.is_finite() && warmup_s >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "benchmark durations must be non-negative, got {duration_s}s / {warmup_s}s warmup"
        )));
    }
    let warm = Instant::now();
    let warmup = Duration::from_secs_f64(warmup_s);
    while warm.elapsed() < warmup {
        black_box(infer());
    }
    let warmed = warm.elapsed().as_secs_f64();
    if duration_s == 0.0 {
        return Ok(BenchReport {
            items_per_second: 0.0,
            total_items: 0,
            elapsed_s: 0.0,
            warmup_s: warmed,
        });
    }
    let budget = Duration::from_secs_f64(duration_s);
    let start = Instant::now();
    let mut items = 0u64;
    let elapsed = loop {
        black_box(infer());
        items += 1;
        let e = start.elapsed();
        if e >= budget {
            break e.as_secs_f64();
        }
    };
    Ok(BenchReport {
        items_per_second: items as f64 / elapsed,
        total_items: items,
        elapsed_s: elapsed,
        warmup_s: warmed,
    })
}

/// Dense (masked weights, dense kernels) and sparse (CSR kernels) throughput on the same input.
pub fn benchmark(
    net: &Network,
    params: &[f32],
    mask: &PruneMask,
    input: &[f32],
    cfg: &BenchConfig,
) -> Result<(BenchReport, BenchReport)> {
    if input.len() != net.input_len() {
        return Err(Error::DimensionMismatch {
            expected: net.input_len(),
            actual: input.len(),
            context: "benchmark input",
        });
    }
    let dense_bytes = 4 * net.num_params();
    if dense_bytes > cfg.memory_budget_bytes {
        return Err(Error::MemoryBudget {
            needed: dense_bytes,
            budget: cfg.memory_budget_bytes,
        });
    }
    let dense_params = apply_mask(params, mask)?;
    let sparse = SparseModel::new(net, params, mask)?;
    let needed = dense_bytes + sparse.footprint_bytes();
    if needed > cfg.memory_budget_bytes {
        return Err(Error::MemoryBudget {
            needed,
            budget: cfg.memory_budget_bytes,
        });
    }
    let x = black_box(input.to_vec());
    let dense = time_inference(
        || net.predict_one(&dense_params, &x),
        cfg.duration_s,
        cfg.warmup_s,
    )?;
    let sparse = time_inference(|| sparse.predict_one(&x), cfg.duration_s, cfg.warmup_s)?;
    Ok((dense, sparse))
}
