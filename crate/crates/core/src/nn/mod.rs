//! Small exact-gradient neural network engine.
//!
//! All parameters of a model live in one flat vector laid out layer by layer (weights
//! first, then biases or normalization scale/shift), so masking and aggregation treat
//! every model the same way.

pub(crate) mod layers;
pub mod spec;

use std::ops::{Deref, DerefMut};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparsify::PruneMask;
pub use spec::{LayerGeom, LayerSpec, Layout, Loss, ModelSpec, Shape};

/// Flat 32-bit parameter vector in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatParams(pub Vec<f32>);

/// Gradient with the same layout as the [`FlatParams`] it was computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f32>);

macro_rules! vec_newtype {
    ($t:ty) => {
        impl Deref for $t {
            type Target = [f32];
            fn deref(&self) -> &[f32] {
                &self.0
            }
        }
        impl DerefMut for $t {
            fn deref_mut(&mut self) -> &mut [f32] {
                &mut self.0
            }
        }
    };
}
vec_newtype!(FlatParams);
vec_newtype!(GradientVector);

/// Samples stored contiguously; `inputs.len() == targets.len() * sample_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f32>,
    pub targets: Vec<f32>,
}

impl Batch {
    pub fn new(inputs: Vec<f32>, targets: Vec<f32>) -> Self {
        Batch { inputs, targets }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// A validated model: spec plus layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    layout: Layout,
}

impl Network {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let layout = Layout::new(&spec)?;
        Ok(Network { spec, layout })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.num_params
    }

    /// Number of input values per sample.
    pub fn input_len(&self) -> usize {
        self.layout.input.numel()
    }

    pub fn loss(&self) -> Loss {
        self.spec.loss
    }

    /// Fan-in scaled uniform initialization: weights in `±sqrt(6/fan_in)`, biases in
    /// `±1/sqrt(fan_in)`, normalization scale 1 and shift 0.
    pub fn init(&self, seed: u64) -> FlatParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0f32; self.num_params()];
        for (layer, geom) in self.spec.layers.iter().zip(&self.layout.geoms) {
            let fan_in = match *layer {
                LayerSpec::Dense { inputs, .. } => inputs,
                LayerSpec::Conv {
                    in_channels,
                    kernel,
                    ..
                } => in_channels * kernel.iter().product::<usize>(),
                LayerSpec::InstanceNorm { channels } => {
                    let s = geom.params.start;
                    p[s..s + channels].fill(1.0);
                    continue;
                }
                _ => continue,
            } as f32;
            let wb = (6.0 / fan_in).sqrt();
            let bb = 1.0 / fan_in.sqrt();
            for v in &mut p[geom.params.start..geom.secondary.start] {
                *v = rng.random_range(-wb..wb);
            }
            for v in &mut p[geom.secondary.clone()] {
                *v = rng.random_range(-bb..bb);
            }
        }
        FlatParams(p)
    }

    fn check_params(&self, len: usize) -> Result<()> {
        if len != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                actual: len,
                context: "parameter vector",
            });
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: usize, targets: Option<usize>) -> Result<usize> {
        let per = self.input_len();
        if !inputs.is_multiple_of(per) {
            return Err(Error::DimensionMismatch {
                expected: per,
                actual: inputs % per,
                context: "per-sample input length",
            });
        }
        let n = inputs / per;
        if let Some(t) = targets {
            if t != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: t,
                    context: "targets per batch",
                });
            }
        }
        Ok(n)
    }

    /// Prediction for a single sample. Lengths are not checked.
    pub fn predict_one<T: Float>(&self, params: &[T], input: &[T]) -> T {
        let mut act = input.to_vec();
        for (layer, geom) in self.spec.layers.iter().zip(&self.layout.geoms) {
            act = layers::forward(layer, geom, params, &act).0;
        }
        act[0]
    }

    pub fn forward<T: Float>(&self, params: &[T], inputs: &[T]) -> Result<Vec<T>> {
        self.check_params(params.len())?;
        self.check_inputs(inputs.len(), None)?;
        Ok(inputs
            .chunks_exact(self.input_len())
            .map(|x| self.predict_one(params, x))
            .collect())
    }

    /// Loss of one sample, accumulating its gradient into `grad`.
    pub fn accumulate_sample<T: Float>(
        &self,
        params: &[T],
        input: &[T],
        target: T,
        grad: &mut [T],
    ) -> Result<T> {
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut saved = Vec::with_capacity(self.spec.layers.len());
        acts.push(input.to_vec());
        for (layer, geom) in self.spec.layers.iter().zip(&self.layout.geoms) {
            let (y, s) = layers::forward(layer, geom, params, acts.last().unwrap());
            acts.push(y);
            saved.push(s);
        }
        let pred = acts.last().unwrap()[0];
        let diff = pred - target;
        let (loss, dloss) = match self.spec.loss {
            Loss::Mse => (diff * diff, diff + diff),
            Loss::Mae => (
                diff.abs(),
                diff.signum()
                    * if diff == T::zero() {
                        T::zero()
                    } else {
                        T::one()
                    },
            ),
        };
        if !loss.is_finite() {
            return Err(self.locate_non_finite(&acts[1..]));
        }
        let mut dy = vec![dloss];
        for i in (0..self.spec.layers.len()).rev() {
            dy = layers::backward(
                &self.spec.layers[i],
                &self.layout.geoms[i],
                params,
                &acts[i],
                &saved[i],
                &dy,
                grad,
            );
        }
        Ok(loss)
    }

    fn locate_non_finite<T: Float>(&self, outputs: &[Vec<T>]) -> Error {
        let layer = outputs
            .iter()
            .position(|a| a.iter().any(|v| !v.is_finite()))
            .unwrap_or(outputs.len() - 1);
        Error::NonFinite {
            layer,
            kind: self.spec.layers[layer].kind(),
        }
    }

    /// Mean loss and mean gradient over a batch.
    pub fn loss_and_grad<T: Float>(
        &self,
        params: &[T],
        inputs: &[T],
        targets: &[T],
    ) -> Result<(T, Vec<T>)> {
        self.check_params(params.len())?;
        let n = self.check_inputs(inputs.len(), Some(targets.len()))?;
        let mut grad = vec![T::zero(); params.len()];
        if n == 0 {
            return Ok((T::zero(), grad));
        }
        let mut total = T::zero();
        for (x, &y) in inputs.chunks_exact(self.input_len()).zip(targets) {
            total = total + self.accumulate_sample(params, x, y, &mut grad)?;
        }
        let inv = T::one() / T::from(n).unwrap();
        grad.iter_mut().for_each(|g| *g = *g * inv);
        Ok((total * inv, grad))
    }

    /// Bit set for every bias and normalization parameter.
    pub fn secondary_params(&self) -> PruneMask {
        let mut m = PruneMask::zeros(self.num_params());
        for g in &self.layout.geoms {
            for i in g.secondary.clone() {
                m.set(i);
            }
        }
        m
    }

    /// Parameter range of every layer that has parameters, in layer order.
    pub fn layer_param_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.layout
            .geoms
            .iter()
            .filter(|g| !g.params.is_empty())
            .map(|g| g.params.clone())
            .collect()
    }
}

pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<FlatParams> {
    Ok(Network::new(spec.clone())?.init(seed))
}

pub fn forward(params: &FlatParams, spec: &ModelSpec, batch: &Batch) -> Result<Vec<f32>> {
    let net = Network::new(spec.clone())?;
    if batch.inputs.len() != batch.len() * net.input_len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len() * net.input_len(),
            actual: batch.inputs.len(),
            context: "batch inputs",
        });
    }
    net.forward(params, &batch.inputs)
}

pub fn backward(
    params: &FlatParams,
    spec: &ModelSpec,
    batch: &Batch,
) -> Result<(f32, GradientVector)> {
    let net = Network::new(spec.clone())?;
    let (loss, grad) = net.loss_and_grad(params, &batch.inputs, &batch.targets)?;
    Ok((loss, GradientVector(grad)))
}

/// `params - lr * grad * mask`; masked coordinates are left untouched.
pub fn masked_sgd_step(
    params: &FlatParams,
    grad: &GradientVector,
    mask: &PruneMask,
    lr: f32,
) -> Result<FlatParams> {
    let mut out = params.clone();
    masked_sgd_step_in_place(&mut out, grad, mask, lr)?;
    Ok(out)
}

pub fn masked_sgd_step_in_place(
    params: &mut [f32],
    grad: &[f32],
    mask: &PruneMask,
    lr: f32,
) -> Result<()> {
    for (len, context) in [(grad.len(), "gradient"), (mask.len(), "mask")] {
        if len != params.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                actual: len,
                context,
            });
        }
    }
    for (j, (w, g)) in params.iter_mut().zip(grad).enumerate() {
        if mask.get(j) {
            *w -= lr * g;
        }
    }
    Ok(())
}
