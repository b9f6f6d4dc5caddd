//! Reference implementations used as independent oracles by the integration tests.

#![allow(dead_code)]

use fedsparsify::data::Dataset;
use fedsparsify::federation::epoch_order;
use fedsparsify::nn::{Loss, ModelSpec, Network};

/// Loss of a batch computed from raw predictions, without the engine's backward pass.
pub fn reference_loss(net: &Network, params: &[f64], inputs: &[f64], targets: &[f64]) -> f64 {
    let preds = net.forward(params, inputs).unwrap();
    let n = targets.len() as f64;
    match net.loss() {
        Loss::Mse => {
            preds
                .iter()
                .zip(targets)
                .map(|(p, t)| (p - t).powi(2))
                .sum::<f64>()
                / n
        }
        Loss::Mae => {
            preds
                .iter()
                .zip(targets)
                .map(|(p, t)| (p - t).abs())
                .sum::<f64>()
                / n
        }
    }
}

/// Central-difference gradient of [`reference_loss`].
pub fn numeric_gradient(
    net: &Network,
    params: &[f64],
    inputs: &[f64],
    targets: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = reference_loss(net, &p, inputs, targets);
            p[i] = orig - h;
            let down = reference_loss(net, &p, inputs, targets);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` over whole vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Polynomial sparsity target written out directly from its closed form.
pub fn schedule_target(s0: f64, st: f64, n: f64, f: u32, t0: u32, total: u32, t: u32) -> f64 {
    if t == total {
        return st;
    }
    let stepped = (f * (t / f)) as f64;
    let progress = ((stepped - t0 as f64) / (total - t0) as f64).clamp(0.0, 1.0);
    st + (s0 - st) * (1.0 - progress).powf(n)
}

/// Parameters exchanged over a run: each round every learner downloads and uploads the
/// model that was broadcast at the start of that round.
pub fn reference_comm(p: u64, learners: u64, rounds: u32, final_sparsity: Option<f64>) -> u64 {
    let mut kept = p;
    let mut total = 0;
    for t in 1..=rounds {
        total += 2 * learners * kept;
        if let Some(st) = final_sparsity {
            let s = schedule_target(0.0, st, 3.0, 1, 1, rounds, t);
            let pruned = (s * p as f64 + 1e-9).floor() as u64;
            kept = p - pruned.min(p);
        }
    }
    total
}

/// Plain sequential minibatch SGD, visiting samples in the same per-epoch order as the
/// library's trainers.
#[allow(clippy::too_many_arguments)]
pub fn reference_sgd(
    net: &Network,
    params: &mut [f32],
    data: &Dataset,
    lr: f32,
    batch: usize,
    epochs: std::ops::Range<u64>,
    seed: u64,
    stream: u64,
) {
    for e in epochs {
        for chunk in epoch_order(data.len(), seed, stream, e).chunks(batch) {
            let xs: Vec<f32> = chunk
                .iter()
                .flat_map(|&i| data.sample(i).to_vec())
                .collect();
            let ys: Vec<f32> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (_, g) = net.loss_and_grad(params, &xs, &ys).unwrap();
            for (p, g) in params.iter_mut().zip(&g) {
                *p -= lr * g;
            }
        }
    }
}

/// Size-weighted mean accumulated in f64.
pub fn reference_average(models: &[(Vec<f32>, usize)]) -> Vec<f32> {
    let total: usize = models.iter().map(|(_, n)| n).sum();
    (0..models[0].0.len())
        .map(|i| {
            models
                .iter()
                .map(|(m, n)| m[i] as f64 * *n as f64 / total as f64)
                .sum::<f64>() as f32
        })
        .collect()
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

/// Small specs that between them exercise every layer type, each under 500 parameters.
pub fn gradient_check_specs() -> Vec<(&'static str, ModelSpec)> {
    let parse = |v: serde_json::Value| serde_json::from_value::<ModelSpec>(v).unwrap();
    vec![
        ("dense", ModelSpec::mlp(3, &[5, 4])),
        (
            "conv",
            parse(serde_json::json!({
                "input_shape": [2, 3, 3, 3],
                "layers": [
                    {"type": "conv", "in_channels": 2, "out_channels": 3, "kernel": [3, 3, 3], "padding": 1},
                    {"type": "conv", "in_channels": 3, "out_channels": 1, "kernel": [2, 2, 2]},
                    {"type": "dense", "inputs": 8, "outputs": 1}
                ]
            })),
        ),
        (
            "instance_norm",
            parse(serde_json::json!({
                "input_shape": [3, 2, 2, 2],
                "layers": [
                    {"type": "instance_norm", "channels": 3},
                    {"type": "dense", "inputs": 24, "outputs": 1}
                ]
            })),
        ),
        (
            "max_pool",
            parse(serde_json::json!({
                "input_shape": [2, 4, 4, 2],
                "layers": [
                    {"type": "max_pool", "window": [2, 2, 2]},
                    {"type": "dense", "inputs": 8, "outputs": 1}
                ]
            })),
        ),
        (
            "relu",
            parse(serde_json::json!({
                "input_shape": [6],
                "layers": [
                    {"type": "dense", "inputs": 6, "outputs": 10},
                    {"type": "relu"},
                    {"type": "dense", "inputs": 10, "outputs": 1}
                ]
            })),
        ),
        (
            "avg_pool",
            parse(serde_json::json!({
                "input_shape": [2, 3, 3, 3],
                "layers": [
                    {"type": "avg_pool"},
                    {"type": "dense", "inputs": 2, "outputs": 1}
                ]
            })),
        ),
        (
            "cnn_blocks",
            parse(serde_json::json!({
                "input_shape": [1, 4, 4, 4],
                "layers": [
                    {"type": "conv", "in_channels": 1, "out_channels": 3, "kernel": [3, 3, 3], "padding": 1},
                    {"type": "instance_norm", "channels": 3},
                    {"type": "max_pool", "window": [2, 2, 2]},
                    {"type": "relu"},
                    {"type": "conv", "in_channels": 3, "out_channels": 4, "kernel": [1, 1, 1]},
                    {"type": "instance_norm", "channels": 4},
                    {"type": "relu"},
                    {"type": "avg_pool"},
                    {"type": "conv", "in_channels": 4, "out_channels": 1, "kernel": [1, 1, 1]}
                ]
            })),
        ),
    ]
}
