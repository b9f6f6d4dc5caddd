//! White-box membership inference.
//!
//! Each sample is described by the model's prediction, its label, its loss and the loss
//! gradient restricted to the last two parameterized layers. A logistic classifier on
//! standardized features then guesses membership. Accuracy is always measured on sets
//! with equally many members and non-members, so 0.5 is chance.

use std::collections::HashSet;
use std::ops::Range;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::federation::{stream_rng, LearnerState};
use crate::nn::{ModelSpec, Network};
use crate::sparsify::PruneMask;

/// Raw gradient entries kept per layer.
pub const RAW_GRADIENT_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackFeatures(pub Vec<f64>);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackDataset {
    pub features: Vec<AttackFeatures>,
    /// `true` for training-set members.
    pub membership: Vec<bool>,
}

impl AttackDataset {
    pub fn from_parts(members: &[AttackFeatures], non_members: &[AttackFeatures]) -> Self {
        let mut features = members.to_vec();
        features.extend_from_slice(non_members);
        let mut membership = vec![true; members.len()];
        membership.resize(features.len(), false);
        AttackDataset {
            features,
            membership,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn member_count(&self) -> usize {
        self.membership.iter().filter(|m| **m).count()
    }

    pub fn is_balanced(&self) -> bool {
        2 * self.member_count() == self.len()
    }
}

/// Computes [`AttackFeatures`] for one model architecture.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    net: Network,
    layers: [Range<usize>; 2],
}

impl FeatureExtractor {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let net = Network::new(spec.clone())?;
        let with_params = net.layout().parameterized_layers();
        if with_params.len() < 2 {
            return Err(Error::Attack(format!(
                "feature extraction needs two parameterized layers, model has {}",
                with_params.len()
            )));
        }
        let g = &net.layout().geoms;
        let n = with_params.len();
        let layers = [
            g[with_params[n - 2]].params.clone(),
            g[with_params[n - 1]].params.clone(),
        ];
        Ok(FeatureExtractor { net, layers })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Feature dimension: prediction, label, loss, L1 and L2 norm per layer and the capped
    /// raw gradients of both layers.
    pub fn dim(&self) -> usize {
        3 + 4 + 2 * RAW_GRADIENT_CAP
    }

    /// Gradients of pruned parameters are reported as zero when `mask` is given.
    pub fn extract(
        &self,
        params: &[f32],
        mask: Option<&PruneMask>,
        samples: &Dataset,
    ) -> Result<Vec<AttackFeatures>> {
        if samples.sample_len() != self.net.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.net.input_len(),
                actual: samples.sample_len(),
                context: "attack samples",
            });
        }
        if params.len() != self.net.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.net.num_params(),
                actual: params.len(),
                context: "attacked model",
            });
        }
        (0..samples.len())
            .into_par_iter()
            .map(|i| self.one(params, mask, samples.sample(i), samples.labels[i]))
            .collect()
    }

    fn one(
        &self,
        params: &[f32],
        mask: Option<&PruneMask>,
        x: &[f32],
        y: f32,
    ) -> Result<AttackFeatures> {
        let mut grad = vec![0.0f32; params.len()];
        let pred = self.net.predict_one(params, x);
        let loss = self.net.accumulate_sample(params, x, y, &mut grad)?;
        let mut f = Vec::with_capacity(self.dim());
        f.extend([pred as f64, y as f64, loss as f64]);
        let mut raw = Vec::with_capacity(2 * RAW_GRADIENT_CAP);
        for r in &self.layers {
            let g: Vec<f64> = r
                .clone()
                .map(|i| match mask {
                    Some(m) if !m.get(i) => 0.0,
                    _ => grad[i] as f64,
                })
                .collect();
            f.push(g.iter().map(|v| v.abs()).sum());
            f.push(g.iter().map(|v| v * v).sum::<f64>().sqrt());
            raw.extend(g.iter().take(RAW_GRADIENT_CAP));
            raw.extend(std::iter::repeat_n(
                0.0,
                RAW_GRADIENT_CAP.saturating_sub(g.len()),
            ));
        }
        f.extend(raw);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Attack("non-finite attack feature".into()));
        }
        Ok(AttackFeatures(f))
    }
}

pub fn extract_features(
    params: &[f32],
    spec: &ModelSpec,
    samples: &Dataset,
) -> Result<Vec<AttackFeatures>> {
    FeatureExtractor::new(spec)?.extract(params, None, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackTrainConfig {
    pub l2: f64,
    pub iterations: usize,
}

impl Default for AttackTrainConfig {
    fn default() -> Self {
        AttackTrainConfig {
            l2: 0.1,
            iterations: 500,
        }
    }
}

/// L2-regularized logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl AttackModel {
    fn standardize(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((v, m), s)| (v - m) * s),
        );
    }

    pub fn score(&self, x: &AttackFeatures) -> f64 {
        let mut z = Vec::with_capacity(x.0.len());
        self.standardize(&x.0, &mut z);
        self.bias + dot(&self.weights, &z)
    }

    pub fn predict_proba(&self, x: &AttackFeatures) -> f64 {
        sigmoid(self.score(x))
    }

    /// Membership guess: probability strictly above one half.
    pub fn predict(&self, x: &AttackFeatures) -> bool {
        self.score(x) > 0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn train_attack(data: &AttackDataset, seed: u64) -> Result<AttackModel> {
    train_attack_with(data, seed, &AttackTrainConfig::default())
}

/// Fits the attack classifier. The larger class is subsampled (seeded) to the size of
/// the smaller one before fitting.
pub fn train_attack_with(
    data: &AttackDataset,
    seed: u64,
    cfg: &AttackTrainConfig,
) -> Result<AttackModel> {
    if data.features.len() != data.membership.len() {
        return Err(Error::Attack(
            "features and membership labels differ in length".into(),
        ));
    }
    let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.membership[i]).collect();
    let mut others: Vec<usize> = (0..data.len()).filter(|&i| !data.membership[i]).collect();
    if members.is_empty() || others.is_empty() {
        return Err(Error::Attack(
            "attack training needs both members and non-members".into(),
        ));
    }
    let mut rng = stream_rng(seed, 0x6174_7461_636b, 0);
    let m = members.len().min(others.len());
    members.shuffle(&mut rng);
    others.shuffle(&mut rng);
    members.truncate(m);
    others.truncate(m);
    let rows: Vec<(usize, f64)> = members
        .iter()
        .map(|&i| (i, 1.0))
        .chain(others.iter().map(|&i| (i, 0.0)))
        .collect();

    let d = data.features[rows[0].0].0.len();
    if rows.iter().any(|(i, _)| data.features[*i].0.len() != d) {
        return Err(Error::Attack(
            "attack features have inconsistent dimensions".into(),
        ));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for (i, _) in &rows {
        for (a, v) in mean.iter_mut().zip(&data.features[*i].0) {
            *a += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for (i, _) in &rows {
        for ((a, v), mu) in var.iter_mut().zip(&data.features[*i].0).zip(&mean) {
            *a += (v - mu) * (v - mu) / n;
        }
    }
    // zero-variance features carry no information; map them to 0
    let scale: Vec<f64> = var
        .iter()
        .zip(&mean)
        .map(|(&v, &mu)| {
            if v > 1e-12 * (1.0 + mu * mu) {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut model = AttackModel {
        mean,
        scale,
        weights: vec![0.0; d],
        bias: 0.0,
    };
    let xs: Vec<Vec<f64>> = rows
        .iter()
        .map(|(i, _)| {
            let mut z = Vec::with_capacity(d);
            model.standardize(&data.features[*i].0, &mut z);
            z
        })
        .collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();

    // step size 1/L from a power-iteration estimate of the largest eigenvalue of X^T X / n
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 1.0;
    for _ in 0..30 {
        let mut w = vec![0.0; d];
        for x in &xs {
            let s = dot(x, &v) / n;
            for (a, xi) in w.iter_mut().zip(x) {
                *a += s * xi;
            }
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-300 {
            break;
        }
        lambda = norm;
        v = w.into_iter().map(|a| a / norm).collect();
    }
    let step = 1.0 / (0.25 * (lambda.max(1.0) * 1.01) + cfg.l2);

    let mut gw = vec![0.0; d];
    for _ in 0..cfg.iterations {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let r = sigmoid(model.bias + dot(&model.weights, x)) - y;
            gb += r / n;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += r * xi / n;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= step * (g + cfg.l2 * *w);
        }
        model.bias -= step * gb;
    }
    Ok(model)
}

/// Fraction of correct membership guesses on a balanced set.
pub fn evaluate_attack(model: &AttackModel, eval: &AttackDataset) -> Result<f64> {
    if eval.is_empty() || !eval.is_balanced() || eval.features.len() != eval.membership.len() {
        return Err(Error::Attack(format!(
            "evaluation set must be balanced and non-empty ({} members of {})",
            eval.member_count(),
            eval.len()
        )));
    }
    let correct = eval
        .features
        .iter()
        .zip(&eval.membership)
        .filter(|(x, &m)| model.predict(x) == m)
        .count();
    Ok(correct as f64 / eval.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub attacker: usize,
    pub victim: usize,
    pub accuracy: f64,
    pub eval_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub mean_accuracy: f64,
    /// Attacks with accuracy above 0.5.
    pub success_count: usize,
    pub attacks: usize,
    pub matrix: Vec<PairResult>,
}

impl AttackReport {
    fn from_pairs(matrix: Vec<PairResult>) -> Self {
        let attacks = matrix.len();
        let mean_accuracy = matrix.iter().map(|p| p.accuracy).sum::<f64>() / attacks.max(1) as f64;
        AttackReport {
            mean_accuracy,
            success_count: matrix.iter().filter(|p| p.accuracy > 0.5).count(),
            attacks,
            matrix,
        }
    }
}

fn sample_rows(rows: &[AttackFeatures], n: usize, seed: u64, stream: u64) -> Vec<AttackFeatures> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut stream_rng(seed, stream, 0));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

/// Every learner attacks every other learner.
///
/// The attacker fits on its own training samples against half of `unseen`, then is scored
/// on a balanced set of the victim's samples and the other half of `unseen`.
pub fn federated_attack_matrix(
    extractor: &FeatureExtractor,
    params: &[f32],
    mask: Option<&PruneMask>,
    learners: &[LearnerState],
    unseen: &Dataset,
    seed: u64,
) -> Result<AttackReport> {
    federated_attack_matrix_with(
        extractor,
        params,
        mask,
        learners,
        unseen,
        seed,
        &AttackTrainConfig::default(),
    )
}

pub fn federated_attack_matrix_with(
    extractor: &FeatureExtractor,
    params: &[f32],
    mask: Option<&PruneMask>,
    learners: &[LearnerState],
    unseen: &Dataset,
    seed: u64,
    cfg: &AttackTrainConfig,
) -> Result<AttackReport> {
    if learners.len() < 2 {
        return Err(Error::Attack(
            "cross-learner attacks need at least two learners".into(),
        ));
    }
    if unseen.len() < 2 {
        return Err(Error::Attack(
            "unseen pool needs at least two samples".into(),
        ));
    }
    let mut trained: HashSet<u64> = HashSet::new();
    for l in learners {
        if l.dataset.is_empty() {
            return Err(Error::Attack(format!("learner {} has no samples", l.id)));
        }
        trained.extend(l.dataset.ids.iter().copied());
    }
    if let Some(id) = unseen.ids.iter().find(|id| trained.contains(id)) {
        return Err(Error::Attack(format!(
            "unseen pool overlaps training data (sample {id})"
        )));
    }

    let member_feats: Vec<Vec<AttackFeatures>> = learners
        .iter()
        .map(|l| extractor.extract(params, mask, &l.dataset))
        .collect::<Result<_>>()?;
    let unseen_feats = extractor.extract(params, mask, unseen)?;
    let mut order: Vec<usize> = (0..unseen.len()).collect();
    order.shuffle(&mut stream_rng(seed, 0x756e_7365_656e, 0));
    let half = unseen.len() / 2;
    let pick = |idx: &[usize]| {
        idx.iter()
            .map(|&i| unseen_feats[i].clone())
            .collect::<Vec<_>>()
    };
    let train_pool = pick(&order[..half]);
    let eval_pool = pick(&order[half..]);

    let pairs: Vec<(usize, usize)> = (0..learners.len())
        .flat_map(|a| {
            (0..learners.len())
                .filter(move |&v| v != a)
                .map(move |v| (a, v))
        })
        .collect();
    let matrix = pairs
        .par_iter()
        .map(|&(a, v)| {
            let pair_stream = (a * learners.len() + v) as u64;
            let model = train_attack_with(
                &AttackDataset::from_parts(&member_feats[a], &train_pool),
                seed ^ pair_stream,
                cfg,
            )?;
            let m = member_feats[v].len().min(eval_pool.len());
            let eval = AttackDataset::from_parts(
                &sample_rows(&member_feats[v], m, seed, 2 * pair_stream),
                &sample_rows(&eval_pool, m, seed, 2 * pair_stream + 1),
            );
            Ok(PairResult {
                attacker: learners[a].id,
                victim: learners[v].id,
                accuracy: evaluate_attack(&model, &eval)?,
                eval_size: eval.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AttackReport::from_pairs(matrix))
}

/// Single-model attack: fit on half of the members and half of `unseen`, score on the rest.
pub fn centralized_attack(
    extractor: &FeatureExtractor,
    params: &[f32],
    mask: Option<&PruneMask>,
    members: &Dataset,
    unseen: &Dataset,
    seed: u64,
) -> Result<AttackReport> {
    if members.len() < 2 || unseen.len() < 2 {
        return Err(Error::Attack(
            "need at least two members and two unseen samples".into(),
        ));
    }
    let ids: HashSet<u64> = members.ids.iter().copied().collect();
    if unseen.ids.iter().any(|id| ids.contains(id)) {
        return Err(Error::Attack("unseen pool overlaps training data".into()));
    }
    let mf = extractor.extract(params, mask, members)?;
    let uf = extractor.extract(params, mask, unseen)?;
    let (mf_train, mf_eval) = mf.split_at(mf.len() / 2);
    let (uf_train, uf_eval) = uf.split_at(uf.len() / 2);
    let model = train_attack(&AttackDataset::from_parts(mf_train, uf_train), seed)?;
    let m = mf_eval.len().min(uf_eval.len());
    let eval = AttackDataset::from_parts(
        &sample_rows(mf_eval, m, seed, 1),
        &sample_rows(uf_eval, m, seed, 2),
    );
    Ok(AttackReport::from_pairs(vec![PairResult {
        attacker: 0,
        victim: 0,
        accuracy: evaluate_attack(&model, &eval)?,
        eval_size: eval.len(),
    }]))
}
