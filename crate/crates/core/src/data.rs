//! Synthetic regression data and the four federated data environments.
//!
//! Environments combine an amount policy (uniform or right-skewed learner sizes) with a
//! label policy (IID: every learner sees the whole label range; non-IID: every learner
//! holds contiguous label-quantile chunks covering only part of it).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_shape: Vec<usize>,
    /// Row-major samples, `len() * sample_len()` values.
    pub inputs: Vec<f32>,
    pub labels: Vec<f32>,
    pub ids: Vec<u64>,
}

impl Dataset {
    pub fn new(
        sample_shape: Vec<usize>,
        inputs: Vec<f32>,
        labels: Vec<f32>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 {
            return Err(Error::InvalidData("empty sample shape".into()));
        }
        if inputs.len() != labels.len() * per {
            return Err(Error::InvalidData(format!(
                "{} input values for {} samples of {per}",
                inputs.len(),
                labels.len()
            )));
        }
        if ids.len() != labels.len() {
            return Err(Error::InvalidData("ids and labels differ in length".into()));
        }
        if let Some(i) = labels.iter().position(|l| !l.is_finite()) {
            return Err(Error::InvalidData(format!(
                "label of sample {} is not finite",
                ids[i]
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidData(format!("duplicate sample id {dup}")));
        }
        Ok(Dataset {
            sample_shape,
            inputs,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.sample_len();
        &self.inputs[i * n..(i + 1) * n]
    }

    /// New dataset holding the given positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(positions.len() * self.sample_len());
        for &p in positions {
            inputs.extend_from_slice(self.sample(p));
        }
        Dataset {
            sample_shape: self.sample_shape.clone(),
            inputs,
            labels: positions.iter().map(|&p| self.labels[p]).collect(),
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
        }
    }

    pub fn select_ids(&self, ids: &[u64]) -> Result<Dataset> {
        let index: HashMap<u64, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        let positions = ids
            .iter()
            .map(|id| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::InvalidData(format!("unknown sample id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.subset(&positions))
    }

    /// Consecutive splits of the given sizes; the sizes must sum to at most `len()`.
    pub fn split(&self, sizes: &[usize]) -> Result<Vec<Dataset>> {
        let total: usize = sizes.iter().sum();
        if total > self.len() {
            return Err(Error::InvalidData(format!(
                "cannot split {} samples into {sizes:?}",
                self.len()
            )));
        }
        let mut start = 0;
        Ok(sizes
            .iter()
            .map(|&n| {
                let d = self.subset(&(start..start + n).collect::<Vec<_>>());
                start += n;
                d
            })
            .collect())
    }

    pub fn label_range(&self) -> Option<(f32, f32)> {
        self.labels.iter().fold(None, |acc, &l| match acc {
            None => Some((l, l)),
            Some((lo, hi)) => Some((lo.min(l), hi.max(l))),
        })
    }
}

/// Deterministic smooth target function over a flattened sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFn {
    dirs: [Vec<f64>; 3],
    offset: f64,
    scale: f64,
}

impl LabelFn {
    pub fn new(features: usize, seed: u64, offset: f64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_6265_6c66_6e00);
        let mut unit = || {
            let v: Vec<f64> = (0..features)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
        };
        LabelFn {
            dirs: [unit(), unit(), unit()],
            offset,
            scale,
        }
    }

    /// `offset + scale * (tanh(a.x) + 0.5 b.x + 0.25 (c.x)^2)` for unit directions a, b, c.
    pub fn eval_f64(&self, x: &[f32]) -> f64 {
        let dot = |d: &[f64]| d.iter().zip(x).map(|(a, &b)| a * b as f64).sum::<f64>();
        let (a, b, c) = (dot(&self.dirs[0]), dot(&self.dirs[1]), dot(&self.dirs[2]));
        self.offset + self.scale * (a.tanh() + 0.5 * b + 0.25 * c * c)
    }

    pub fn eval(&self, x: &[f32]) -> f32 {
        self.eval_f64(x) as f32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub sample_shape: Vec<usize>,
    /// Label noise standard deviation, in units of `label_scale`.
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub label_offset: f64,
    #[serde(default = "default_scale")]
    pub label_scale: f64,
}

fn default_noise() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(n_samples: usize, sample_shape: Vec<usize>, seed: u64) -> Self {
        SyntheticSpec {
            n_samples,
            sample_shape,
            noise_std: default_noise(),
            seed,
            label_offset: 0.0,
            label_scale: 1.0,
        }
    }

    pub fn label_fn(&self) -> LabelFn {
        LabelFn::new(
            self.sample_shape.iter().product(),
            self.seed,
            self.label_offset,
            self.label_scale,
        )
    }
}

/// Standard-normal inputs with labels from [`LabelFn`] plus Gaussian noise. Ids are `0..n`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let per: usize = spec.sample_shape.iter().product();
    if spec.n_samples == 0 || per == 0 {
        return Err(Error::InvalidData(format!(
            "need at least one sample of non-empty shape, got {} x {:?}",
            spec.n_samples, spec.sample_shape
        )));
    }
    if !(spec.noise_std.is_finite() && spec.noise_std >= 0.0) {
        return Err(Error::InvalidData(format!(
            "invalid noise_std {}",
            spec.noise_std
        )));
    }
    let f = spec.label_fn();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6e6f_6973_6500_0000);
    let inputs: Vec<f32> = (0..spec.n_samples * per)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let labels = inputs
        .chunks_exact(per)
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            (f.eval_f64(x) + spec.noise_std * spec.label_scale * z) as f32
        })
        .collect();
    Dataset::new(
        spec.sample_shape.clone(),
        inputs,
        labels,
        (0..spec.n_samples as u64).collect(),
    )
}

/// Reads `id,label,<features...>` rows, or `id,label,tensor_path` rows where the path
/// (relative to the CSV file) holds raw little-endian f32 values.
pub fn load_csv(path: &Path, sample_shape: Option<Vec<usize>>) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::InvalidData(format!(
            "{}: header must start with id,label and name at least one feature column",
            path.display()
        )));
    }
    let tensor_mode = headers.len() == 3 && &headers[2] == "tensor_path";
    let base = path.parent().unwrap_or(Path::new("."));
    let (mut inputs, mut labels, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    let mut width = None;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|e| {
                Error::InvalidData(format!("row {}: column {}: {e}", row + 1, &headers[i]))
            })
        };
        ids.push(
            rec[0]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::InvalidData(format!("row {}: id: {e}", row + 1)))?,
        );
        labels.push(parse(1)? as f32);
        let values: Vec<f32> = if tensor_mode {
            let p = base.join(rec[2].trim());
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if bytes.len() % 4 != 0 {
                return Err(Error::InvalidData(format!(
                    "{}: not a whole number of f32 values",
                    p.display()
                )));
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        } else {
            (2..rec.len())
                .map(|i| parse(i).map(|v| v as f32))
                .collect::<Result<_>>()?
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::InvalidData(format!(
                    "row {}: {} feature values, expected {w}",
                    row + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        inputs.extend(values);
    }
    let width = width.ok_or_else(|| Error::InvalidData(format!("{}: no rows", path.display())))?;
    let shape = sample_shape.unwrap_or_else(|| vec![width]);
    if shape.iter().product::<usize>() != width {
        return Err(Error::InvalidData(format!(
            "sample shape {shape:?} does not hold {width} values"
        )));
    }
    Dataset::new(shape, inputs, labels, ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Amount {
    Uniform,
    Skewed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelDistribution {
    Iid,
    NonIid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentKind {
    pub amount: Amount,
    pub distribution: LabelDistribution,
    /// Learner `k` receives a share proportional to `skew_factor^-k` (Skewed only).
    #[serde(default = "default_skew")]
    pub skew_factor: f64,
    /// Contiguous label chunks per learner (non-IID only).
    #[serde(default = "default_chunks")]
    pub chunks_per_learner: usize,
}

fn default_skew() -> f64 {
    1.5
}

fn default_chunks() -> usize {
    1
}

impl EnvironmentKind {
    pub fn new(amount: Amount, distribution: LabelDistribution) -> Self {
        EnvironmentKind {
            amount,
            distribution,
            skew_factor: default_skew(),
            chunks_per_learner: default_chunks(),
        }
    }

    pub fn all() -> [EnvironmentKind; 4] {
        [
            Self::new(Amount::Uniform, LabelDistribution::Iid),
            Self::new(Amount::Uniform, LabelDistribution::NonIid),
            Self::new(Amount::Skewed, LabelDistribution::Iid),
            Self::new(Amount::Skewed, LabelDistribution::NonIid),
        ]
    }
}

impl fmt::Display for EnvironmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = match self.amount {
            Amount::Uniform => "uniform",
            Amount::Skewed => "skewed",
        };
        let d = match self.distribution {
            LabelDistribution::Iid => "iid",
            LabelDistribution::NonIid => "noniid",
        };
        write!(f, "{a}-{d}")
    }
}

impl FromStr for EnvironmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, d) = s
            .split_once('-')
            .ok_or_else(|| Error::InvalidConfig(format!("unknown environment {s:?}")))?;
        let amount = match a {
            "uniform" => Amount::Uniform,
            "skewed" => Amount::Skewed,
            _ => return Err(Error::InvalidConfig(format!("unknown environment {s:?}"))),
        };
        let dist = match d {
            "iid" => LabelDistribution::Iid,
            "noniid" => LabelDistribution::NonIid,
            _ => return Err(Error::InvalidConfig(format!("unknown environment {s:?}"))),
        };
        Ok(EnvironmentKind::new(amount, dist))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub learner_id: usize,
    pub sample_ids: Vec<u64>,
}

/// Per-learner sample counts for `total` samples.
///
/// Skewed allocation uses largest-remainder rounding of the geometric shares.
pub fn learner_sizes(total: usize, learners: usize, env: &EnvironmentKind) -> Result<Vec<usize>> {
    if learners == 0 || learners > total {
        return Err(Error::InvalidData(format!(
            "cannot split {total} samples across {learners} learners"
        )));
    }
    let sizes = match env.amount {
        Amount::Uniform => (0..learners)
            .map(|k| total / learners + usize::from(k < total % learners))
            .collect(),
        Amount::Skewed => {
            if !(env.skew_factor.is_finite() && env.skew_factor > 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "skew_factor must exceed 1, got {}",
                    env.skew_factor
                )));
            }
            let weights: Vec<f64> = (0..learners)
                .map(|k| env.skew_factor.powi(-(k as i32)))
                .collect();
            let wsum: f64 = weights.iter().sum();
            let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / wsum).collect();
            let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
            let mut order: Vec<usize> = (0..learners).collect();
            order.sort_by(|&a, &b| {
                let fa = quotas[a] - quotas[a].floor();
                let fb = quotas[b] - quotas[b].floor();
                fb.total_cmp(&fa).then(a.cmp(&b))
            });
            let short = total - sizes.iter().sum::<usize>();
            for &k in order.iter().take(short) {
                sizes[k] += 1;
            }
            if let Some(k) = sizes.iter().position(|&s| s == 0) {
                return Err(Error::InvalidData(format!(
                    "{total} samples leave learner {k} empty under skew {}",
                    env.skew_factor
                )));
            }
            sizes
        }
    };
    Ok(sizes)
}

/// Splits `dataset` across `learners` according to `env`. Deterministic given `seed`.
///
/// Each learner's ids are listed in dataset order.
pub fn partition(
    dataset: &Dataset,
    env: &EnvironmentKind,
    learners: usize,
    seed: u64,
) -> Result<Vec<Partition>> {
    let sizes = learner_sizes(dataset.len(), learners, env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| {
        dataset.labels[a]
            .total_cmp(&dataset.labels[b])
            .then(dataset.ids[a].cmp(&dataset.ids[b]))
    });
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); learners];
    match env.distribution {
        LabelDistribution::Iid => {
            // shuffle within label strata, then deal by proportional deficit
            for block in order.chunks_mut(learners) {
                block.shuffle(&mut rng);
            }
            let total = dataset.len() as f64;
            for (i, &pos) in order.iter().enumerate() {
                let done = (i + 1) as f64 / total;
                let k = (0..learners)
                    .filter(|&k| assigned[k].len() < sizes[k])
                    .max_by(|&a, &b| {
                        let da = sizes[a] as f64 * done - assigned[a].len() as f64;
                        let db = sizes[b] as f64 * done - assigned[b].len() as f64;
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("sizes sum to dataset length");
                assigned[k].push(pos);
            }
        }
        LabelDistribution::NonIid => {
            if learners < 2 {
                return Err(Error::InvalidConfig(
                    "non-IID environments need at least 2 learners".into(),
                ));
            }
            let chunks = env.chunks_per_learner.max(1);
            let mut slots: Vec<(usize, usize)> = Vec::with_capacity(learners * chunks);
            for (k, &size) in sizes.iter().enumerate() {
                for c in 0..chunks {
                    let n = size / chunks + usize::from(c < size % chunks);
                    if n > 0 {
                        slots.push((k, n));
                    }
                }
            }
            slots.shuffle(&mut rng);
            let mut start = 0;
            for (k, n) in slots {
                assigned[k].extend_from_slice(&order[start..start + n]);
                start += n;
            }
        }
    }
    Ok(assigned
        .into_iter()
        .enumerate()
        .map(|(learner_id, mut positions)| {
            positions.sort_unstable();
            Partition {
                learner_id,
                sample_ids: positions.into_iter().map(|p| dataset.ids[p]).collect(),
            }
        })
        .collect())
}

/// Interior bin edges splitting `labels` into `bins` equal-count quantile bins.
pub fn quantile_edges(labels: &[f32], bins: usize) -> Vec<f32> {
    let mut sorted = labels.to_vec();
    sorted.sort_by(f32::total_cmp);
    (1..bins).map(|b| sorted[b * sorted.len() / bins]).collect()
}

/// Histogram of `labels` over bins delimited by `edges` (left-closed).
pub fn histogram(labels: &[f32], edges: &[f32]) -> Vec<usize> {
    let mut h = vec![0; edges.len() + 1];
    for &l in labels {
        h[edges.partition_point(|&e| e <= l)] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(n: usize, seed: u64) -> Dataset {
        generate_synthetic(&SyntheticSpec::new(n, vec![6], seed)).unwrap()
    }

    #[test]
    fn synthetic_is_deterministic() {
        assert_eq!(flat(100, 3), flat(100, 3));
        assert_ne!(flat(100, 3), flat(100, 4));
    }

    #[test]
    fn noiseless_labels_equal_label_fn() {
        let mut spec = SyntheticSpec::new(50, vec![2, 2, 2], 9);
        spec.noise_std = 0.0;
        let d = generate_synthetic(&spec).unwrap();
        let f = spec.label_fn();
        for i in 0..d.len() {
            assert_eq!(d.labels[i], f.eval(d.sample(i)));
        }
    }

    #[test]
    fn full_size_train_split() {
        let d = generate_synthetic(&SyntheticSpec::new(7_312, vec![4], 1)).unwrap();
        assert_eq!(d.len(), 7_312);
        assert!(d.labels.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(generate_synthetic(&SyntheticSpec::new(0, vec![4], 1)).is_err());
        assert!(generate_synthetic(&SyntheticSpec::new(3, vec![0], 1)).is_err());
        assert!(partition(&flat(3, 1), &"uniform-iid".parse().unwrap(), 4, 0).is_err());
    }

    #[test]
    fn uniform_iid_equal_sizes() {
        let d = flat(7_312, 2);
        let parts = partition(&d, &"uniform-iid".parse().unwrap(), 8, 5).unwrap();
        assert!(parts.iter().all(|p| p.sample_ids.len() == 914));
    }

    #[test]
    fn skewed_sizes_strictly_decrease() {
        let env: EnvironmentKind = "skewed-iid".parse().unwrap();
        let sizes = learner_sizes(4_000, 8, &env).unwrap();
        assert_eq!(sizes.iter().sum::<usize>(), 4_000);
        // oracle: geometric shares r^-k / sum r^-j
        let wsum: f64 = (0..8).map(|k| 1.5f64.powi(-k)).sum();
        for (k, &s) in sizes.iter().enumerate() {
            let q = 4_000.0 * 1.5f64.powi(-(k as i32)) / wsum;
            assert!((s as f64 - q).abs() < 1.0, "learner {k}: {s} vs {q}");
        }
        assert!(sizes.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn environments_are_disjoint_covers_with_label_properties() {
        let d = flat(4_000, 11);
        let edges = quantile_edges(&d.labels, 10);
        let (gmin, gmax) = d.label_range().unwrap();
        for env in EnvironmentKind::all() {
            let parts = partition(&d, &env, 8, 3).unwrap();
            let mut all: Vec<u64> = parts.iter().flat_map(|p| p.sample_ids.clone()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..4_000).collect::<Vec<_>>(), "{env}");
            for p in &parts {
                let local = d.select_ids(&p.sample_ids).unwrap();
                let h = histogram(&local.labels, &edges);
                let (lo, hi) = local.label_range().unwrap();
                match env.distribution {
                    LabelDistribution::Iid => assert!(h.iter().all(|&c| c > 0), "{env}: {h:?}"),
                    LabelDistribution::NonIid => {
                        assert!(h.contains(&0), "{env}: {h:?}");
                        assert!(lo > gmin || hi < gmax, "{env}");
                    }
                }
            }
            assert_eq!(parts, partition(&d, &env, 8, 3).unwrap());
        }
    }

    #[test]
    fn multi_chunk_noniid() {
        let d = flat(800, 4);
        let env = EnvironmentKind {
            chunks_per_learner: 2,
            ..EnvironmentKind::new(Amount::Uniform, LabelDistribution::NonIid)
        };
        let parts = partition(&d, &env, 4, 1).unwrap();
        assert!(parts.iter().all(|p| p.sample_ids.len() == 200));
    }

    #[test]
    fn noniid_needs_two_learners() {
        assert!(partition(&flat(10, 1), &"uniform-noniid".parse().unwrap(), 1, 0).is_err());
    }

    #[test]
    fn environment_names_roundtrip() {
        for env in EnvironmentKind::all() {
            assert_eq!(env.to_string().parse::<EnvironmentKind>().unwrap(), env);
        }
        assert!("uniform".parse::<EnvironmentKind>().is_err());
    }

    #[test]
    fn csv_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "id,label,a,b\n3,1.5,0.1,0.2\n7,-2,1,2\n").unwrap();
        let d = load_csv(&p, None).unwrap();
        assert_eq!(d.ids, vec![3, 7]);
        assert_eq!(d.labels, vec![1.5, -2.0]);
        assert_eq!(d.inputs, vec![0.1, 0.2, 1.0, 2.0]);

        let raw: Vec<u8> = [1.0f32, 2.0, 3.0, 4.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        std::fs::write(dir.path().join("t0.bin"), &raw).unwrap();
        let p2 = dir.path().join("t.csv");
        std::fs::write(&p2, "id,label,tensor_path\n0,5,t0.bin\n").unwrap();
        let d = load_csv(&p2, Some(vec![1, 2, 2])).unwrap();
        assert_eq!(d.inputs, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.sample_shape, vec![1, 2, 2]);

        std::fs::write(&p, "id,label,a\n1,2,x\n").unwrap();
        assert!(load_csv(&p, None).is_err());
    }
}
