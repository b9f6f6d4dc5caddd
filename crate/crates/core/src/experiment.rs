//! JSON-configured experiment runner shared by the command-line tool and the Python bindings.
//!
//! A configuration file needs `model` and `data`; every other section has defaults.
//!
//! ```json
//! {
//!   "model": {"input_shape": [16], "layers": [
//!     {"type": "dense", "inputs": 16, "outputs": 32}, {"type": "relu"},
//!     {"type": "dense", "inputs": 32, "outputs": 1}]},
//!   "data": {"source": "synthetic", "sample_shape": [16], "train": 4000, "test": 500},
//!   "federation": {"num_learners": 8, "rounds": 40, "local_epochs": 4, "learning_rate": 0.01},
//!   "schedule": {"final_sparsity": 0.95, "total_rounds": 40},
//!   "environment": "uniform-iid",
//!   "output_dir": "runs/example",
//!   "seed": 7
//! }
//! ```
//!
//! CSV sources use `{"source": "csv", "train": "train.csv", "test": "test.csv"}` with the
//! row format described in [`crate::data::load_csv`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_csv, partition, Dataset, EnvironmentKind, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::federation::{
    prune_model, run_centralized, run_federation, run_federation_with, write_metrics_csv,
    CentralizedConfig, EvalSets, FederationConfig, LearnerState, RoundMetrics,
};
use crate::model_file::SparseModelFile;
use crate::nn::{FlatParams, ModelSpec, Network};
use crate::privacy::{
    centralized_attack, federated_attack_matrix_with, AttackReport, AttackTrainConfig,
    FeatureExtractor,
};
use crate::sparse_bench::{benchmark, BenchConfig, BenchReport};
use crate::sparsify::{PruneMask, SparsitySchedule};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MODEL_FILE: &str = "model.fspw";
pub const ATTACK_FILE: &str = "attack_report.json";
pub const ATTACK_ROUNDS_FILE: &str = "attack_rounds.json";
pub const BENCH_FILE: &str = "bench.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Centralized,
    Federated,
    Attack,
    Bench,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Centralized => "centralized",
            Mode::Federated => "federated",
            Mode::Attack => "attack",
            Mode::Bench => "bench",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// One synthetic pool split into consecutive train/val/test/unseen blocks.
    Synthetic {
        sample_shape: Vec<usize>,
        train: usize,
        #[serde(default)]
        val: usize,
        #[serde(default)]
        test: usize,
        /// Held-out samples used as non-members by the attack.
        #[serde(default)]
        unseen: usize,
        #[serde(default = "default_noise")]
        noise_std: f64,
        #[serde(default)]
        label_offset: f64,
        #[serde(default = "default_scale")]
        label_scale: f64,
        /// Defaults to the experiment seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        train: PathBuf,
        #[serde(default)]
        val: Option<PathBuf>,
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default)]
        unseen: Option<PathBuf>,
        #[serde(default)]
        sample_shape: Option<Vec<usize>>,
    },
}

fn default_noise() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

/// Accepts either `"skewed-noniid"` or the full object form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum EnvironmentField {
    Name(String),
    Full(EnvironmentKind),
}

fn de_environment<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<EnvironmentKind, D::Error> {
    match EnvironmentField::deserialize(d)? {
        EnvironmentField::Name(s) => {
            EnvironmentKind::from_str(&s).map_err(serde::de::Error::custom)
        }
        EnvironmentField::Full(e) => Ok(e),
    }
}

fn default_environment() -> EnvironmentKind {
    "uniform-iid".parse().expect("valid environment name")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    /// Attack a saved model instead of training one first.
    pub model_path: Option<PathBuf>,
    /// Also attack the global model after every round.
    pub per_round: bool,
    pub l2: f64,
    pub iterations: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        let c = AttackTrainConfig::default();
        AttackSection {
            model_path: None,
            per_round: false,
            l2: c.l2,
            iterations: c.iterations,
        }
    }
}

impl AttackSection {
    fn train_config(&self) -> AttackTrainConfig {
        AttackTrainConfig {
            l2: self.l2,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    /// Benchmark a saved model; otherwise a freshly initialized one pruned to `sparsity`.
    pub model_path: Option<PathBuf>,
    pub sparsity: f64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub memory_budget_bytes: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        let c = BenchConfig::default();
        BenchSection {
            model_path: None,
            sparsity: 0.0,
            duration_s: c.duration_s,
            warmup_s: c.warmup_s,
            memory_budget_bytes: c.memory_budget_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub data: DataSource,
    #[serde(default)]
    pub federation: FederationConfig,
    /// Sparsification schedule for federated runs; absent means plain FedAvg.
    #[serde(default)]
    pub schedule: Option<SparsitySchedule>,
    #[serde(default = "default_environment", deserialize_with = "de_environment")]
    pub environment: EnvironmentKind,
    #[serde(default)]
    pub centralized: CentralizedConfig,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Overrides the seeds of the federation, centralized and synthetic data sections.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub sparsity: Option<f64>,
    pub environment: Option<EnvironmentKind>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// `sparsity` sets the final target of every mode; 0 disables federated pruning.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(e) = &o.environment {
            self.environment = e.clone();
        }
        if let Some(s) = o.sparsity {
            self.centralized.target_sparsity = s;
            self.bench.sparsity = s;
            if s == 0.0 {
                self.schedule = None;
            } else {
                let rounds = self.federation.rounds;
                let sched = self
                    .schedule
                    .get_or_insert_with(|| SparsitySchedule::new(s, rounds));
                sched.final_sparsity = s;
            }
        }
    }

    /// Effective configuration with the top-level seed and schedule pushed into each section.
    pub fn resolved(&self) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        if c.federation.schedule.is_some() {
            if c.schedule.is_some() {
                return Err(Error::InvalidConfig(
                    "schedule given both at top level and in federation.schedule".into(),
                ));
            }
            c.schedule = c.federation.schedule.take();
        }
        c.federation.schedule = c.schedule.clone();
        if let Some(s) = c.seed {
            c.federation.seed = s;
            c.centralized.seed = s;
            if let DataSource::Synthetic { seed, .. } = &mut c.data {
                seed.get_or_insert(s);
            }
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        Network::new(self.model.clone())?;
        self.federation.validate()?;
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.bench.sparsity) {
            return bad(format!(
                "bench.sparsity must lie in [0, 1), got {}",
                self.bench.sparsity
            ));
        }
        if let DataSource::Synthetic {
            train,
            sample_shape,
            ..
        } = &self.data
        {
            if *train == 0 {
                return bad("data.train must be positive".into());
            }
            let n: usize = sample_shape.iter().product();
            let expected: usize = self.model.input_shape.iter().product();
            if n != expected {
                return bad(format!(
                    "data.sample_shape has {n} values but model.input_shape expects {expected}"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Option<Dataset>,
    pub unseen: Option<Dataset>,
}

impl Splits {
    fn eval(&self) -> EvalSets<'_> {
        EvalSets {
            val: self.val.as_ref(),
            test: self.test.as_ref(),
        }
    }
}

pub fn load_data(source: &DataSource, model: &ModelSpec) -> Result<Splits> {
    match source {
        DataSource::Synthetic {
            sample_shape,
            train,
            val,
            test,
            unseen,
            noise_std,
            label_offset,
            label_scale,
            seed,
        } => {
            let spec = SyntheticSpec {
                n_samples: train + val + test + unseen,
                sample_shape: sample_shape.clone(),
                noise_std: *noise_std,
                seed: seed.unwrap_or(0),
                label_offset: *label_offset,
                label_scale: *label_scale,
            };
            let mut parts = generate_synthetic(&spec)?
                .split(&[*train, *val, *test, *unseen])?
                .into_iter()
                .map(|d| (!d.is_empty()).then_some(d));
            let mut next = || parts.next().flatten();
            Ok(Splits {
                train: next().expect("train size is positive"),
                val: next(),
                test: next(),
                unseen: next(),
            })
        }
        DataSource::Csv {
            train,
            val,
            test,
            unseen,
            sample_shape,
        } => {
            let shape = sample_shape
                .clone()
                .or_else(|| Some(model.input_shape.clone()));
            let load =
                |p: &Option<PathBuf>| p.as_deref().map(|p| load_csv(p, shape.clone())).transpose();
            Ok(Splits {
                train: load_csv(train, shape.clone())?,
                val: load(val)?,
                test: load(test)?,
                unseen: load(unseen)?,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub environment: String,
    pub seed: u64,
    pub param_count: usize,
    pub nonzero_params: usize,
    pub sparsity: f64,
    pub cumulative_comm: u64,
    pub rounds: usize,
    pub final_train_loss: Option<f64>,
    pub final_val_mae: Option<f64>,
    pub final_test_mae: Option<f64>,
    pub spec_digest: String,
    pub model_file: Option<PathBuf>,
    pub model_file_bytes: Option<usize>,
    pub attack_mean_accuracy: Option<f64>,
    pub attack_success_count: Option<usize>,
    pub bench_dense_items_per_second: Option<f64>,
    pub bench_sparse_items_per_second: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundAttack {
    pub round: u32,
    pub report: AttackReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub param_count: usize,
    pub nonzero_params: usize,
    pub sparsity: f64,
    pub dense: BenchReport,
    pub sparse: BenchReport,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub metrics: Vec<RoundMetrics>,
    pub params: FlatParams,
    pub mask: PruneMask,
    pub attack: Option<AttackReport>,
    pub bench: Option<BenchOutput>,
    pub output_dir: PathBuf,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

struct Trained {
    params: FlatParams,
    mask: PruneMask,
    metrics: Vec<RoundMetrics>,
    cumulative_comm: u64,
    round_attacks: Vec<RoundAttack>,
}

fn learners_of(train: &Dataset, c: &ExperimentConfig) -> Result<Vec<LearnerState>> {
    let parts = partition(
        train,
        &c.environment,
        c.federation.num_learners,
        c.federation.seed,
    )?;
    parts
        .into_iter()
        .map(|p| {
            Ok(LearnerState {
                id: p.learner_id,
                dataset: train.select_ids(&p.sample_ids)?,
            })
        })
        .collect()
}

fn attack_model(
    c: &ExperimentConfig,
    extractor: &FeatureExtractor,
    learners: &[LearnerState],
    splits: &Splits,
    params: &[f32],
    mask: &PruneMask,
) -> Result<AttackReport> {
    let unseen = splits.unseen.as_ref().ok_or_else(|| {
        Error::InvalidConfig("attack mode needs an unseen data pool (data.unseen)".into())
    })?;
    let seed = c.federation.seed;
    if learners.len() < 2 {
        centralized_attack(extractor, params, Some(mask), &splits.train, unseen, seed)
    } else {
        federated_attack_matrix_with(
            extractor,
            params,
            Some(mask),
            learners,
            unseen,
            seed,
            &c.attack.train_config(),
        )
    }
}

fn train_federated(c: &ExperimentConfig, splits: &Splits, attack_rounds: bool) -> Result<Trained> {
    let parts = partition(
        &splits.train,
        &c.environment,
        c.federation.num_learners,
        c.federation.seed,
    )?;
    let mut reports = Vec::new();
    let outcome = if attack_rounds {
        let extractor = FeatureExtractor::new(&c.model)?;
        let learners = learners_of(&splits.train, c)?;
        run_federation_with(
            &c.federation,
            &c.model,
            &splits.train,
            &parts,
            splits.eval(),
            |g, _| {
                let report = attack_model(c, &extractor, &learners, splits, &g.params, &g.mask);
                reports.push(report.map(|report| RoundAttack {
                    round: g.round,
                    report,
                }));
            },
        )?
    } else {
        run_federation(
            &c.federation,
            &c.model,
            &splits.train,
            &parts,
            splits.eval(),
        )?
    };
    Ok(Trained {
        params: outcome.global.params,
        mask: outcome.global.mask,
        metrics: outcome.metrics,
        cumulative_comm: outcome.ledger.cumulative,
        round_attacks: reports.into_iter().collect::<Result<_>>()?,
    })
}

fn load_model_for(c: &ExperimentConfig, path: &Path) -> Result<(FlatParams, PruneMask)> {
    let file = SparseModelFile::load(path)?;
    file.check_spec(&c.model)?;
    Ok((file.to_params(), file.mask))
}

/// Runs `mode` and writes its artifacts under the configured output directory.
pub fn run(config: &ExperimentConfig, mode: Mode) -> Result<RunOutcome> {
    let c = config.resolved()?;
    let out = c.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let net = Network::new(c.model.clone())?;
    let p = net.num_params();

    let mut attack = None;
    let mut bench = None;
    let trained = match mode {
        Mode::Federated => Some(train_federated(&c, &load_data(&c.data, &c.model)?, false)?),
        Mode::Centralized => {
            let splits = load_data(&c.data, &c.model)?;
            let o = run_centralized(&c.model, &splits.train, splits.eval(), &c.centralized)?;
            Some(Trained {
                params: o.params,
                mask: o.mask,
                metrics: o.metrics,
                cumulative_comm: 0,
                round_attacks: Vec::new(),
            })
        }
        Mode::Attack => {
            let splits = load_data(&c.data, &c.model)?;
            let extractor = FeatureExtractor::new(&c.model)?;
            let learners = learners_of(&splits.train, &c)?;
            let (trained, params, mask) = match &c.attack.model_path {
                Some(path) => {
                    let (params, mask) = load_model_for(&c, path)?;
                    (None, params, mask)
                }
                None => {
                    let t = train_federated(&c, &splits, c.attack.per_round)?;
                    let (params, mask) = (t.params.clone(), t.mask.clone());
                    (Some(t), params, mask)
                }
            };
            let report = attack_model(&c, &extractor, &learners, &splits, &params, &mask)?;
            write_json(&out.join(ATTACK_FILE), &report)?;
            if let Some(t) = &trained {
                if c.attack.per_round {
                    write_json(&out.join(ATTACK_ROUNDS_FILE), &t.round_attacks)?;
                }
            }
            attack = Some((report, params, mask));
            trained
        }
        Mode::Bench => {
            let (params, mask) = match &c.bench.model_path {
                Some(path) => load_model_for(&c, path)?,
                None => {
                    let params = net.init(c.federation.seed);
                    let protected = (!c.federation.prune_secondary).then(|| net.secondary_params());
                    let mask = prune_model(
                        &net,
                        &params,
                        c.bench.sparsity,
                        &PruneMask::ones(p),
                        protected.as_ref(),
                        c.federation.prune_scope,
                    )?;
                    (params, mask)
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(c.federation.seed);
            let input: Vec<f32> = (0..net.input_len())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let cfg = BenchConfig {
                duration_s: c.bench.duration_s,
                warmup_s: c.bench.warmup_s,
                memory_budget_bytes: c.bench.memory_budget_bytes,
            };
            let (dense, sparse) = benchmark(&net, &params, &mask, &input, &cfg)?;
            let report = BenchOutput {
                param_count: p,
                nonzero_params: mask.count_ones(),
                sparsity: mask.sparsity(),
                dense,
                sparse,
            };
            write_json(&out.join(BENCH_FILE), &report)?;
            bench = Some((report, params, mask));
            None
        }
    };

    let (params, mask, metrics, cumulative_comm) = match trained {
        Some(t) => (t.params, t.mask, t.metrics, t.cumulative_comm),
        None => {
            let (params, mask) = match (&attack, &bench) {
                (Some((_, p, m)), _) | (_, Some((_, p, m))) => (p.clone(), m.clone()),
                _ => unreachable!("every mode yields a model"),
            };
            (params, mask, Vec::new(), 0)
        }
    };

    let mut model_file = None;
    let mut model_file_bytes = None;
    if !metrics.is_empty() {
        write_metrics_csv(&out.join(METRICS_FILE), &metrics)?;
        let path = out.join(MODEL_FILE);
        let file = SparseModelFile::from_model(&c.model, &params, &mask)?;
        file.save(&path)?;
        model_file_bytes = Some(file.encoded_len());
        model_file = Some(path);
    }

    let last = metrics.last();
    let attack = attack.map(|(r, _, _)| r);
    let bench = bench.map(|(b, _, _)| b);
    let summary = RunSummary {
        mode,
        environment: c.environment.to_string(),
        seed: c.federation.seed,
        param_count: p,
        nonzero_params: mask.count_ones(),
        sparsity: mask.sparsity(),
        cumulative_comm,
        rounds: metrics.len(),
        final_train_loss: last.map(|m| m.train_loss),
        final_val_mae: last.and_then(|m| m.val_mae),
        final_test_mae: last.and_then(|m| m.test_mae),
        spec_digest: hex(&c.model.digest()),
        model_file,
        model_file_bytes,
        attack_mean_accuracy: attack.as_ref().map(|a| a.mean_accuracy),
        attack_success_count: attack.as_ref().map(|a| a.success_count),
        bench_dense_items_per_second: bench.as_ref().map(|b| b.dense.items_per_second),
        bench_sparse_items_per_second: bench.as_ref().map(|b| b.sparse.items_per_second),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(RunOutcome {
        summary,
        metrics,
        params,
        mask,
        attack,
        bench,
        output_dir: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub param_count: u64,
    pub nonzero_params: usize,
    pub sparsity: f64,
    pub spec_digest: String,
    pub file_bytes: usize,
    pub dense_bytes: u64,
}

pub fn inspect_model(path: &Path) -> Result<ModelInfo> {
    let f = SparseModelFile::load(path)?;
    Ok(ModelInfo {
        param_count: f.param_count,
        nonzero_params: f.nonzero_count(),
        sparsity: f.sparsity,
        spec_digest: hex(&f.spec_digest),
        file_bytes: f.encoded_len(),
        dense_bytes: 4 * f.param_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json(dir: &Path) -> String {
        format!(
            r#"{{
              "model": {{"input_shape": [4], "layers": [
                {{"type": "dense", "inputs": 4, "outputs": 8}}, {{"type": "relu"}},
                {{"type": "dense", "inputs": 8, "outputs": 1}}]}},
              "data": {{"source": "synthetic", "sample_shape": [4], "train": 64, "test": 16, "unseen": 32}},
              "federation": {{"num_learners": 2, "rounds": 3, "local_epochs": 1, "learning_rate": 0.01, "batch_size": 4}},
              "output_dir": {:?},
              "seed": 3
            }}"#,
            dir.display().to_string()
        )
    }

    #[test]
    fn missing_field_is_named() {
        let err = ExperimentConfig::from_json(
            r#"{"data": {"source": "synthetic", "sample_shape": [1], "train": 1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("model"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&base_json(dir.path())).unwrap();
        v["federation"]["learners"] = 3.into();
        let err = ExperimentConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("learners"), "{err}");
        let mut v: serde_json::Value = serde_json::from_str(&base_json(dir.path())).unwrap();
        v["data"]["trian"] = 3.into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn environment_accepts_name_or_object() {
        let dir = tempfile::tempdir().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&base_json(dir.path())).unwrap();
        v["environment"] = "skewed-noniid".into();
        let c = ExperimentConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(c.environment.to_string(), "skewed-noniid");
        v["environment"] = serde_json::to_value(EnvironmentKind::all()[1].clone()).unwrap();
        let c = ExperimentConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(c.environment, EnvironmentKind::all()[1]);
        v["environment"] = "sideways".into();
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::from_json(&base_json(dir.path())).unwrap();
        c.apply(&Overrides {
            seed: Some(11),
            output_dir: Some("elsewhere".into()),
            sparsity: Some(0.9),
            environment: Some("skewed-iid".parse().unwrap()),
        });
        let r = c.resolved().unwrap();
        assert_eq!(r.federation.seed, 11);
        assert_eq!(r.output_dir, PathBuf::from("elsewhere"));
        assert_eq!(r.federation.schedule.as_ref().unwrap().final_sparsity, 0.9);
        assert_eq!(r.federation.schedule.as_ref().unwrap().total_rounds, 3);
        assert_eq!(r.centralized.target_sparsity, 0.9);
        c.apply(&Overrides {
            sparsity: Some(0.0),
            ..Default::default()
        });
        assert!(c.resolved().unwrap().federation.schedule.is_none());
    }

    #[test]
    fn federated_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::from_json(&base_json(dir.path())).unwrap();
        c.apply(&Overrides {
            sparsity: Some(0.5),
            ..Default::default()
        });
        let o = run(&c, Mode::Federated).unwrap();
        let p = o.summary.param_count;
        assert_eq!(o.summary.nonzero_params, p - p / 2);
        assert_eq!(o.metrics.len(), 3);
        for f in [METRICS_FILE, SUMMARY_FILE, MODEL_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let loaded = SparseModelFile::load(&dir.path().join(MODEL_FILE)).unwrap();
        assert_eq!(loaded.to_params(), o.params);
        let info = inspect_model(&dir.path().join(MODEL_FILE)).unwrap();
        assert_eq!(info.nonzero_params, o.summary.nonzero_params);
    }

    #[test]
    fn attack_and_bench_modes() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::from_json(&base_json(dir.path())).unwrap();
        c.attack.per_round = true;
        c.attack.iterations = 50;
        let o = run(&c, Mode::Attack).unwrap();
        assert_eq!(o.attack.unwrap().attacks, 2);
        let rounds: Vec<RoundAttack> =
            serde_json::from_str(&fs::read_to_string(dir.path().join(ATTACK_ROUNDS_FILE)).unwrap())
                .unwrap();
        assert_eq!(rounds.len(), 3);

        c.bench.model_path = Some(dir.path().join(MODEL_FILE));
        c.bench.duration_s = 0.01;
        c.bench.warmup_s = 0.0;
        c.output_dir = dir.path().join("bench");
        let b = run(&c, Mode::Bench).unwrap().bench.unwrap();
        assert!(b.dense.total_items > 0 && b.sparse.total_items > 0);
        assert!(dir.path().join("bench").join(BENCH_FILE).exists());
    }

    #[test]
    fn attack_without_unseen_pool_fails() {
        let dir = tempfile::tempdir().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&base_json(dir.path())).unwrap();
        v["data"]["unseen"] = 0.into();
        let c = ExperimentConfig::from_json(&v.to_string()).unwrap();
        assert!(matches!(
            run(&c, Mode::Attack),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn saved_model_must_match_spec() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig::from_json(&base_json(dir.path())).unwrap();
        run(&c, Mode::Federated).unwrap();
        let mut other = c.clone();
        other.model = ModelSpec::mlp(4, &[9]);
        other.bench.model_path = Some(dir.path().join(MODEL_FILE));
        other.output_dir = dir.path().join("b");
        assert!(run(&other, Mode::Bench).is_err());
    }
}
