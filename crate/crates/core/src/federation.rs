//! Star-topology federated training with optional progressive pruning, plus the
//! centralized baseline trainer with one-shot pruning.
//!
//! Each round the controller broadcasts `(w, m)`, every learner runs masked SGD on its
//! own partition, the controller takes the dataset-size weighted mean of the returned
//! models, prunes the result to the scheduled sparsity and zeroes the pruned entries.
//! Without a schedule this is plain FedAvg.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::nn::{masked_sgd_step_in_place, FlatParams, ModelSpec, Network};
use crate::sparsify::{
    apply_mask_in_place, layerwise_magnitude_mask, magnitude_mask_with, PruneMask, PruneScope,
    SparsitySchedule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub num_learners: usize,
    pub rounds: u32,
    pub local_epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
    /// `None` runs plain FedAvg.
    pub schedule: Option<SparsitySchedule>,
    pub seed: u64,
    /// Whether biases and normalization parameters may be pruned.
    pub prune_secondary: bool,
    pub prune_scope: PruneScope,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            num_learners: 8,
            rounds: 40,
            local_epochs: 4,
            learning_rate: 1e-5,
            batch_size: 1,
            schedule: None,
            seed: 0,
            prune_secondary: true,
            prune_scope: PruneScope::Global,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_learners == 0 {
            return bad("federation.num_learners must be at least 1".into());
        }
        if self.rounds == 0 {
            return bad("federation.rounds must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("federation.batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "federation.learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
            if s.total_rounds != self.rounds {
                return bad(format!(
                    "schedule.total_rounds ({}) differs from federation.rounds ({})",
                    s.total_rounds, self.rounds
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LearnerState {
    pub id: usize,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModelState {
    pub round: u32,
    pub params: FlatParams,
    pub mask: PruneMask,
}

/// Parameters exchanged, counted as `2 * N_Z^t * L` per round where `N_Z^t` is the
/// unpruned parameter count of the model broadcast at the start of round `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub per_round: Vec<(u32, u64)>,
    pub cumulative: u64,
}

impl CommLedger {
    pub fn record(&mut self, round: u32, nonzero: usize, learners: usize) -> u64 {
        let n = 2 * nonzero as u64 * learners as u64;
        self.per_round.push((round, n));
        self.cumulative += n;
        n
    }

    /// Ledger of a run without training: the broadcast model has `P` parameters in round
    /// 1 and `P - floor(P * s_{t-1})` afterwards.
    pub fn simulate(
        param_count: usize,
        learners: usize,
        rounds: u32,
        schedule: Option<&SparsitySchedule>,
    ) -> Result<CommLedger> {
        let mut ledger = CommLedger::default();
        let mut nonzero = param_count;
        for t in 1..=rounds {
            ledger.record(t, nonzero, learners);
            if let Some(s) = schedule {
                nonzero = crate::sparsify::kept_count(param_count, s.sparsity_at_round(t)?);
            }
        }
        Ok(ledger)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub target_sparsity: f64,
    pub actual_sparsity: f64,
    pub nonzero_params: usize,
    pub cumulative_comm_params: u64,
    pub train_loss: f64,
    pub val_mae: Option<f64>,
    pub test_mae: Option<f64>,
    pub wall_time_s: f64,
}

pub fn write_metrics_csv(path: &Path, rows: &[RoundMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_metrics_csv_to(out: impl Write, rows: &[RoundMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG for `(seed, stream, index)`, e.g. one per learner and epoch.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(stream ^ splitmix(index))))
}

/// Visiting order of `n` samples in one epoch.
pub fn epoch_order(n: usize, seed: u64, stream: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, stream, epoch));
    order
}

/// Where a training run sits, for error context and RNG streams.
#[derive(Debug, Clone, Copy)]
struct TrainCtx {
    round: u32,
    learner: usize,
    first_epoch: u64,
    seed: u64,
}

/// Masked minibatch SGD over `data` for `epochs` epochs. Returns mean per-sample loss.
#[allow(clippy::too_many_arguments)]
fn train_epochs(
    net: &Network,
    params: &mut [f32],
    mask: &PruneMask,
    data: &Dataset,
    lr: f32,
    batch_size: usize,
    epochs: usize,
    ctx: TrainCtx,
) -> Result<f64> {
    let per = data.sample_len();
    let mut xs = Vec::with_capacity(batch_size * per);
    let mut ys = Vec::with_capacity(batch_size);
    let (mut total_loss, mut seen) = (0.0f64, 0usize);
    let mut step = 0;
    for e in 0..epochs {
        let order = epoch_order(
            data.len(),
            ctx.seed,
            ctx.learner as u64,
            ctx.first_epoch + e as u64,
        );
        for chunk in order.chunks(batch_size) {
            xs.clear();
            ys.clear();
            for &i in chunk {
                xs.extend_from_slice(data.sample(i));
                ys.push(data.labels[i]);
            }
            let (loss, grad) =
                net.loss_and_grad(params, &xs, &ys)
                    .map_err(|e| Error::TrainingDiverged {
                        round: ctx.round,
                        learner: ctx.learner,
                        step,
                        source: Box::new(e),
                    })?;
            masked_sgd_step_in_place(params, &grad, mask, lr)?;
            total_loss += loss as f64 * chunk.len() as f64;
            seen += chunk.len();
            step += 1;
        }
    }
    Ok(if seen == 0 {
        0.0
    } else {
        total_loss / seen as f64
    })
}

#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub params: FlatParams,
    pub num_samples: usize,
    pub mean_loss: f64,
}

/// Runs `E * ceil(|D_k| / batch_size)` masked SGD steps from the broadcast model.
pub fn local_train(
    net: &Network,
    learner: &LearnerState,
    global: &GlobalModelState,
    config: &FederationConfig,
) -> Result<LocalUpdate> {
    if learner.dataset.is_empty() {
        return Err(Error::InvalidData(format!(
            "learner {} has no data",
            learner.id
        )));
    }
    if global.mask.len() != global.params.len() {
        return Err(Error::DimensionMismatch {
            expected: global.params.len(),
            actual: global.mask.len(),
            context: "broadcast mask",
        });
    }
    let mut params = global.params.clone();
    let ctx = TrainCtx {
        round: global.round,
        learner: learner.id,
        first_epoch: (global.round.saturating_sub(1)) as u64 * config.local_epochs as u64,
        seed: config.seed,
    };
    let mean_loss = train_epochs(
        net,
        &mut params,
        &global.mask,
        &learner.dataset,
        config.learning_rate,
        config.batch_size,
        config.local_epochs,
        ctx,
    )?;
    Ok(LocalUpdate {
        params,
        num_samples: learner.dataset.len(),
        mean_loss,
    })
}

/// Dataset-size weighted mean, summed in the given (learner id) order.
pub fn aggregate(locals: &[(FlatParams, usize)]) -> Result<FlatParams> {
    let (first, _) = locals
        .first()
        .ok_or_else(|| Error::InvalidData("nothing to aggregate".into()))?;
    let len = first.len();
    if let Some((p, _)) = locals.iter().find(|(p, _)| p.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            actual: p.len(),
            context: "local model",
        });
    }
    if locals.iter().any(|(_, n)| *n == 0) {
        return Err(Error::InvalidData(
            "local dataset size must be positive".into(),
        ));
    }
    let total: usize = locals.iter().map(|(_, n)| n).sum();
    let mut acc = vec![0.0f64; len];
    for (p, n) in locals {
        let w = *n as f64 / total as f64;
        for (a, &v) in acc.iter_mut().zip(p.iter()) {
            *a += w * v as f64;
        }
    }
    Ok(FlatParams(acc.into_iter().map(|v| v as f32).collect()))
}

pub fn mean_absolute_error(net: &Network, params: &[f32], data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidData(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let errs: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| (net.predict_one(params, data.sample(i)) as f64 - data.labels[i] as f64).abs())
        .collect();
    Ok(errs.iter().sum::<f64>() / data.len() as f64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalSets<'a> {
    pub val: Option<&'a Dataset>,
    pub test: Option<&'a Dataset>,
}

impl EvalSets<'_> {
    fn evaluate(&self, net: &Network, params: &[f32]) -> Result<(Option<f64>, Option<f64>)> {
        let val = self
            .val
            .map(|d| mean_absolute_error(net, params, d))
            .transpose()?;
        let test = self
            .test
            .map(|d| mean_absolute_error(net, params, d))
            .transpose()?;
        Ok((val, test))
    }
}

/// Magnitude pruning of a model's flat parameters under `scope`, never resurrecting
/// anything `prev` pruned.
pub fn prune_model(
    net: &Network,
    params: &[f32],
    sparsity: f64,
    prev: &PruneMask,
    protected: Option<&PruneMask>,
    scope: PruneScope,
) -> Result<PruneMask> {
    match scope {
        PruneScope::Global => magnitude_mask_with(params, sparsity, prev, protected),
        PruneScope::PerLayer => {
            layerwise_magnitude_mask(params, sparsity, prev, &net.layer_param_ranges(), protected)
        }
    }
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub global: GlobalModelState,
    pub ledger: CommLedger,
    pub metrics: Vec<RoundMetrics>,
}

pub fn run_federation(
    config: &FederationConfig,
    spec: &ModelSpec,
    dataset: &Dataset,
    partitions: &[Partition],
    eval: EvalSets<'_>,
) -> Result<FederationOutcome> {
    run_federation_with(config, spec, dataset, partitions, eval, |_, _| {})
}

/// As [`run_federation`], calling `observer` with the pruned global model after each round.
pub fn run_federation_with(
    config: &FederationConfig,
    spec: &ModelSpec,
    dataset: &Dataset,
    partitions: &[Partition],
    eval: EvalSets<'_>,
    mut observer: impl FnMut(&GlobalModelState, &RoundMetrics),
) -> Result<FederationOutcome> {
    config.validate()?;
    if partitions.len() != config.num_learners {
        return Err(Error::InvalidConfig(format!(
            "{} partitions for {} learners",
            partitions.len(),
            config.num_learners
        )));
    }
    let net = Network::new(spec.clone())?;
    if dataset.sample_len() != net.input_len() {
        return Err(Error::DimensionMismatch {
            expected: net.input_len(),
            actual: dataset.sample_len(),
            context: "sample length vs model input",
        });
    }
    let mut learners: Vec<LearnerState> = partitions
        .iter()
        .map(|p| {
            Ok(LearnerState {
                id: p.learner_id,
                dataset: dataset.select_ids(&p.sample_ids)?,
            })
        })
        .collect::<Result<_>>()?;
    learners.sort_by_key(|l| l.id);
    if let Some(l) = learners.iter().find(|l| l.dataset.is_empty()) {
        return Err(Error::InvalidData(format!(
            "partition of learner {} is empty",
            l.id
        )));
    }

    let p = net.num_params();
    let protected = (!config.prune_secondary).then(|| net.secondary_params());
    let mut global = GlobalModelState {
        round: 0,
        params: net.init(config.seed),
        mask: PruneMask::ones(p),
    };
    let mut ledger = CommLedger::default();
    let mut metrics = Vec::with_capacity(config.rounds as usize);
    let start = Instant::now();

    for t in 1..=config.rounds {
        global.round = t;
        ledger.record(t, global.mask.count_ones(), learners.len());

        let updates: Vec<LocalUpdate> = learners
            .par_iter()
            .map(|l| local_train(&net, l, &global, config))
            .collect::<Result<_>>()?;
        let total: usize = updates.iter().map(|u| u.num_samples).sum();
        let train_loss = updates
            .iter()
            .map(|u| u.mean_loss * u.num_samples as f64 / total as f64)
            .sum();
        let locals: Vec<(FlatParams, usize)> = updates
            .into_iter()
            .map(|u| (u.params, u.num_samples))
            .collect();
        let mut params = aggregate(&locals)?;

        let target = match &config.schedule {
            Some(s) => {
                let target = s.sparsity_at_round(t)?;
                global.mask = prune_model(
                    &net,
                    &params,
                    target,
                    &global.mask,
                    protected.as_ref(),
                    config.prune_scope,
                )?;
                apply_mask_in_place(&mut params, &global.mask)?;
                target
            }
            None => 0.0,
        };
        global.params = params;

        let (val_mae, test_mae) = eval.evaluate(&net, &global.params)?;
        let nonzero = global.mask.count_ones();
        let row = RoundMetrics {
            round: t,
            target_sparsity: target,
            actual_sparsity: 1.0 - nonzero as f64 / p as f64,
            nonzero_params: nonzero,
            cumulative_comm_params: ledger.cumulative,
            train_loss,
            val_mae,
            test_mae,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        observer(&global, &row);
        metrics.push(row);
    }
    Ok(FederationOutcome {
        global,
        ledger,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CentralizedConfig {
    pub epochs: usize,
    /// Prune once after this many epochs, then finetune for the rest.
    pub prune_at: Option<usize>,
    pub target_sparsity: f64,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub prune_secondary: bool,
    pub prune_scope: PruneScope,
}

impl Default for CentralizedConfig {
    fn default() -> Self {
        CentralizedConfig {
            epochs: 100,
            prune_at: Some(90),
            target_sparsity: 0.9,
            learning_rate: 1e-5,
            batch_size: 1,
            seed: 0,
            prune_secondary: true,
            prune_scope: PruneScope::Global,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedOutcome {
    pub params: FlatParams,
    pub mask: PruneMask,
    /// One row per epoch; `round` holds the epoch number.
    pub metrics: Vec<RoundMetrics>,
}

pub fn run_centralized(
    spec: &ModelSpec,
    train: &Dataset,
    eval: EvalSets<'_>,
    config: &CentralizedConfig,
) -> Result<CentralizedOutcome> {
    if let Some(at) = config.prune_at {
        if at >= config.epochs {
            return Err(Error::InvalidConfig(format!(
                "centralized.prune_at ({at}) must be below centralized.epochs ({})",
                config.epochs
            )));
        }
    }
    if !(0.0..=1.0).contains(&config.target_sparsity) {
        return Err(Error::InvalidSparsity(config.target_sparsity));
    }
    if config.batch_size == 0 || !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::InvalidConfig(
            "centralized batch_size and learning_rate must be positive".into(),
        ));
    }
    if train.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    let net = Network::new(spec.clone())?;
    if train.sample_len() != net.input_len() {
        return Err(Error::DimensionMismatch {
            expected: net.input_len(),
            actual: train.sample_len(),
            context: "sample length vs model input",
        });
    }
    let p = net.num_params();
    let protected = (!config.prune_secondary).then(|| net.secondary_params());
    let mut params = net.init(config.seed);
    let mut mask = PruneMask::ones(p);
    let mut target = 0.0;
    let mut metrics = Vec::with_capacity(config.epochs);
    let start = Instant::now();
    for epoch in 0..config.epochs {
        let ctx = TrainCtx {
            round: 0,
            learner: 0,
            first_epoch: epoch as u64,
            seed: config.seed,
        };
        let train_loss = train_epochs(
            &net,
            &mut params,
            &mask,
            train,
            config.learning_rate,
            config.batch_size,
            1,
            ctx,
        )?;
        if config.prune_at == Some(epoch + 1) {
            target = config.target_sparsity;
            mask = prune_model(
                &net,
                &params,
                target,
                &mask,
                protected.as_ref(),
                config.prune_scope,
            )?;
            apply_mask_in_place(&mut params, &mask)?;
        }
        let (val_mae, test_mae) = eval.evaluate(&net, &params)?;
        metrics.push(RoundMetrics {
            round: epoch as u32 + 1,
            target_sparsity: target,
            actual_sparsity: mask.sparsity(),
            nonzero_params: mask.count_ones(),
            cumulative_comm_params: 0,
            train_loss,
            val_mae,
            test_mae,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(CentralizedOutcome {
        params: FlatParams(params.0),
        mask,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::nn::GradientVector;

    fn small_setup(n: usize) -> (ModelSpec, Dataset) {
        let d = generate_synthetic(&SyntheticSpec::new(n, vec![4], 21)).unwrap();
        (ModelSpec::mlp(4, &[8]), d)
    }

    fn config(learners: usize, rounds: u32) -> FederationConfig {
        FederationConfig {
            num_learners: learners,
            rounds,
            local_epochs: 1,
            learning_rate: 0.01,
            batch_size: 4,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn aggregate_examples() {
        let out = aggregate(&[
            (FlatParams(vec![1.0, 2.0]), 1),
            (FlatParams(vec![3.0, 4.0]), 3),
        ])
        .unwrap();
        assert_eq!(out.0, vec![2.5, 3.5]);
        let single = aggregate(&[(FlatParams(vec![0.3, -7.25]), 17)]).unwrap();
        assert_eq!(single.0, vec![0.3, -7.25]);
        let eq = aggregate(&[
            (FlatParams(vec![1.0]), 5),
            (FlatParams(vec![2.0]), 5),
            (FlatParams(vec![6.0]), 5),
        ])
        .unwrap();
        assert_eq!(eq.0, vec![3.0]);
        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[(FlatParams(vec![1.0]), 1), (FlatParams(vec![1.0, 2.0]), 1)]).is_err());
    }

    #[test]
    fn ledger_dense_formula() {
        let l = CommLedger::simulate(13, 3, 7, None).unwrap();
        assert_eq!(l.cumulative, 2 * 3 * 7 * 13);
        assert_eq!(l.per_round.len(), 7);
        assert_eq!(l.per_round.iter().map(|r| r.1).sum::<u64>(), l.cumulative);
    }

    #[test]
    fn local_train_zero_epochs_is_identity() {
        let (spec, d) = small_setup(20);
        let net = Network::new(spec).unwrap();
        let global = GlobalModelState {
            round: 1,
            params: net.init(1),
            mask: PruneMask::ones(net.num_params()),
        };
        let cfg = FederationConfig {
            local_epochs: 0,
            ..config(1, 1)
        };
        let out = local_train(&net, &LearnerState { id: 0, dataset: d }, &global, &cfg).unwrap();
        assert_eq!(out.params, global.params);
    }

    #[test]
    fn local_train_single_step_is_sgd() {
        let (spec, d) = small_setup(1);
        let net = Network::new(spec.clone()).unwrap();
        let global = GlobalModelState {
            round: 1,
            params: net.init(1),
            mask: PruneMask::ones(net.num_params()),
        };
        let cfg = config(1, 1);
        let out = local_train(
            &net,
            &LearnerState {
                id: 0,
                dataset: d.clone(),
            },
            &global,
            &cfg,
        )
        .unwrap();
        let (_, g) = net
            .loss_and_grad(&global.params, &d.inputs, &d.labels)
            .unwrap();
        let expect =
            crate::nn::masked_sgd_step(&global.params, &GradientVector(g), &global.mask, 0.01)
                .unwrap();
        assert_eq!(out.params, expect);
    }

    #[test]
    fn local_train_keeps_masked_zero() {
        let (spec, d) = small_setup(30);
        let net = Network::new(spec).unwrap();
        let mut mask = PruneMask::ones(net.num_params());
        mask.clear(2);
        mask.clear(40);
        let mut params = net.init(1);
        apply_mask_in_place(&mut params, &mask).unwrap();
        let global = GlobalModelState {
            round: 3,
            params,
            mask,
        };
        let out = local_train(
            &net,
            &LearnerState { id: 2, dataset: d },
            &global,
            &config(1, 3),
        )
        .unwrap();
        assert_eq!(out.params[2], 0.0);
        assert_eq!(out.params[40], 0.0);
    }

    #[test]
    fn local_train_rejects_empty() {
        let (spec, d) = small_setup(4);
        let net = Network::new(spec).unwrap();
        let empty = d.subset(&[]);
        let global = GlobalModelState {
            round: 1,
            params: net.init(0),
            mask: PruneMask::ones(net.num_params()),
        };
        assert!(local_train(
            &net,
            &LearnerState {
                id: 0,
                dataset: empty
            },
            &global,
            &config(1, 1)
        )
        .is_err());
    }

    #[test]
    fn divergence_reports_context() {
        let (spec, mut d) = small_setup(8);
        d.labels[0] = 1e30;
        let parts = vec![Partition {
            learner_id: 0,
            sample_ids: d.ids.clone(),
        }];
        let cfg = FederationConfig {
            learning_rate: 1e3,
            ..config(1, 3)
        };
        let err = run_federation(&cfg, &spec, &d, &parts, EvalSets::default()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::TrainingDiverged {
                    round: 1,
                    learner: 0,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn sparse_run_tracks_schedule_and_ledger() {
        let (spec, d) = small_setup(160);
        let parts = crate::data::partition(&d, &"uniform-iid".parse().unwrap(), 4, 0).unwrap();
        let cfg = FederationConfig {
            schedule: Some(SparsitySchedule::new(0.9, 6)),
            ..config(4, 6)
        };
        let mut prev = PruneMask::ones(49);
        let out = run_federation_with(&cfg, &spec, &d, &parts, EvalSets::default(), |g, m| {
            assert!(g.mask.is_subset_of(&prev));
            prev = g.mask.clone();
            for i in 0..g.params.len() {
                if !g.mask.get(i) {
                    assert_eq!(g.params[i], 0.0);
                }
            }
            assert_eq!(m.nonzero_params, g.mask.count_ones());
        })
        .unwrap();
        let p = 49;
        for m in &out.metrics {
            let pruned = crate::sparsify::prune_count(p, m.target_sparsity);
            assert_eq!(m.nonzero_params, p - pruned);
        }
        assert_eq!(
            out.metrics.last().unwrap().nonzero_params,
            p - crate::sparsify::prune_count(p, 0.9)
        );
        let sim = CommLedger::simulate(p, 4, 6, cfg.schedule.as_ref()).unwrap();
        assert_eq!(out.ledger, sim);
    }

    #[test]
    fn per_layer_scope_prunes_every_layer_to_target() {
        let (spec, d) = small_setup(160);
        let parts = crate::data::partition(&d, &"uniform-iid".parse().unwrap(), 4, 0).unwrap();
        let cfg = FederationConfig {
            schedule: Some(SparsitySchedule::new(0.75, 6)),
            prune_scope: PruneScope::PerLayer,
            ..config(4, 6)
        };
        let out = run_federation(&cfg, &spec, &d, &parts, EvalSets::default()).unwrap();
        // dense 4->8 has 40 params, dense 8->1 has 9
        let kept: Vec<usize> = Network::new(spec)
            .unwrap()
            .layer_param_ranges()
            .into_iter()
            .map(|r| r.filter(|&i| out.global.mask.get(i)).count())
            .collect();
        assert_eq!(kept, vec![10, 3]);
        assert_eq!(out.metrics.last().unwrap().nonzero_params, 13);
        assert_eq!(out.ledger.per_round.len(), 6);
    }

    #[test]
    fn order_of_partitions_does_not_matter() {
        let (spec, d) = small_setup(90);
        let mut parts = crate::data::partition(&d, &"skewed-iid".parse().unwrap(), 3, 0).unwrap();
        let cfg = FederationConfig {
            schedule: Some(SparsitySchedule::new(0.5, 3)),
            ..config(3, 3)
        };
        let a = run_federation(&cfg, &spec, &d, &parts, EvalSets::default()).unwrap();
        parts.reverse();
        let b = run_federation(&cfg, &spec, &d, &parts, EvalSets::default()).unwrap();
        assert_eq!(a.global, b.global);
    }

    #[test]
    fn schedule_round_mismatch_rejected() {
        let cfg = FederationConfig {
            schedule: Some(SparsitySchedule::new(0.5, 10)),
            ..config(2, 5)
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn centralized_zero_sparsity_prune_is_noop() {
        let (spec, d) = small_setup(50);
        let base = CentralizedConfig {
            epochs: 4,
            prune_at: None,
            target_sparsity: 0.0,
            learning_rate: 0.01,
            batch_size: 5,
            seed: 2,
            prune_secondary: true,
            prune_scope: PruneScope::Global,
        };
        let a = run_centralized(&spec, &d, EvalSets::default(), &base).unwrap();
        let b = run_centralized(
            &spec,
            &d,
            EvalSets::default(),
            &CentralizedConfig {
                prune_at: Some(2),
                ..base.clone()
            },
        )
        .unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn centralized_single_survivor() {
        let (spec, d) = small_setup(50);
        let p = 49;
        let cfg = CentralizedConfig {
            epochs: 3,
            prune_at: Some(2),
            target_sparsity: (p - 1) as f64 / p as f64,
            learning_rate: 0.01,
            batch_size: 5,
            seed: 2,
            prune_secondary: true,
            prune_scope: PruneScope::Global,
        };
        let out = run_centralized(&spec, &d, EvalSets::default(), &cfg).unwrap();
        assert_eq!(out.mask.count_ones(), 1);
        assert_eq!(out.params.iter().filter(|v| **v != 0.0).count(), 1);
        assert!(run_centralized(
            &spec,
            &d,
            EvalSets::default(),
            &CentralizedConfig {
                prune_at: Some(3),
                ..cfg
            }
        )
        .is_err());
    }

    #[test]
    fn metrics_csv_columns() {
        let row = RoundMetrics {
            round: 1,
            target_sparsity: 0.0,
            actual_sparsity: 0.0,
            nonzero_params: 5,
            cumulative_comm_params: 10,
            train_loss: 1.5,
            val_mae: None,
            test_mae: Some(0.25),
            wall_time_s: 0.0,
        };
        let mut buf = Vec::new();
        write_metrics_csv_to(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "round,target_sparsity,actual_sparsity,nonzero_params,cumulative_comm_params,train_loss,val_mae,test_mae,wall_time_s"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "1,0.0,0.0,5,10,1.5,,0.25,0.0");
    }
}
