mod common;

use common::{max_abs_diff, reference_average, reference_comm, reference_sgd};
use fedsparsify::data::{generate_synthetic, partition, EnvironmentKind, SyntheticSpec};
use fedsparsify::federation::{
    run_federation, run_federation_with, CommLedger, EvalSets, FederationConfig,
};
use fedsparsify::nn::{ModelSpec, Network};
use fedsparsify::sparsify::SparsitySchedule;

fn config(learners: usize, rounds: u32, epochs: usize) -> FederationConfig {
    FederationConfig {
        num_learners: learners,
        rounds,
        local_epochs: epochs,
        learning_rate: 0.02,
        batch_size: 5,
        seed: 17,
        ..Default::default()
    }
}

#[test]
fn fedavg_matches_sequential_reference() {
    let data = generate_synthetic(&SyntheticSpec::new(300, vec![5], 2)).unwrap();
    let spec = ModelSpec::mlp(5, &[7]);
    let net = Network::new(spec.clone()).unwrap();
    for env in ["uniform-iid", "skewed-noniid"] {
        let env: EnvironmentKind = env.parse().unwrap();
        let parts = partition(&data, &env, 3, 4).unwrap();
        let cfg = config(3, 3, 2);
        let out = run_federation(&cfg, &spec, &data, &parts, EvalSets::default()).unwrap();

        let mut global = net.init(cfg.seed).0;
        for round in 0..cfg.rounds as u64 {
            let e = cfg.local_epochs as u64;
            let locals: Vec<(Vec<f32>, usize)> = parts
                .iter()
                .map(|p| {
                    let local = data.select_ids(&p.sample_ids).unwrap();
                    let mut params = global.clone();
                    let epochs = round * e..(round + 1) * e;
                    reference_sgd(
                        &net,
                        &mut params,
                        &local,
                        cfg.learning_rate,
                        cfg.batch_size,
                        epochs,
                        cfg.seed,
                        p.learner_id as u64,
                    );
                    (params, local.len())
                })
                .collect();
            global = reference_average(&locals);
        }
        let diff = max_abs_diff(&out.global.params, &global);
        assert!(diff <= 1e-6, "{env}: max difference {diff}");
    }
}

#[test]
fn ledger_of_a_real_run_matches_closed_form_accounting() {
    let data = generate_synthetic(&SyntheticSpec::new(200, vec![4], 8)).unwrap();
    let spec = ModelSpec::mlp(4, &[16, 8]);
    let p = Network::new(spec.clone()).unwrap().num_params() as u64;
    let env: EnvironmentKind = "uniform-iid".parse().unwrap();
    let parts = partition(&data, &env, 4, 0).unwrap();
    let mut cfg = config(4, 12, 1);
    cfg.schedule = Some(SparsitySchedule::new(0.9, 12));
    let mut nonzero = Vec::new();
    let out = run_federation_with(&cfg, &spec, &data, &parts, EvalSets::default(), |g, m| {
        nonzero.push(g.params.iter().filter(|v| **v != 0.0).count());
        assert_eq!(m.nonzero_params, g.mask.count_ones());
    })
    .unwrap();
    assert_eq!(out.ledger.cumulative, reference_comm(p, 4, 12, Some(0.9)));
    assert_eq!(
        out.ledger,
        CommLedger::simulate(p as usize, 4, 12, cfg.schedule.as_ref()).unwrap()
    );
    for (t, (nz, m)) in nonzero.iter().zip(&out.metrics).enumerate() {
        assert!(*nz <= m.nonzero_params, "round {}", t + 1);
    }
}
