//! Central finite-difference checks for every training loss.

#![allow(dead_code)]

use std::sync::Arc;

use pgfn_core::baselines::{random_trajectory, BaselineConfig, Method, SacAgent, SqlAgent, Transition};
use pgfn_core::chemgraph::{fingerprint, Fingerprint, FingerprintSpec, FragmentVocab};
use pgfn_core::data::FeatureStats;
use pgfn_core::embed::{clip_loss, EmbedderConfig, GmcModel};
use pgfn_core::env::{Env, EnvConfig, State};
use pgfn_core::gflownet::{sample_trajectories, BackwardPolicy, PolicyConfig, PolicyModel};
use pgfn_core::net::NetConfig;
use pgfn_core::oracle::OracleModel;
use pgfn_tensor::{check_gradients, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
const TOL: f64 = 1e-4;
pub const CONFIGS: u64 = 20;

pub const SMALL_NET: NetConfig = NetConfig { embed_dim: 4, hidden: 8, depth: 2 };

pub fn env() -> Env {
    let vocab = FragmentVocab::generated("g", 4, &[1, 2, 3]).unwrap();
    Env::new(Arc::new(vocab), EnvConfig { max_nodes: 4, min_nodes: 1 }).unwrap()
}

pub fn fps(env: &Env, n: usize, spec: FingerprintSpec, rng: &mut ChaCha8Rng) -> Vec<Fingerprint> {
    (0..n)
        .map(|_| {
            let t = random_trajectory(env, rng).unwrap();
            fingerprint(t.terminal_mol(), spec).unwrap()
        })
        .collect()
}

pub fn transitions(env: &Env, n: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    let mut out = Vec::new();
    while out.len() < n {
        let t = random_trajectory(env, rng).unwrap();
        let log_r = rng.random_range(-2.0..2.0);
        for w in t.states.windows(2) {
            let action = env.valid_actions(&w[0]).unwrap().iter().position(|&a| env.step(&w[0], a).unwrap() == w[1]).unwrap();
            let reward = if w[1].terminal { log_r } else { 0.0 };
            out.push(Transition { state: w[0].clone(), action, reward, next: w[1].clone() });
        }
    }
    out.truncate(n);
    out
}

/// Moves every weight off its initialization so zero biases on all-zero
/// inputs do not sit exactly on a ReLU kink.
pub fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let names: Vec<String> = store.names().filter(|n| !n.starts_with("stats.")).map(str::to_string).collect();
    for n in names {
        for x in store.get_mut(&n).unwrap().data_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
}

pub fn trajectory_balance() {
    let env = env();
    for seed in 0..CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backward = if seed % 2 == 0 { BackwardPolicy::Uniform } else { BackwardPolicy::Learned };
        let mut policy = PolicyModel::new(&env, PolicyConfig { net: SMALL_NET, backward }, &mut rng).unwrap();
        jitter(&mut policy.store, &mut rng);
        let traj = sample_trajectories(&policy, &env, 1, &mut rng, 0.0).unwrap().remove(0);
        let log_r = rng.random_range(-3.0..3.0);
        let report = check_gradients(&policy.store, H, FLOOR, |t| {
            Ok(policy.tb_loss_on_tape(t, &env, &traj, log_r).unwrap())
        })
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

pub fn clip() {
    for seed in 0..CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = rng.random_range(1..6);
        let s = rng.random_range(1..5);
        let tau = rng.random_range(0.1..1.0);
        let mut store = ParamStore::new();
        for name in ["z", "w"] {
            let data = (0..n * s).map(|_| rng.random_range(-1.0..1.0)).collect();
            store.insert(name, Tensor::from_vec(n, s, data)).unwrap();
        }
        let report = check_gradients(&store, H, FLOOR, |t| {
            let z = t.param_named("z")?;
            let w = t.param_named("w")?;
            Ok(clip_loss(t, z, w, tau).unwrap())
        })
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

pub fn gmc() {
    let env = env();
    let spec = FingerprintSpec { bits: 32, radius: 1 };
    for seed in 0..CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let feat = 6;
        let n = rng.random_range(2..6);
        let morph: Vec<Vec<f64>> = (0..n).map(|_| (0..feat).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let stats = FeatureStats::from_rows(&morph).unwrap();
        let config = EmbedderConfig {
            latent_dim: 4,
            hidden: 6,
            tau: rng.random_range(0.2..1.0),
            fp: spec,
            ..Default::default()
        };
        let mut model = GmcModel::new(config, &stats, &mut rng).unwrap();
        jitter(&mut model.store, &mut rng);
        let fps = fps(&env, n, spec, &mut rng);
        let fp_refs: Vec<&Fingerprint> = fps.iter().collect();
        let morph_refs: Vec<&[f64]> = morph.iter().map(|m| m.as_slice()).collect();
        let report = check_gradients(&model.store, H, FLOOR, |t| {
            Ok(model.gmc_loss_on_tape(t, &fp_refs, &morph_refs).unwrap())
        })
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

pub fn masked_bce() {
    let env = env();
    let spec = FingerprintSpec { bits: 32, radius: 1 };
    for seed in 0..CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let assays: Vec<String> = (0..rng.random_range(1..4)).map(|a| format!("A{a}")).collect();
        let mut model = OracleModel::new(assays.clone(), spec.bits, &[8, 6], &mut rng).unwrap();
        jitter(&mut model.store, &mut rng);
        let n = rng.random_range(1..8);
        let fps = fps(&env, n, spec, &mut rng);
        let fp_refs: Vec<&Fingerprint> = fps.iter().collect();
        let labels: Vec<Vec<Option<bool>>> = (0..n)
            .map(|_| assays.iter().map(|_| rng.random_bool(0.7).then(|| rng.random_bool(0.5))).collect())
            .collect();
        if labels.iter().flatten().all(Option::is_none) {
            continue;
        }
        let report = check_gradients(&model.store, H, FLOOR, |t| Ok(model.bce_on_tape(t, &fp_refs, &labels).unwrap())).unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

pub fn baseline_config(method: Method, rng: &mut ChaCha8Rng) -> BaselineConfig {
    BaselineConfig { alpha: rng.random_range(0.05..1.0), net: SMALL_NET, ..BaselineConfig::for_method(method) }
}

pub fn soft_bellman() {
    let env = env();
    for seed in 0..CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let config = baseline_config(Method::Sql, &mut rng);
        let mut agent = SqlAgent::new(&env, &config, &mut rng).unwrap();
        jitter(&mut agent.store, &mut rng);
        let batch = transitions(&env, 6, &mut rng);
        let batch: Vec<&Transition> = batch.iter().collect();
        let targets = agent.bellman_targets(&env, &batch).unwrap();
        let report = check_gradients(&agent.store, H, FLOOR, |t| {
            Ok(agent.bellman_loss_on_tape(t, &env, &batch, &targets).unwrap())
        })
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
    }
}

pub fn sac_critic_and_actor() {
    let env = env();
    for seed in 0..CONFIGS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let config = baseline_config(Method::Sac, &mut rng);
        let mut agent = SacAgent::new(&env, &config, &mut rng).unwrap();
        jitter(&mut agent.store, &mut rng);
        let batch = transitions(&env, 6, &mut rng);
        let batch: Vec<&Transition> = batch.iter().collect();
        let targets = agent.critic_targets(&env, &batch).unwrap();
        let states: Vec<&State> = batch.iter().map(|t| &t.state).collect();
        let min_q = agent.actor_q(&env, &states).unwrap();

        let critic = check_gradients(&agent.store, H, FLOOR, |t| {
            Ok(agent.critic_loss_on_tape(t, &env, &batch, &targets).unwrap())
        })
        .unwrap();
        assert!(critic.max_rel_error < TOL, "critic seed {seed}: {critic:?}");

        let actor = check_gradients(&agent.store, H, FLOOR, |t| {
            Ok(agent.actor_loss_on_tape(t, &env, &states, &min_q).unwrap())
        })
        .unwrap();
        assert!(actor.max_rel_error < TOL, "actor seed {seed}: {actor:?}");
    }
}
