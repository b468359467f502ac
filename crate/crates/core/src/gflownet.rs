//! Trajectory-balance training of a fragment-assembly policy.

use std::collections::{HashMap, VecDeque};

use pgfn_tensor::{
    categorical_sample, log_softmax, Adam, Checkpoint, LayerSpec, Mlp, ParamStore, Tape, TensorError, Tensor, Var,
};
use rand::Rng;

use crate::chemgraph::canonical_hash;
use crate::env::{BackwardAction, Env, EnvError, State, Trajectory};
use crate::evalsuite::RunMetrics;
use crate::net::{ActionNet, NetConfig, NetOutput};
use crate::reward::{RewardError, RewardFn};

#[derive(Debug, thiserror::Error)]
pub enum GfnError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("trajectory does not end in a terminal state")]
    IncompleteTrajectory,
    #[error("bad config: {0}")]
    BadConfig(String),
}

pub type Result<T, E = GfnError> = std::result::Result<T, E>;

pub const CHECKPOINT_KIND: &str = "gfn-policy v1";
const LOG_Z: &str = "logZ";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardPolicy {
    Uniform,
    Learned,
}

impl BackwardPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            BackwardPolicy::Uniform => "uniform",
            BackwardPolicy::Learned => "learned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(BackwardPolicy::Uniform),
            "learned" => Some(BackwardPolicy::Learned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub net: NetConfig,
    pub backward: BackwardPolicy,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { net: NetConfig::default(), backward: BackwardPolicy::Uniform }
    }
}

/// Forward policy, optional learned backward policy and the scalar log Z.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    pub store: ParamStore,
    pub config: PolicyConfig,
    pf: ActionNet,
    pb: Option<Mlp>,
}

/// Forward pass of one state on a tape.
#[derive(Debug, Clone, Copy)]
struct StepOut {
    net: NetOutput,
    log_probs: Var,
}

fn pb_layout(env: &Env, net: NetConfig) -> LayerSpec {
    LayerSpec::new(vec![net.hidden + 2 * net.embed_dim + env.vocab().max_arity(), net.hidden, 1])
}

impl PolicyModel {
    pub fn new<R: Rng + ?Sized>(env: &Env, config: PolicyConfig, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        store.insert(LOG_Z, Tensor::scalar(0.0))?;
        let pf = ActionNet::init(&mut store, "pf", env, config.net, rng)?;
        let pb = match config.backward {
            BackwardPolicy::Uniform => None,
            BackwardPolicy::Learned => Some(Mlp::init(&mut store, "pb", pb_layout(env, config.net), rng)?),
        };
        Ok(PolicyModel { store, config, pf, pb })
    }

    pub fn log_z(&self) -> f64 {
        self.store.get(LOG_Z).map_or(0.0, |t| t.item())
    }

    pub fn set_log_z(&mut self, v: f64) {
        if let Some(t) = self.store.get_mut(LOG_Z) {
            t.set(0, 0, v);
        }
    }

    fn forward_state(&self, tape: &mut Tape<'_>, env: &Env, state: &State) -> Result<StepOut> {
        if state.terminal {
            return Err(EnvError::TerminalState.into());
        }
        let net = self.pf.forward(tape, env, state)?;
        let log_probs = tape.log_softmax_rows(net.scores, None);
        Ok(StepOut { net, log_probs })
    }

    /// Log-probabilities over `env.valid_actions(state)`.
    pub fn forward_logprobs(&self, env: &Env, state: &State) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward_state(&mut tape, env, state)?;
        Ok(tape.value(out.log_probs).data().to_vec())
    }

    /// log P_B(parent | state).
    pub fn backward_logprob(&self, env: &Env, state: &State, parent: &State) -> Result<f64> {
        let parents = env.backward_transitions(state)?;
        if state.terminal || parents.len() == 1 {
            return Ok(0.0);
        }
        match &self.pb {
            None => Ok(-(parents.len() as f64).ln()),
            Some(_) => {
                let mut tape = Tape::new(&self.store);
                let out = self.pf.forward(&mut tape, env, state)?;
                let v = self.learned_pb(&mut tape, env, state, &out, parent)?;
                Ok(tape.scalar(v))
            }
        }
    }

    /// Log-softmax of the backward head over distinct parents, picked at `parent`.
    fn learned_pb(&self, tape: &mut Tape<'_>, env: &Env, state: &State, out: &NetOutput, parent: &State) -> Result<Var> {
        let pb = self.pb.as_ref().expect("learned backward head");
        let parents = env.backward_transitions(state)?;
        let want = parent.key();
        let pick = parents
            .iter()
            .position(|(p, _)| p.key() == want)
            .ok_or_else(|| EnvError::InvalidAction("parent is not a backward transition".into()))?;
        if parents.len() == 1 {
            return Ok(tape.constant(Tensor::scalar(0.0)));
        }
        let nodes = out.nodes.expect("non-empty state");
        let a = env.vocab().max_arity();
        let mut leaves = Vec::with_capacity(parents.len());
        let mut hosts = Vec::with_capacity(parents.len());
        let mut stems = Tensor::zeros(parents.len(), a);
        for (i, (_, b)) in parents.iter().enumerate() {
            let BackwardAction::RemoveLeaf(leaf) = *b else { unreachable!("non-terminal parents remove leaves") };
            let (_, host, host_stem) = state.mol.neighbors(leaf)[0];
            leaves.push(leaf);
            hosts.push(host);
            stems.set(i, host_stem, 1.0);
        }
        let t = tape.gather_rows(out.trunk, vec![0; parents.len()]);
        let l = tape.gather_rows(nodes, leaves);
        let h = tape.gather_rows(nodes, hosts);
        let s = tape.constant(stems);
        let x = tape.concat_cols(&[t, l, h, s]);
        let scores = pb.forward(tape, x)?;
        let scores = tape.reshape(scores, 1, parents.len());
        let lsm = tape.log_softmax_rows(scores, None);
        Ok(tape.gather(lsm, vec![pick]))
    }

    /// `logZ + Σ log P_F − log R − Σ log P_B` on a tape, given forward passes
    /// for every non-terminal state of `traj`.
    fn tb_residual(
        &self,
        tape: &mut Tape<'_>,
        env: &Env,
        traj: &Trajectory,
        fwd: &[StepOut],
        log_reward: f64,
    ) -> Result<Var> {
        if !traj.is_complete() {
            return Err(GfnError::IncompleteTrajectory);
        }
        let n = traj.actions.len();
        let mut terms = Vec::with_capacity(2 * n + 1);
        terms.push(tape.param_named(LOG_Z)?);
        let mut constant = -log_reward;
        let mut pb_terms = Vec::new();
        for t in 0..n {
            let (s, next) = (&traj.states[t], &traj.states[t + 1]);
            let idx = env.equivalent_actions(s, traj.actions[t], next)?;
            let picked = tape.gather(fwd[t].log_probs, idx);
            terms.push(if tape.shape(picked).1 == 1 { picked } else { tape.logsumexp_rows(picked) });
            if next.terminal {
                continue;
            }
            match self.pb {
                None => constant += (env.num_parents(next)? as f64).ln(),
                Some(_) => pb_terms.push(self.learned_pb(tape, env, next, &fwd[t + 1].net, s)?),
            }
        }
        let mut total = tape.concat_cols(&terms);
        total = tape.sum(total);
        if !pb_terms.is_empty() {
            let pb = tape.concat_cols(&pb_terms);
            let pb = tape.sum(pb);
            total = tape.sub(total, pb);
        }
        Ok(tape.shift(total, constant))
    }

    fn forward_all(&self, tape: &mut Tape<'_>, env: &Env, traj: &Trajectory) -> Result<Vec<StepOut>> {
        traj.states.iter().filter(|s| !s.terminal).map(|s| self.forward_state(tape, env, s)).collect()
    }

    /// Squared trajectory-balance residual, recorded on `tape`.
    pub fn tb_loss_on_tape(&self, tape: &mut Tape<'_>, env: &Env, traj: &Trajectory, log_reward: f64) -> Result<Var> {
        let fwd = self.forward_all(tape, env, traj)?;
        let r = self.tb_residual(tape, env, traj, &fwd, log_reward)?;
        Ok(tape.square(r))
    }

    pub fn tb_loss(&self, env: &Env, traj: &Trajectory, log_reward: f64) -> Result<f64> {
        let mut tape = Tape::new(&self.store);
        let l = self.tb_loss_on_tape(&mut tape, env, traj, log_reward)?;
        Ok(tape.scalar(l))
    }

    /// Samples one complete trajectory, recording the forward passes on `tape`.
    fn rollout<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        env: &Env,
        rng: &mut R,
        eps: f64,
        temperature: f64,
    ) -> Result<(Trajectory, Vec<StepOut>)> {
        let mut traj = Trajectory::start();
        let mut fwd = Vec::new();
        while !traj.is_complete() {
            let out = self.forward_state(tape, env, traj.last())?;
            let lp = tape.value(out.log_probs).data();
            let i = if eps > 0.0 && rng.random::<f64>() < eps {
                rng.random_range(0..lp.len())
            } else if temperature == 1.0 {
                categorical_sample(lp, rng)?
            } else {
                let scaled: Vec<f64> = lp.iter().map(|x| x / temperature).collect();
                categorical_sample(&log_softmax(&scaled)?, rng)?
            };
            fwd.push(out);
            let action = env.valid_actions(traj.last())?[i];
            traj.push(env, action)?;
        }
        Ok((traj, fwd))
    }

    pub fn to_checkpoint(&self, env: &Env) -> Checkpoint {
        let c = self.config;
        Checkpoint::new(CHECKPOINT_KIND, self.store.clone())
            .with_meta("embed_dim", c.net.embed_dim)
            .with_meta("hidden", c.net.hidden)
            .with_meta("depth", c.net.depth)
            .with_meta("pb", c.backward.as_str())
            .with_meta("vocab", env.vocab().version())
            .with_meta("vocab_size", env.vocab().len())
            .with_meta("max_nodes", env.config().max_nodes)
    }

    pub fn from_checkpoint(ck: Checkpoint, env: &Env) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let meta = |k: &str| ck.meta(k).ok_or_else(|| GfnError::BadConfig(format!("checkpoint lacks `{k}`")));
        let num = |k: &str| -> Result<usize> {
            meta(k)?.parse().map_err(|_| GfnError::BadConfig(format!("bad `{k}` in checkpoint")))
        };
        if meta("vocab")? != env.vocab().version() || num("vocab_size")? != env.vocab().len() {
            return Err(GfnError::BadConfig("checkpoint was trained on a different vocabulary".into()));
        }
        let net = NetConfig { embed_dim: num("embed_dim")?, hidden: num("hidden")?, depth: num("depth")? };
        let backward = BackwardPolicy::parse(meta("pb")?).ok_or_else(|| GfnError::BadConfig("bad `pb`".into()))?;
        let pf = ActionNet::bind(&ck.store, "pf", env, net)?;
        let pb = match backward {
            BackwardPolicy::Uniform => None,
            BackwardPolicy::Learned => Some(Mlp::bind(&ck.store, "pb", pb_layout(env, net))?),
        };
        ck.store.require(LOG_Z)?;
        Ok(PolicyModel { store: ck.store, config: PolicyConfig { net, backward }, pf, pb })
    }
}

/// `n` complete trajectories from the forward policy with ε-uniform mixing.
pub fn sample_trajectories<R: Rng + ?Sized>(
    policy: &PolicyModel,
    env: &Env,
    n: usize,
    rng: &mut R,
    eps: f64,
) -> Result<Vec<Trajectory>> {
    (0..n)
        .map(|_| {
            let mut tape = Tape::new(&policy.store);
            Ok(policy.rollout(&mut tape, env, rng, eps, 1.0)?.0)
        })
        .collect()
}

/// Bounded FIFO of trajectories with uniform sampling.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Trajectory>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity.min(4096)) }
    }

    /// Buffer filled with `count` decompositions of `target`.
    pub fn seeded<R: Rng + ?Sized>(
        env: &Env,
        target: &crate::chemgraph::PartialMol,
        count: usize,
        capacity: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut buf = ReplayBuffer::new(capacity);
        for t in env.decompose_target(target, rng, count)? {
            buf.push(t);
        }
        Ok(buf)
    }

    pub fn push(&mut self, t: Trajectory) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Trajectory> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub z_lr: f64,
    pub temperature: f64,
    pub epsilon: f64,
    pub replay_ratio: f64,
    pub buffer_capacity: usize,
    pub replay_seed_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            steps: 10_000,
            lr: 1e-4,
            z_lr: 1e-3,
            temperature: 1.0,
            epsilon: 0.01,
            replay_ratio: 0.25,
            buffer_capacity: 1000,
            replay_seed_count: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.lr, self.z_lr, self.temperature];
        if self.batch_size == 0 || pos.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(GfnError::BadConfig("batch, lr, z_lr and temperature must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.replay_ratio) || !(0.0..=1.0).contains(&self.epsilon) {
            return Err(GfnError::BadConfig("need 0 ≤ replay_ratio < 1 and 0 ≤ eps ≤ 1".into()));
        }
        Ok(())
    }

    /// Replayed trajectories per batch when a buffer is in use.
    pub fn replay_count(&self) -> usize {
        (self.replay_ratio * self.batch_size as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub log_z: Vec<f64>,
}

/// Memoizes reward evaluations by canonical hash.
pub struct RewardCache<'a> {
    reward: &'a dyn RewardFn,
    cache: HashMap<u64, (f64, f64)>,
}

impl<'a> RewardCache<'a> {
    pub fn new(reward: &'a dyn RewardFn) -> Self {
        RewardCache { reward, cache: HashMap::new() }
    }

    /// `(raw, log)` reward of a terminal molecule.
    pub fn get(&mut self, mol: &crate::chemgraph::PartialMol) -> Result<(f64, f64)> {
        let h = canonical_hash(mol);
        if let Some(&v) = self.cache.get(&h) {
            return Ok(v);
        }
        let v = (self.reward.raw_reward(mol)?, self.reward.log_reward(mol)?);
        self.cache.insert(h, v);
        Ok(v)
    }
}

/// Runs `config.steps` trajectory-balance updates. Every on-policy terminal
/// sample is appended to `metrics` with its step index.
pub fn train<R: Rng + ?Sized>(
    policy: &mut PolicyModel,
    env: &Env,
    reward: &dyn RewardFn,
    config: &TrainConfig,
    replay: Option<&ReplayBuffer>,
    rng: &mut R,
    metrics: &mut RunMetrics,
) -> Result<TrainReport> {
    config.validate()?;
    let adam = Adam::new(config.lr).with_override(LOG_Z, config.z_lr);
    let mut rewards = RewardCache::new(reward);
    let mut report = TrainReport::default();
    let replay = replay.filter(|b| !b.is_empty());
    let n_replay = replay.map_or(0, |_| config.replay_count().min(config.batch_size));
    for step in 0..config.steps {
        let (loss, grads) = {
            let mut tape = Tape::new(&policy.store);
            let mut residuals = Vec::with_capacity(config.batch_size);
            for _ in n_replay..config.batch_size {
                let (traj, fwd) = policy.rollout(&mut tape, env, rng, config.epsilon, config.temperature)?;
                let (raw, log_r) = rewards.get(traj.terminal_mol())?;
                residuals.push(policy.tb_residual(&mut tape, env, &traj, &fwd, log_r)?);
                metrics.push(step, traj.terminal_mol().clone(), raw, log_r);
            }
            if let Some(buf) = replay {
                for traj in buf.sample(n_replay, rng) {
                    let (_, log_r) = rewards.get(traj.terminal_mol())?;
                    let fwd = policy.forward_all(&mut tape, env, traj)?;
                    residuals.push(policy.tb_residual(&mut tape, env, traj, &fwd, log_r)?);
                }
            }
            let r = tape.concat_cols(&residuals);
            let sq = tape.square(r);
            let loss = tape.mean(sq);
            let value = tape.scalar(loss);
            (value, tape.backward_scalar(loss)?)
        };
        if !loss.is_finite() {
            return Err(GfnError::BadConfig(format!("loss diverged at step {step}")));
        }
        adam.step(&mut policy.store, &grads)?;
        report.losses.push(loss);
        report.log_z.push(policy.log_z());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::FragmentVocab;
    use crate::env::{Action, EnvConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn small_env(v: usize, m: usize) -> Env {
        let vocab = FragmentVocab::generated("t", v, &[1, 2, 2]).unwrap();
        Env::new(Arc::new(vocab), EnvConfig { max_nodes: m, min_nodes: 1 }).unwrap()
    }

    fn small_net() -> PolicyConfig {
        PolicyConfig { net: NetConfig { embed_dim: 4, hidden: 8, depth: 2 }, backward: BackwardPolicy::Uniform }
    }

    #[test]
    fn fresh_policy_is_uniform_over_roots() {
        let env = small_env(5, 3);
        for seed in 0..10 {
            let p = PolicyModel::new(&env, small_net(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let lp = p.forward_logprobs(&env, &State::initial()).unwrap();
            let total: f64 = lp.iter().map(|x| x.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
            for x in lp {
                assert!((x.exp() - 0.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forced_action_has_log_prob_zero() {
        let env = small_env(3, 1);
        let p = PolicyModel::new(&env, small_net(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let s = env.step(&State::initial(), Action::AddRoot(1)).unwrap();
        assert_eq!(p.forward_logprobs(&env, &s).unwrap(), vec![0.0]);
    }

    #[test]
    fn tb_loss_vanishes_on_forced_trajectory() {
        // V=1, M=1: AddRoot then Stop are both forced.
        let env = small_env(1, 1);
        let mut p = PolicyModel::new(&env, small_net(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut traj = Trajectory::start();
        traj.push(&env, Action::AddRoot(0)).unwrap();
        traj.push(&env, Action::Stop).unwrap();
        p.set_log_z(0.7);
        assert!(p.tb_loss(&env, &traj, 0.7).unwrap().abs() < 1e-24);
        p.set_log_z(0.7 + 0.3);
        assert!((p.tb_loss(&env, &traj, 0.7).unwrap() - 0.09).abs() < 1e-12);
        let mut partial = Trajectory::start();
        partial.push(&env, Action::AddRoot(0)).unwrap();
        assert!(matches!(p.tb_loss(&env, &partial, 0.0), Err(GfnError::IncompleteTrajectory)));
    }

    #[test]
    fn uniform_backward_logprob() {
        let env = small_env(3, 8);
        let p = PolicyModel::new(&env, small_net(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // Root F1 (arity 2) with a different leaf on each stem.
        let mut s = env.step(&State::initial(), Action::AddRoot(1)).unwrap();
        s = env.step(&s, Action::Attach { stem: 0, frag: 0 }).unwrap();
        s = env.step(&s, Action::Attach { stem: 0, frag: 2 }).unwrap();
        let parents = env.backward_transitions(&s).unwrap();
        assert_eq!(parents.len(), 2);
        let lp = p.backward_logprob(&env, &s, &parents[0].0).unwrap();
        assert!((lp + 2f64.ln()).abs() < 1e-12);
        let t = env.step(&s, Action::Stop).unwrap();
        assert_eq!(p.backward_logprob(&env, &t, &s).unwrap(), 0.0);
    }

    #[test]
    fn learned_backward_sums_to_one() {
        let env = small_env(3, 8);
        let cfg = PolicyConfig { backward: BackwardPolicy::Learned, ..small_net() };
        let p = PolicyModel::new(&env, cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let traj = sample_trajectories(&p, &env, 1, &mut rng, 0.0).unwrap().remove(0);
            for s in traj.states.iter().skip(1).filter(|s| !s.terminal) {
                let parents = env.backward_transitions(s).unwrap();
                let total: f64 =
                    parents.iter().map(|(q, _)| p.backward_logprob(&env, s, q).unwrap().exp()).sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let env = small_env(3, 4);
        let cfg = PolicyConfig { backward: BackwardPolicy::Learned, ..small_net() };
        let p = PolicyModel::new(&env, cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let bytes = p.to_checkpoint(&env).to_bytes();
        let q = PolicyModel::from_checkpoint(Checkpoint::from_bytes(&bytes).unwrap(), &env).unwrap();
        assert_eq!(q.to_checkpoint(&env).to_bytes(), bytes);
        assert_eq!(q.config, p.config);
    }
}
