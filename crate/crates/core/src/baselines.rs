//! Comparison samplers on the same environment and reward: uniform random
//! rollouts, soft Q-learning and discrete soft actor-critic.

use std::collections::VecDeque;

use pgfn_tensor::{categorical_sample, log_softmax, Adam, Checkpoint, ParamStore, Tape, Tensor, Var};
use rand::Rng;

use crate::env::{Env, State, Trajectory};
use crate::evalsuite::RunMetrics;
use crate::gflownet::{GfnError, RewardCache};
use crate::net::{ActionNet, NetConfig};
use crate::reward::RewardFn;

pub type Result<T, E = GfnError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Random,
    Sql,
    Sac,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Sql => "sql",
            Method::Sac => "sac",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(Method::Random),
            "sql" => Some(Method::Sql),
            "sac" => Some(Method::Sac),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub method: Method,
    pub alpha: f64,
    pub gamma: f64,
    pub lr: f64,
    /// Transitions per gradient update; also samples per step for `random`.
    pub batch: usize,
    pub steps: usize,
    /// Episodes collected before each update.
    pub episodes_per_step: usize,
    /// Hard target copy period (SAC).
    pub target_update: usize,
    /// Polyak rate applied every step instead of hard copies when set.
    pub polyak: Option<f64>,
    pub replay_capacity: usize,
    pub net: NetConfig,
}

impl BaselineConfig {
    pub fn for_method(method: Method) -> Self {
        BaselineConfig {
            method,
            alpha: if method == Method::Sac { 0.2 } else { 0.1 },
            gamma: 1.0,
            lr: 1e-4,
            batch: 64,
            steps: 10_000,
            episodes_per_step: 8,
            target_update: 100,
            polyak: None,
            replay_capacity: 10_000,
            net: NetConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GfnError::BadConfig(m.into()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch == 0 || self.episodes_per_step == 0 || self.replay_capacity == 0 || self.target_update == 0 {
            return bad("batch, episodes_per_step, replay_capacity and target_update must be positive");
        }
        if let Some(t) = self.polyak {
            if !(t > 0.0 && t <= 1.0) {
                return bad("polyak rate must lie in (0, 1]");
            }
        }
        Ok(())
    }
}

/// Rollout choosing uniformly among valid actions at every step.
pub fn random_trajectory<R: Rng + ?Sized>(env: &Env, rng: &mut R) -> Result<Trajectory> {
    let mut traj = Trajectory::start();
    while !traj.is_complete() {
        let actions = env.valid_actions(traj.last())?;
        let a = actions[rng.random_range(0..actions.len())];
        traj.push(env, a)?;
    }
    Ok(traj)
}

pub fn random_sample<R: Rng + ?Sized>(env: &Env, n: usize, rng: &mut R) -> Result<Vec<Trajectory>> {
    (0..n).map(|_| random_trajectory(env, rng)).collect()
}

/// `steps × batch` random samples logged as `batch` per step.
pub fn random_run<R: Rng + ?Sized>(
    env: &Env,
    reward: &dyn RewardFn,
    config: &BaselineConfig,
    rng: &mut R,
    metrics: &mut RunMetrics,
) -> Result<()> {
    let mut rewards = RewardCache::new(reward);
    for step in 0..config.steps {
        for _ in 0..config.batch {
            let traj = random_trajectory(env, rng)?;
            let (raw, log_r) = rewards.get(traj.terminal_mol())?;
            metrics.push(step, traj.terminal_mol().clone(), raw, log_r);
        }
    }
    Ok(())
}

/// One environment step. `reward` is the log reward when `next` is terminal
/// and 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub next: State,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.next.terminal
    }
}

#[derive(Debug, Clone, Default)]
pub struct TransitionBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl TransitionBuffer {
    pub fn new(capacity: usize) -> Self {
        TransitionBuffer { capacity, items: VecDeque::new() }
    }

    pub fn push(&mut self, t: Transition) {
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

    /// `n` draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

fn net_values(store: &ParamStore, net: &ActionNet, env: &Env, s: &State) -> Result<Vec<f64>> {
    let mut tape = Tape::new(store);
    let out = net.forward(&mut tape, env, s)?;
    Ok(tape.value(out.scores).data().to_vec())
}

fn soft_value(q: &[f64], alpha: f64) -> f64 {
    let scaled: Vec<f64> = q.iter().map(|x| x / alpha).collect();
    alpha * pgfn_tensor::logsumexp(&scaled)
}

/// Mean squared error between the picked scores of `net` and `targets`.
fn regression_loss(
    tape: &mut Tape<'_>,
    net: &ActionNet,
    env: &Env,
    batch: &[&Transition],
    targets: &[f64],
) -> Result<Var> {
    let mut picked = Vec::with_capacity(batch.len());
    for t in batch {
        let out = net.forward(tape, env, &t.state)?;
        picked.push(tape.element(out.scores, 0, t.action));
    }
    let q = tape.concat_cols(&picked);
    let y = tape.constant(Tensor::row_vector(targets.to_vec()));
    let d = tape.sub(q, y);
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

/// Runs one episode with `choose` picking an index among valid actions.
fn episode<R: Rng + ?Sized>(
    env: &Env,
    rewards: &mut RewardCache<'_>,
    rng: &mut R,
    mut choose: impl FnMut(&State, &mut R) -> Result<usize>,
) -> Result<(Vec<Transition>, f64, f64)> {
    let mut s = State::initial();
    let mut out = Vec::new();
    loop {
        let i = choose(&s, rng)?;
        let a = env.valid_actions(&s)?[i];
        let next = env.step(&s, a)?;
        if next.terminal {
            let (raw, log_r) = rewards.get(&next.mol)?;
            out.push(Transition { state: s, action: i, reward: log_r, next });
            return Ok((out, raw, log_r));
        }
        out.push(Transition { state: s, action: i, reward: 0.0, next: next.clone() });
        s = next;
    }
}

pub const SQL_CHECKPOINT_KIND: &str = "sql v1";
pub const SAC_CHECKPOINT_KIND: &str = "sac v1";

/// Q-network whose Boltzmann policy `softmax(Q/α)` is the behavior policy.
#[derive(Debug, Clone)]
pub struct SqlAgent {
    pub store: ParamStore,
    pub q: ActionNet,
    pub alpha: f64,
    pub gamma: f64,
}

impl SqlAgent {
    pub fn new<R: Rng + ?Sized>(env: &Env, config: &BaselineConfig, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let q = ActionNet::init(&mut store, "q", env, config.net, rng)?;
        Ok(SqlAgent { store, q, alpha: config.alpha, gamma: config.gamma })
    }

    pub fn q_values(&self, env: &Env, s: &State) -> Result<Vec<f64>> {
        net_values(&self.store, &self.q, env, s)
    }

    pub fn policy(&self, env: &Env, s: &State) -> Result<Vec<f64>> {
        let q: Vec<f64> = self.q_values(env, s)?.iter().map(|x| x / self.alpha).collect();
        Ok(log_softmax(&q)?.into_iter().map(f64::exp).collect())
    }

    /// `r` on terminal transitions, else `γ·α·logsumexp(Q(s′,·)/α)`.
    pub fn bellman_targets(&self, env: &Env, batch: &[&Transition]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                if t.done() {
                    Ok(t.reward)
                } else {
                    Ok(t.reward + self.gamma * soft_value(&self.q_values(env, &t.next)?, self.alpha))
                }
            })
            .collect()
    }

    pub fn bellman_loss_on_tape(
        &self,
        tape: &mut Tape<'_>,
        env: &Env,
        batch: &[&Transition],
        targets: &[f64],
    ) -> Result<Var> {
        regression_loss(tape, &self.q, env, batch, targets)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(SQL_CHECKPOINT_KIND, self.store.clone())
            .with_meta("alpha", self.alpha)
            .with_meta("gamma", self.gamma)
    }
}

pub fn sql_train<R: Rng + ?Sized>(
    env: &Env,
    reward: &dyn RewardFn,
    config: &BaselineConfig,
    rng: &mut R,
    metrics: &mut RunMetrics,
) -> Result<(SqlAgent, Vec<f64>)> {
    config.validate()?;
    let mut agent = SqlAgent::new(env, config, rng)?;
    let adam = Adam::new(config.lr);
    let mut replay = TransitionBuffer::new(config.replay_capacity);
    let mut rewards = RewardCache::new(reward);
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        for _ in 0..config.episodes_per_step {
            let (ts, raw, log_r) = episode(env, &mut rewards, rng, |s, rng| {
                let q: Vec<f64> = agent.q_values(env, s)?.iter().map(|x| x / agent.alpha).collect();
                Ok(categorical_sample(&log_softmax(&q)?, rng)?)
            })?;
            metrics.push(step, ts.last().expect("non-empty episode").next.mol.clone(), raw, log_r);
            ts.into_iter().for_each(|t| replay.push(t));
        }
        let batch = replay.sample(config.batch, rng);
        let targets = agent.bellman_targets(env, &batch)?;
        let (loss, grads) = {
            let mut tape = Tape::new(&agent.store);
            let l = agent.bellman_loss_on_tape(&mut tape, env, &batch, &targets)?;
            (tape.scalar(l), tape.backward_scalar(l)?)
        };
        if !loss.is_finite() {
            return Err(GfnError::BadConfig(format!("loss diverged at step {step}")));
        }
        adam.step(&mut agent.store, &grads)?;
        losses.push(loss);
    }
    Ok((agent, losses))
}

/// Softmax actor with twin critics and their target copies.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub store: ParamStore,
    pub actor: ActionNet,
    pub q1: ActionNet,
    pub q2: ActionNet,
    q1_targ: ActionNet,
    q2_targ: ActionNet,
    pub alpha: f64,
    pub gamma: f64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(env: &Env, config: &BaselineConfig, rng: &mut R) -> Result<Self> {
        let mut store = ParamStore::new();
        let actor = ActionNet::init(&mut store, "pi", env, config.net, rng)?;
        let q1 = ActionNet::init(&mut store, "q1", env, config.net, rng)?;
        let q2 = ActionNet::init(&mut store, "q2", env, config.net, rng)?;
        let q1_targ = ActionNet::init(&mut store, "t1", env, config.net, rng)?;
        let q2_targ = ActionNet::init(&mut store, "t2", env, config.net, rng)?;
        let mut agent = SacAgent { store, actor, q1, q2, q1_targ, q2_targ, alpha: config.alpha, gamma: config.gamma };
        agent.sync_targets(1.0)?;
        Ok(agent)
    }

    /// `t ← (1−τ)·t + τ·q` for both critics (τ = 1 is a hard copy).
    pub fn sync_targets(&mut self, tau: f64) -> Result<()> {
        self.store.soft_update("q1.", "t1.", tau)?;
        self.store.soft_update("q2.", "t2.", tau)?;
        Ok(())
    }

    pub fn policy(&self, env: &Env, s: &State) -> Result<Vec<f64>> {
        let logits = net_values(&self.store, &self.actor, env, s)?;
        Ok(log_softmax(&logits)?.into_iter().map(f64::exp).collect())
    }

    pub fn critic_values(&self, env: &Env, s: &State) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((net_values(&self.store, &self.q1, env, s)?, net_values(&self.store, &self.q2, env, s)?))
    }

    fn min_q(&self, env: &Env, s: &State, target: bool) -> Result<Vec<f64>> {
        let (a, b) = if target { (&self.q1_targ, &self.q2_targ) } else { (&self.q1, &self.q2) };
        let x = net_values(&self.store, a, env, s)?;
        let y = net_values(&self.store, b, env, s)?;
        Ok(x.iter().zip(&y).map(|(p, q)| p.min(*q)).collect())
    }

    /// `r` on terminal transitions, else
    /// `r + γ·Σ_a π(a|s′)(min Q̄(s′,a) − α·ln π(a|s′))`.
    pub fn critic_targets(&self, env: &Env, batch: &[&Transition]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                if t.done() {
                    return Ok(t.reward);
                }
                let logits = net_values(&self.store, &self.actor, env, &t.next)?;
                let lp = log_softmax(&logits)?;
                let q = self.min_q(env, &t.next, true)?;
                let v: f64 = lp.iter().zip(&q).map(|(l, q)| l.exp() * (q - self.alpha * l)).sum();
                Ok(t.reward + self.gamma * v)
            })
            .collect()
    }

    /// Sum of both critics' squared errors against fixed targets.
    pub fn critic_loss_on_tape(
        &self,
        tape: &mut Tape<'_>,
        env: &Env,
        batch: &[&Transition],
        targets: &[f64],
    ) -> Result<Var> {
        let a = regression_loss(tape, &self.q1, env, batch, targets)?;
        let b = regression_loss(tape, &self.q2, env, batch, targets)?;
        Ok(tape.add(a, b))
    }

    /// Per-state `min(Q1, Q2)` used as constants by the actor loss.
    pub fn actor_q(&self, env: &Env, states: &[&State]) -> Result<Vec<Vec<f64>>> {
        states.iter().map(|s| self.min_q(env, s, false)).collect()
    }

    /// Mean over states of `Σ_a π(a|s)(α·ln π(a|s) − min Q(s,a))`.
    pub fn actor_loss_on_tape(
        &self,
        tape: &mut Tape<'_>,
        env: &Env,
        states: &[&State],
        min_q: &[Vec<f64>],
    ) -> Result<Var> {
        let mut terms = Vec::with_capacity(states.len());
        for (s, q) in states.iter().zip(min_q) {
            let out = self.actor.forward(tape, env, s)?;
            let lp = tape.log_softmax_rows(out.scores, None);
            let p = tape.exp(lp);
            let alp = tape.scale(lp, self.alpha);
            let qv = tape.constant(Tensor::row_vector(q.clone()));
            let inner = tape.sub(alp, qv);
            let w = tape.mul(p, inner);
            terms.push(tape.sum(w));
        }
        let all = tape.concat_cols(&terms);
        Ok(tape.mean(all))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(SAC_CHECKPOINT_KIND, self.store.clone())
            .with_meta("alpha", self.alpha)
            .with_meta("gamma", self.gamma)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SacReport {
    pub critic_losses: Vec<f64>,
    pub actor_losses: Vec<f64>,
}

pub fn sac_train<R: Rng + ?Sized>(
    env: &Env,
    reward: &dyn RewardFn,
    config: &BaselineConfig,
    rng: &mut R,
    metrics: &mut RunMetrics,
) -> Result<(SacAgent, SacReport)> {
    config.validate()?;
    let mut agent = SacAgent::new(env, config, rng)?;
    let adam = Adam::new(config.lr);
    let mut replay = TransitionBuffer::new(config.replay_capacity);
    let mut rewards = RewardCache::new(reward);
    let mut report = SacReport::default();
    for step in 0..config.steps {
        for _ in 0..config.episodes_per_step {
            let (ts, raw, log_r) = episode(env, &mut rewards, rng, |s, rng| {
                let logits = net_values(&agent.store, &agent.actor, env, s)?;
                Ok(categorical_sample(&log_softmax(&logits)?, rng)?)
            })?;
            metrics.push(step, ts.last().expect("non-empty episode").next.mol.clone(), raw, log_r);
            ts.into_iter().for_each(|t| replay.push(t));
        }
        let batch = replay.sample(config.batch, rng);
        let targets = agent.critic_targets(env, &batch)?;
        let states: Vec<&State> = batch.iter().map(|t| &t.state).collect();
        let min_q = agent.actor_q(env, &states)?;
        let (closs, aloss, grads) = {
            let mut tape = Tape::new(&agent.store);
            let c = agent.critic_loss_on_tape(&mut tape, env, &batch, &targets)?;
            let a = agent.actor_loss_on_tape(&mut tape, env, &states, &min_q)?;
            let (cv, av) = (tape.scalar(c), tape.scalar(a));
            let total = tape.add(c, a);
            (cv, av, tape.backward_scalar(total)?)
        };
        if !(closs.is_finite() && aloss.is_finite()) {
            return Err(GfnError::BadConfig(format!("loss diverged at step {step}")));
        }
        adam.step(&mut agent.store, &grads)?;
        match config.polyak {
            Some(tau) => agent.sync_targets(tau)?,
            None if (step + 1) % config.target_update == 0 => agent.sync_targets(1.0)?,
            None => {}
        }
        report.critic_losses.push(closs);
        report.actor_losses.push(aloss);
    }
    Ok((agent, report))
}
