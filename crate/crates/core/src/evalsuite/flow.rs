//! Exact flows on enumerable environments.
//!
//! Terminal flows are F(x) = exp(log R(x)). Edge flows follow the uniform
//! backward policy, F(s→s') = F(s')/|parents(s')|, and state flows are summed
//! in reverse topological order, so F(s0) is the partition function.

use std::collections::HashMap;

use pgfn_tensor::logsumexp;

use super::EvalError;
use crate::env::{Env, State};
use crate::reward::RewardFn;

pub const MAX_STATES: usize = 100_000;

#[derive(Debug, Clone)]
pub struct BruteForceFlow {
    pub states: Vec<State>,
    pub children: Vec<Vec<usize>>,
    pub parents: Vec<Vec<usize>>,
    pub state_flow: Vec<f64>,
    pub log_rewards: HashMap<usize, f64>,
    index: HashMap<u64, usize>,
}

impl BruteForceFlow {
    pub fn compute(env: &Env, reward: &dyn RewardFn) -> Result<Self, EvalError> {
        // Breadth-first enumeration; every action increases (size, terminal),
        // so discovery order by layer is a topological order.
        let mut states = vec![State::initial()];
        let mut index = HashMap::from([(State::initial().key(), 0usize)]);
        let mut children: Vec<Vec<usize>> = vec![Vec::new()];
        let mut i = 0;
        while i < states.len() {
            if !states[i].terminal {
                let s = states[i].clone();
                let mut kids = Vec::new();
                for a in env.valid_actions(&s)? {
                    let c = env.step(&s, a)?;
                    let k = c.key();
                    let j = *index.entry(k).or_insert_with(|| {
                        states.push(c);
                        children.push(Vec::new());
                        states.len() - 1
                    });
                    if !kids.contains(&j) {
                        kids.push(j);
                    }
                }
                children[i] = kids;
                if states.len() > MAX_STATES {
                    return Err(EvalError::TooLarge(states.len()));
                }
            }
            i += 1;
        }
        let mut parents = vec![Vec::new(); states.len()];
        for (p, kids) in children.iter().enumerate() {
            for &c in kids {
                parents[c].push(p);
            }
        }
        let mut order: Vec<usize> = (0..states.len()).collect();
        order.sort_by_key(|&s| (states[s].mol.len(), states[s].terminal));
        let mut state_flow = vec![0.0; states.len()];
        let mut log_rewards = HashMap::new();
        for &s in order.iter().rev() {
            if states[s].terminal {
                let lr = reward.log_reward(&states[s].mol)?;
                log_rewards.insert(s, lr);
                state_flow[s] = lr.exp();
            } else {
                state_flow[s] = children[s].iter().map(|&c| state_flow[c] / parents[c].len() as f64).sum();
            }
        }
        Ok(BruteForceFlow { states, children, parents, state_flow, log_rewards, index })
    }

    pub fn edge_flow(&self, from: usize, to: usize) -> f64 {
        if self.children[from].contains(&to) {
            self.state_flow[to] / self.parents[to].len() as f64
        } else {
            0.0
        }
    }

    pub fn in_flow(&self, s: usize) -> f64 {
        self.parents[s].iter().map(|&p| self.edge_flow(p, s)).sum()
    }

    pub fn out_flow(&self, s: usize) -> f64 {
        self.children[s].iter().map(|&c| self.edge_flow(s, c)).sum()
    }

    /// Largest |in-flow − out-flow| over states that are neither initial nor terminal.
    pub fn max_violation(&self) -> f64 {
        (1..self.states.len())
            .filter(|&s| !self.states[s].terminal)
            .map(|s| (self.in_flow(s) - self.out_flow(s)).abs())
            .fold(0.0, f64::max)
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).filter(|&s| self.states[s].terminal)
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals().count()
    }

    /// F(s0).
    pub fn partition(&self) -> f64 {
        self.state_flow[0]
    }

    /// ln Σ_x exp(log R(x)), computed stably.
    pub fn log_partition(&self) -> f64 {
        let lr: Vec<f64> = self.terminals().map(|s| self.log_rewards[&s]).collect();
        logsumexp(&lr)
    }

    /// Target sampling distribution keyed by canonical hash of the molecule.
    pub fn terminal_distribution(&self) -> HashMap<u64, f64> {
        let log_z = self.log_partition();
        self.terminals()
            .map(|s| (crate::chemgraph::canonical_hash(&self.states[s].mol), (self.log_rewards[&s] - log_z).exp()))
            .collect()
    }

    pub fn state_index(&self, s: &State) -> Option<usize> {
        self.index.get(&s.key()).copied()
    }
}

/// ln Z = logsumexp over terminals of β·ln R.
pub fn log_partition(env: &Env, reward: &dyn RewardFn) -> Result<f64, EvalError> {
    Ok(BruteForceFlow::compute(env, reward)?.log_partition())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::FragmentVocab;
    use crate::env::EnvConfig;
    use crate::reward::TableReward;
    use std::sync::Arc;

    fn table(env: &Env, rewards: &[f64]) -> TableReward {
        let mut t = TableReward::new(1.0);
        for (f, &r) in rewards.iter().enumerate() {
            t.insert(&env.step(&State::initial(), crate::env::Action::AddRoot(f)).unwrap().mol, r);
        }
        t
    }

    #[test]
    fn single_terminal() {
        let env = Env::new(Arc::new(FragmentVocab::generated("t", 1, &[1]).unwrap()), EnvConfig { max_nodes: 1, min_nodes: 1 }).unwrap();
        let f = BruteForceFlow::compute(&env, &table(&env, &[2.5])).unwrap();
        assert_eq!(f.num_terminals(), 1);
        assert!((f.partition() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn two_terminals() {
        let env = Env::new(Arc::new(FragmentVocab::generated("t", 2, &[1]).unwrap()), EnvConfig { max_nodes: 1, min_nodes: 1 }).unwrap();
        let f = BruteForceFlow::compute(&env, &table(&env, &[1.0, 3.0])).unwrap();
        assert!((f.partition() - 4.0).abs() < 1e-12);
        assert!((f.log_partition() - 4f64.ln()).abs() < 1e-12);
        assert!(f.max_violation() < 1e-12);
    }
}
