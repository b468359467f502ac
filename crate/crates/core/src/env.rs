//! The fragment-assembly MDP.
//!
//! States are fragment trees plus a terminal flag. From the empty state the
//! only actions are `AddRoot(f)`. Elsewhere the actions are
//! `Attach(open stem, f)` for every open stem and fragment (stem-major, while
//! below the node cap), followed by `Stop` once the minimum size is reached.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::chemgraph::{canonical_hash, ChemError, FragmentVocab, PartialMol, Stem};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("no actions from a terminal state")]
    TerminalState,
    #[error("the empty state has no parents")]
    InitialState,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("target is not decomposable: {0}")]
    NotDecomposable(String),
    #[error("bad environment config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Chem(#[from] ChemError),
}

pub type Result<T, E = EnvError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    AddRoot(usize),
    /// Index into the state's sorted open stems, and a fragment id.
    Attach { stem: usize, frag: usize },
    Stop,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::AddRoot(x) => write!(f, "root:{x}"),
            Action::Attach { stem, frag } => write!(f, "attach:{stem}:{frag}"),
            Action::Stop => write!(f, "stop"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardAction {
    UnStop,
    /// Remove this node (a removable leaf).
    RemoveLeaf(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct State {
    pub mol: PartialMol,
    pub terminal: bool,
}

impl State {
    pub fn initial() -> Self {
        Self::default()
    }

    pub fn is_initial(&self) -> bool {
        self.mol.is_empty() && !self.terminal
    }

    /// Molecule hash with the terminal flag folded in.
    pub fn key(&self) -> u64 {
        let h = canonical_hash(&self.mol);
        if self.terminal {
            h ^ 0x9e37_79b9_7f4a_7c15
        } else {
            h
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvConfig {
    pub max_nodes: usize,
    pub min_nodes: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { max_nodes: 8, min_nodes: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct Env {
    vocab: Arc<FragmentVocab>,
    config: EnvConfig,
}

impl Env {
    pub fn new(vocab: Arc<FragmentVocab>, config: EnvConfig) -> Result<Self> {
        if config.min_nodes < 1 || config.max_nodes < config.min_nodes {
            return Err(EnvError::BadConfig(format!(
                "need max_nodes ≥ min_nodes ≥ 1, got {} and {}",
                config.max_nodes, config.min_nodes
            )));
        }
        if vocab.max_arity() > 63 {
            return Err(EnvError::BadConfig("fragment arity above 63".into()));
        }
        Ok(Env { vocab, config })
    }

    pub fn vocab(&self) -> &FragmentVocab {
        &self.vocab
    }

    pub fn vocab_arc(&self) -> Arc<FragmentVocab> {
        Arc::clone(&self.vocab)
    }

    pub fn config(&self) -> EnvConfig {
        self.config
    }

    fn can_attach(&self, mol: &PartialMol) -> bool {
        mol.len() < self.config.max_nodes
    }

    fn can_stop(&self, mol: &PartialMol, open: usize) -> bool {
        mol.len() >= self.config.min_nodes || open == 0
    }

    pub fn valid_actions(&self, state: &State) -> Result<Vec<Action>> {
        if state.terminal {
            return Err(EnvError::TerminalState);
        }
        let v = self.vocab.len();
        if state.mol.is_empty() {
            return Ok((0..v).map(Action::AddRoot).collect());
        }
        let open = state.mol.open_stems(&self.vocab).len();
        let mut out = Vec::new();
        if self.can_attach(&state.mol) {
            out.reserve(open * v + 1);
            for stem in 0..open {
                out.extend((0..v).map(|frag| Action::Attach { stem, frag }));
            }
        }
        if self.can_stop(&state.mol, open) {
            out.push(Action::Stop);
        }
        Ok(out)
    }

    /// Position of `action` in [`Env::valid_actions`] for `state`, computed
    /// without materializing the list.
    pub fn action_index(&self, state: &State, action: Action) -> Result<usize> {
        if state.terminal {
            return Err(EnvError::TerminalState);
        }
        let v = self.vocab.len();
        let invalid = || EnvError::InvalidAction(format!("{action} not valid here"));
        if state.mol.is_empty() {
            return match action {
                Action::AddRoot(f) if f < v => Ok(f),
                _ => Err(invalid()),
            };
        }
        let open = state.mol.open_stems(&self.vocab).len();
        let attach = self.can_attach(&state.mol);
        match action {
            Action::Attach { stem, frag } if attach && stem < open && frag < v => Ok(stem * v + frag),
            Action::Stop if self.can_stop(&state.mol, open) => Ok(if attach { open * v } else { 0 }),
            _ => Err(invalid()),
        }
    }

    pub fn step(&self, state: &State, action: Action) -> Result<State> {
        self.action_index(state, action)?;
        Ok(match action {
            Action::Stop => State { mol: state.mol.clone(), terminal: true },
            Action::AddRoot(f) => State { mol: state.mol.attach(&self.vocab, None, f)?, terminal: false },
            Action::Attach { stem, frag } => {
                let s = state.mol.open_stems(&self.vocab)[stem];
                State { mol: state.mol.attach(&self.vocab, Some(s), frag)?, terminal: false }
            }
        })
    }

    /// Distinct parents of `state`, one per isomorphism class.
    pub fn backward_transitions(&self, state: &State) -> Result<Vec<(State, BackwardAction)>> {
        if state.is_initial() {
            return Err(EnvError::InitialState);
        }
        if state.terminal {
            return Ok(vec![(State { mol: state.mol.clone(), terminal: false }, BackwardAction::UnStop)]);
        }
        let mut seen = HashSet::new();
        Ok(state
            .mol
            .leaf_parents()
            .into_iter()
            .filter(|(p, _)| seen.insert(canonical_hash(p)))
            .map(|(p, n)| (State { mol: p, terminal: false }, BackwardAction::RemoveLeaf(n)))
            .collect())
    }

    /// `|backward_transitions(state)|`, hashing only leaves whose parents
    /// share a cheap structural signature.
    pub fn num_parents(&self, state: &State) -> Result<usize> {
        if state.is_initial() {
            return Err(EnvError::InitialState);
        }
        if state.terminal {
            return Ok(1);
        }
        let leaves = state.mol.removable_leaves();
        if leaves.len() <= 1 {
            return Ok(leaves.len());
        }
        let masks = state.mol.used_stem_masks();
        let mut groups: Vec<(Vec<(usize, u64)>, Vec<usize>)> = Vec::new();
        for &leaf in &leaves {
            let sig = parent_signature(&state.mol, &masks, leaf);
            match groups.iter_mut().find(|(s, _)| *s == sig) {
                Some((_, members)) => members.push(leaf),
                None => groups.push((sig, vec![leaf])),
            }
        }
        let mut count = 0;
        for (_, members) in groups {
            if members.len() == 1 {
                count += 1;
            } else {
                let hashes: HashSet<u64> = members.iter().map(|&l| canonical_hash(&state.mol.remove_node(l))).collect();
                count += hashes.len();
            }
        }
        Ok(count)
    }

    /// Indices (into `valid_actions(state)`) of every action leading to a
    /// state isomorphic to `next`, where `taken` is known to lead there.
    pub fn equivalent_actions(&self, state: &State, taken: Action, next: &State) -> Result<Vec<usize>> {
        let idx = self.action_index(state, taken)?;
        let Action::Attach { stem, frag } = taken else {
            return Ok(vec![idx]);
        };
        let stems = state.mol.open_stems(&self.vocab);
        let masks = state.mol.used_stem_masks();
        let Stem { node: q, stem: k } = stems[stem];
        // Attaching at (q', k') can only match if q' looks like q locally.
        let candidates: Vec<usize> = stems
            .iter()
            .enumerate()
            .filter(|&(_, s)| s.stem == k && state.mol.frag(s.node) == state.mol.frag(q) && masks[s.node] == masks[q])
            .map(|(j, _)| j)
            .collect();
        if candidates.len() == 1 {
            return Ok(vec![idx]);
        }
        let v = self.vocab.len();
        let target = canonical_hash(&next.mol);
        let mut out = Vec::with_capacity(candidates.len());
        for j in candidates {
            if j == stem || canonical_hash(&state.mol.attach(&self.vocab, Some(stems[j]), frag)?) == target {
                out.push(j * v + frag);
            }
        }
        Ok(out)
    }

    /// Fails with `NotDecomposable` unless `target` is buildable within the size cap.
    pub fn check_target(&self, target: &PartialMol) -> Result<()> {
        target.validate(&self.vocab).map_err(|e| EnvError::NotDecomposable(e.to_string()))?;
        if target.is_empty() {
            return Err(EnvError::NotDecomposable("empty target".into()));
        }
        if target.len() > self.config.max_nodes {
            return Err(EnvError::NotDecomposable(format!(
                "{} nodes exceeds the cap of {}",
                target.len(),
                self.config.max_nodes
            )));
        }
        let mut m = target.clone();
        while !m.is_empty() {
            let Some(&leaf) = m.removable_leaves().first() else {
                return Err(EnvError::NotDecomposable("no leaf can be detached by a forward attach".into()));
            };
            m = m.remove_node(leaf);
        }
        Ok(())
    }

    /// `count` trajectories ending in `target`, from uniform random backward
    /// walks replayed forward from the empty state.
    pub fn decompose_target<R: Rng + ?Sized>(
        &self,
        target: &PartialMol,
        rng: &mut R,
        count: usize,
    ) -> Result<Vec<Trajectory>> {
        self.check_target(target)?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut chain = vec![target.clone()];
            let mut cur = State { mol: target.clone(), terminal: false };
            while !cur.mol.is_empty() {
                let parents = self.backward_transitions(&cur)?;
                let (p, _) = parents.choose(rng).expect("reachable states have parents");
                cur = p.clone();
                chain.push(cur.mol.clone());
            }
            chain.reverse();
            out.push(self.replay_chain(&chain)?);
        }
        Ok(out)
    }

    /// Forward trajectory through molecules isomorphic to `chain[1..]`.
    fn replay_chain(&self, chain: &[PartialMol]) -> Result<Trajectory> {
        let mut traj = Trajectory::start();
        for want in &chain[1..] {
            let h = canonical_hash(want);
            let cur = traj.last().clone();
            let action = self
                .valid_actions(&cur)?
                .into_iter()
                .filter(|a| *a != Action::Stop)
                .find(|&a| self.step(&cur, a).map(|s| canonical_hash(&s.mol) == h).unwrap_or(false))
                .ok_or_else(|| EnvError::NotDecomposable("no forward action reproduces the backward walk".into()))?;
            traj.push(self, action)?;
        }
        traj.push(self, Action::Stop)?;
        Ok(traj)
    }
}

/// Sorted `(fragment, used-stem mask)` multiset of the parent obtained by
/// removing `leaf`. Isomorphic parents have equal signatures.
fn parent_signature(mol: &PartialMol, masks: &[u64], leaf: usize) -> Vec<(usize, u64)> {
    let (own, q, qs) = mol.neighbors(leaf)[0];
    debug_assert_eq!(own, 0);
    let mut sig: Vec<(usize, u64)> = (0..mol.len())
        .filter(|&n| n != leaf)
        .map(|n| (mol.frag(n), if n == q { masks[n] & !(1 << qs) } else { masks[n] }))
        .collect();
    sig.sort_unstable();
    sig
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub log_reward: Option<f64>,
}

impl Trajectory {
    pub fn start() -> Self {
        Trajectory { states: vec![State::initial()], actions: Vec::new(), log_reward: None }
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectories hold at least s0")
    }

    pub fn is_complete(&self) -> bool {
        self.last().terminal
    }

    pub fn terminal_mol(&self) -> &PartialMol {
        &self.last().mol
    }

    pub fn push(&mut self, env: &Env, action: Action) -> Result<()> {
        let next = env.step(self.last(), action)?;
        self.actions.push(action);
        self.states.push(next);
        Ok(())
    }

    /// Replays the actions from the empty state and compares every state.
    pub fn verify(&self, env: &Env) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 || !self.states[0].is_initial() {
            return Err(EnvError::InvalidAction("malformed trajectory".into()));
        }
        let mut cur = State::initial();
        for (t, &a) in self.actions.iter().enumerate() {
            if cur.terminal {
                return Err(EnvError::TerminalState);
            }
            cur = env.step(&cur, a)?;
            if cur.key() != self.states[t + 1].key() {
                return Err(EnvError::InvalidAction(format!("state {} does not replay", t + 1)));
            }
        }
        if self.is_complete() != (self.actions.last() == Some(&Action::Stop)) {
            return Err(EnvError::InvalidAction("terminal flag disagrees with the last action".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(v: usize, arities: &[usize], m: usize) -> Env {
        let vocab = FragmentVocab::generated("t", v, arities).unwrap();
        Env::new(Arc::new(vocab), EnvConfig { max_nodes: m, min_nodes: 1 }).unwrap()
    }

    #[test]
    fn action_counts() {
        let e = env(5, &[2], 8);
        let s0 = State::initial();
        assert_eq!(e.valid_actions(&s0).unwrap().len(), 5);
        let s1 = e.step(&s0, Action::AddRoot(3)).unwrap();
        assert_eq!(s1.mol.len(), 1);
        assert_eq!(e.valid_actions(&s1).unwrap().len(), 11);
        let small = env(5, &[2], 1);
        let s1 = small.step(&s0, Action::AddRoot(0)).unwrap();
        assert_eq!(small.valid_actions(&s1).unwrap(), vec![Action::Stop]);
    }

    #[test]
    fn action_index_matches_enumeration() {
        let e = env(3, &[2, 1], 4);
        let mut s = State::initial();
        for a in [Action::AddRoot(0), Action::Attach { stem: 1, frag: 2 }, Action::Attach { stem: 0, frag: 0 }] {
            for (i, b) in e.valid_actions(&s).unwrap().into_iter().enumerate() {
                assert_eq!(e.action_index(&s, b).unwrap(), i);
            }
            s = e.step(&s, a).unwrap();
        }
    }

    #[test]
    fn stop_and_invalid_actions() {
        let e = env(3, &[2], 4);
        let s1 = e.step(&State::initial(), Action::AddRoot(1)).unwrap();
        let t = e.step(&s1, Action::Stop).unwrap();
        assert!(t.terminal);
        assert_eq!(t.mol, s1.mol);
        assert!(matches!(e.step(&s1, Action::Attach { stem: 2, frag: 0 }), Err(EnvError::InvalidAction(_))));
        assert!(matches!(e.step(&s1, Action::AddRoot(0)), Err(EnvError::InvalidAction(_))));
        assert_eq!(e.valid_actions(&t), Err(EnvError::TerminalState));
    }

    #[test]
    fn backward_basics() {
        let e = env(3, &[3], 8);
        let s1 = e.step(&State::initial(), Action::AddRoot(0)).unwrap();
        assert_eq!(e.backward_transitions(&s1).unwrap().len(), 1);
        let t = e.step(&s1, Action::Stop).unwrap();
        assert_eq!(e.backward_transitions(&t).unwrap(), vec![(s1.clone(), BackwardAction::UnStop)]);
        assert_eq!(e.backward_transitions(&State::initial()), Err(EnvError::InitialState));
        // Star with three identical leaves on distinct center stems.
        let mut s = s1;
        for _ in 0..3 {
            s = e.step(&s, Action::Attach { stem: 0, frag: 1 }).unwrap();
        }
        assert_eq!(s.mol.len(), 4);
        assert_eq!(e.backward_transitions(&s).unwrap().len(), 3);
        assert_eq!(e.num_parents(&s).unwrap(), 3);
    }

    #[test]
    fn single_node_target_has_one_decomposition() {
        let e = env(3, &[2], 4);
        let target = PartialMol::empty().attach(e.vocab(), None, 2).unwrap();
        let trajs = e.decompose_target(&target, &mut ChaCha8Rng::seed_from_u64(0), 5).unwrap();
        for t in &trajs {
            assert_eq!(t.actions, vec![Action::AddRoot(2), Action::Stop]);
        }
    }

    #[test]
    fn oversized_target_is_rejected() {
        let e = env(3, &[2], 2);
        let s = |node, stem| Some(Stem { node, stem });
        let v = e.vocab();
        let m = PartialMol::empty().attach(v, None, 0).unwrap().attach(v, s(0, 0), 0).unwrap().attach(v, s(0, 1), 0).unwrap();
        assert!(matches!(e.decompose_target(&m, &mut ChaCha8Rng::seed_from_u64(0), 1), Err(EnvError::NotDecomposable(_))));
    }

    #[test]
    fn path_decompositions_reach_every_feasible_root() {
        // X.0–Y.0 and Y.1–Z.0: X and Y can be roots, Z cannot (its bond to Y
        // uses Y's stem 1, not stem 0).
        let e = env(3, &[2], 4);
        let v = e.vocab();
        let s = |node, stem| Some(Stem { node, stem });
        let m = PartialMol::empty().attach(v, None, 0).unwrap().attach(v, s(0, 0), 1).unwrap().attach(v, s(1, 1), 2).unwrap();
        let feasible: HashSet<Action> = (0..m.len())
            .filter(|&r| rooted_ok(&m, r, None))
            .map(|r| Action::AddRoot(m.frag(r)))
            .collect();
        assert_eq!(feasible, HashSet::from([Action::AddRoot(0), Action::AddRoot(1)]));
        let trajs = e.decompose_target(&m, &mut ChaCha8Rng::seed_from_u64(4), 50).unwrap();
        let roots: HashSet<Action> = trajs.iter().map(|t| t.actions[0]).collect();
        assert_eq!(roots, feasible);
        for t in &trajs {
            t.verify(&e).unwrap();
            assert_eq!(canonical_hash(t.terminal_mol()), canonical_hash(&m));
        }
    }

    /// Every bond, oriented away from `root`, lands on the child's stem 0.
    fn rooted_ok(m: &PartialMol, node: usize, parent: Option<usize>) -> bool {
        m.neighbors(node)
            .into_iter()
            .filter(|&(_, nb, _)| Some(nb) != parent)
            .all(|(_, nb, nbs)| nbs == 0 && rooted_ok(m, nb, Some(node)))
    }
}
