mod common;

use std::collections::HashSet;
use std::sync::Arc;

use common::{iso_key, random_tree};
use pgfn_core::chemgraph::{canonical_hash, FragmentVocab};
use pgfn_core::env::{Action, Env, EnvConfig, State};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn env(m: usize) -> Env {
    let vocab = FragmentVocab::generated("env", 4, &[1, 2, 3, 2]).unwrap();
    Env::new(Arc::new(vocab), EnvConfig { max_nodes: m, min_nodes: 1 }).unwrap()
}

fn rollout(e: &Env, rng: &mut ChaCha8Rng) -> Vec<State> {
    let mut s = State::initial();
    let mut out = vec![s.clone()];
    while !s.terminal {
        let a = *e.valid_actions(&s).unwrap().choose(rng).unwrap();
        s = e.step(&s, a).unwrap();
        out.push(s.clone());
    }
    out
}

#[test]
fn tiny_env_terminal_count_matches_dfs() {
    let vocab = FragmentVocab::generated("tiny", 3, &[1, 2, 2]).unwrap();
    let e = Env::new(Arc::new(vocab), EnvConfig { max_nodes: 2, min_nodes: 1 }).unwrap();
    // DFS over raw action sequences, deduplicating terminals by exact isomorphism key.
    fn dfs(e: &Env, s: &State, out: &mut HashSet<String>) {
        if s.terminal {
            out.insert(iso_key(&s.mol));
            return;
        }
        for a in e.valid_actions(s).unwrap() {
            dfs(e, &e.step(s, a).unwrap(), out);
        }
    }
    let mut terminals = HashSet::new();
    dfs(&e, &State::initial(), &mut terminals);
    // 3 singletons, 6 unordered type pairs bonded stem 0 to stem 0, and
    // 2 × 3 bonds from stem 1 of an arity-2 root.
    assert_eq!(terminals.len(), 15);
}

proptest! {
    #[test]
    fn rollouts_form_a_dag_and_replay(seed in any::<u64>()) {
        let e = env(6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = rollout(&e, &mut rng);
        for w in states.windows(2) {
            let rank = |s: &State| (s.mol.len(), s.terminal as usize);
            prop_assert!(rank(&w[1]) > rank(&w[0]));
        }
        prop_assert!(states.last().unwrap().mol.len() <= 6);
    }

    #[test]
    fn parents_are_consistent(seed in any::<u64>(), n in 1usize..7) {
        let e = env(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = State { mol: random_tree(e.vocab(), n, &mut rng), terminal: false };
        let parents = e.backward_transitions(&s).unwrap();
        prop_assert!(!parents.is_empty());
        prop_assert_eq!(parents.len(), e.num_parents(&s).unwrap());
        let keys: HashSet<String> = parents.iter().map(|(p, _)| iso_key(&p.mol)).collect();
        prop_assert_eq!(keys.len(), parents.len());
        let h = canonical_hash(&s.mol);
        for (p, _) in &parents {
            let reach = e.valid_actions(p).unwrap().into_iter().any(|a| {
                let c = e.step(p, a).unwrap();
                !c.terminal && canonical_hash(&c.mol) == h
            });
            prop_assert!(reach);
        }
    }

    #[test]
    fn equivalent_actions_match_brute_force(seed in any::<u64>(), n in 1usize..6) {
        let e = env(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = State { mol: random_tree(e.vocab(), n, &mut rng), terminal: false };
        let actions = e.valid_actions(&s).unwrap();
        let taken = *actions.choose(&mut rng).unwrap();
        let next = e.step(&s, taken).unwrap();
        let key = (iso_key(&next.mol), next.terminal);
        let brute: Vec<usize> = actions
            .iter()
            .enumerate()
            .filter(|(_, &a)| {
                let c = e.step(&s, a).unwrap();
                (iso_key(&c.mol), c.terminal) == key
            })
            .map(|(i, _)| i)
            .collect();
        prop_assert_eq!(e.equivalent_actions(&s, taken, &next).unwrap(), brute);
    }

    #[test]
    fn decompositions_replay(seed in any::<u64>(), n in 1usize..8) {
        let e = env(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = random_tree(e.vocab(), n, &mut rng);
        let trajs = e.decompose_target(&target, &mut rng, 4).unwrap();
        for t in trajs {
            t.verify(&e).unwrap();
            prop_assert_eq!(t.actions.last(), Some(&Action::Stop));
            prop_assert_eq!(canonical_hash(t.terminal_mol()), canonical_hash(&target));
        }
    }
}
