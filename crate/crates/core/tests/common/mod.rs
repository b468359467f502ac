#![allow(dead_code)]

use pgfn_core::chemgraph::{FragmentVocab, PartialMol, Stem};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Random tree grown by uniform attaches until it has `n` nodes or no open stems.
pub fn random_tree<R: Rng>(vocab: &FragmentVocab, n: usize, rng: &mut R) -> PartialMol {
    let mut m = PartialMol::empty().attach(vocab, None, rng.random_range(0..vocab.len())).unwrap();
    while m.len() < n {
        let stems = m.open_stems(vocab);
        let Some(&stem) = stems.choose(rng) else { break };
        m = m.attach(vocab, Some(stem), rng.random_range(0..vocab.len())).unwrap();
    }
    m
}

fn rooted(m: &PartialMol, v: usize, parent: Option<usize>) -> String {
    let mut kids: Vec<String> = m
        .neighbors(v)
        .into_iter()
        .filter(|&(_, nb, _)| Some(nb) != parent)
        .map(|(own, nb, nbs)| format!("{own}>{nbs}:{}", rooted(m, nb, Some(v))))
        .collect();
    kids.sort();
    format!("({}[{}])", m.frag(v), kids.join(","))
}

/// Exact isomorphism-class key: the smallest rooted encoding over all roots.
pub fn iso_key(m: &PartialMol) -> String {
    (0..m.len()).map(|r| rooted(m, r, None)).min().unwrap_or_default()
}

/// Every molecule reachable by a single attach.
pub fn children(m: &PartialMol, vocab: &FragmentVocab) -> Vec<PartialMol> {
    if m.is_empty() {
        return (0..vocab.len()).map(|f| m.attach(vocab, None, f).unwrap()).collect();
    }
    let mut out = Vec::new();
    for stem in m.open_stems(vocab) {
        for f in 0..vocab.len() {
            out.push(m.attach(vocab, Some(stem), f).unwrap());
        }
    }
    out
}

pub fn stem(node: usize, stem: usize) -> Option<Stem> {
    Some(Stem { node, stem })
}
