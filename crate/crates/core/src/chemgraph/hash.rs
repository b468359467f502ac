//! FNV-1a 64-bit and Weisfeiler–Lehman refinement over fragment trees.
//!
//! Byte encoding (every field is a little-endian `u64`):
//! - round 0: `h0(v) = fnv(frag(v))`
//! - round r+1: `fnv(frag(v), h_r(v), deg(v), t_1, ..., t_k)` where the
//!   `t_i = (own stem, neighbor stem, h_r(neighbor))` are sorted ascending
//! - molecule: `fnv(|nodes|, sorted final node hashes)` after `|nodes|` rounds;
//!   the empty molecule hashes to 0.

use super::PartialMol;

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(OFFSET)
    }
}

impl Fnv1a {
    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    pub fn word(&mut self, w: u64) -> &mut Self {
        self.bytes(&w.to_le_bytes())
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    Fnv1a::default().bytes(bytes).finish()
}

/// Node hashes after each of rounds `0..=rounds`.
pub(crate) fn wl_layers(mol: &PartialMol, rounds: usize) -> Vec<Vec<u64>> {
    let n = mol.len();
    let mut adj: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); n];
    for e in mol.edges() {
        adj[e.a].push((e.sa, e.b, e.sb));
        adj[e.b].push((e.sb, e.a, e.sa));
    }
    let mut layers = Vec::with_capacity(rounds + 1);
    layers.push(mol.nodes().iter().map(|&f| Fnv1a::default().word(f as u64).finish()).collect::<Vec<_>>());
    let mut buf: Vec<(u64, u64, u64)> = Vec::new();
    for _ in 0..rounds {
        let prev = layers.last().expect("round 0 present");
        let next = (0..n)
            .map(|v| {
                buf.clear();
                buf.extend(adj[v].iter().map(|&(own, nb, nbs)| (own as u64, nbs as u64, prev[nb])));
                buf.sort_unstable();
                let mut h = Fnv1a::default();
                h.word(mol.frag(v) as u64).word(prev[v]).word(adj[v].len() as u64);
                for &(a, b, c) in &buf {
                    h.word(a).word(b).word(c);
                }
                h.finish()
            })
            .collect();
        layers.push(next);
    }
    layers
}

/// Stable node colors (hashes after `|nodes|` rounds).
pub fn node_colors(mol: &PartialMol) -> Vec<u64> {
    wl_layers(mol, mol.len()).pop().unwrap_or_default()
}

pub fn canonical_hash(mol: &PartialMol) -> u64 {
    if mol.is_empty() {
        return 0;
    }
    let mut colors = node_colors(mol);
    colors.sort_unstable();
    let mut h = Fnv1a::default();
    h.word(colors.len() as u64);
    for c in colors {
        h.word(c);
    }
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::{FragmentVocab, Stem};

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(canonical_hash(&PartialMol::empty()), 0);
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let v = FragmentVocab::generated("t", 3, &[3]).unwrap();
        let s = |node, stem| Some(Stem { node, stem });
        // F0 root with F1 on stem 0 and F2 on stem 2, built in both orders.
        let a = PartialMol::empty().attach(&v, None, 0).unwrap();
        let x = a.attach(&v, s(0, 0), 1).unwrap().attach(&v, s(0, 2), 2).unwrap();
        let y = a.attach(&v, s(0, 2), 2).unwrap().attach(&v, s(0, 0), 1).unwrap();
        assert_ne!(x, y);
        assert_eq!(canonical_hash(&x), canonical_hash(&y));
        // Same fragments on different stems is a different molecule.
        let z = a.attach(&v, s(0, 1), 1).unwrap().attach(&v, s(0, 2), 2).unwrap();
        assert_ne!(canonical_hash(&x), canonical_hash(&z));
    }
}
