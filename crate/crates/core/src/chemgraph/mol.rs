use super::{ChemError, FragmentVocab, Result};

/// An attachment point: stem `stem` of node `node`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stem {
    pub node: usize,
    pub stem: usize,
}

/// Bond between stem `sa` of node `a` and stem `sb` of node `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: usize,
    pub sa: usize,
    pub b: usize,
    pub sb: usize,
}

impl Edge {
    /// `(own stem, other node, other stem)` seen from `node`, if incident.
    pub fn from_side(&self, node: usize) -> Option<(usize, usize, usize)> {
        if self.a == node {
            Some((self.sa, self.b, self.sb))
        } else if self.b == node {
            Some((self.sb, self.a, self.sa))
        } else {
            None
        }
    }
}

/// A tree of typed fragments. Node ids are positions in `nodes`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PartialMol {
    nodes: Vec<usize>,
    edges: Vec<Edge>,
}

impl PartialMol {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds and validates a molecule from raw parts.
    pub fn from_parts(nodes: Vec<usize>, edges: Vec<Edge>, vocab: &FragmentVocab) -> Result<Self> {
        let m = PartialMol { nodes, edges };
        m.validate(vocab)?;
        Ok(m)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn frag(&self, node: usize) -> usize {
        self.nodes[node]
    }

    /// `(own stem, neighbor, neighbor stem)` for every bond of `node`.
    pub fn neighbors(&self, node: usize) -> Vec<(usize, usize, usize)> {
        self.edges.iter().filter_map(|e| e.from_side(node)).collect()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.a == node || e.b == node).count()
    }

    /// Bitmask of used stems per node.
    pub fn used_stem_masks(&self) -> Vec<u64> {
        let mut used = vec![0u64; self.nodes.len()];
        for e in &self.edges {
            used[e.a] |= 1 << e.sa;
            used[e.b] |= 1 << e.sb;
        }
        used
    }

    /// Unused stems sorted by `(node, stem)`.
    pub fn open_stems(&self, vocab: &FragmentVocab) -> Vec<Stem> {
        let used = self.used_stem_masks();
        let mut out = Vec::new();
        for (node, &frag) in self.nodes.iter().enumerate() {
            let arity = vocab.get(frag).map_or(0, |t| t.arity);
            for stem in 0..arity {
                if used[node] & (1 << stem) == 0 {
                    out.push(Stem { node, stem });
                }
            }
        }
        out
    }

    /// Adds fragment `frag`, bonding its stem 0 to `stem`. On the empty
    /// molecule `stem` is ignored and `frag` becomes the root.
    pub fn attach(&self, vocab: &FragmentVocab, stem: Option<Stem>, frag: usize) -> Result<PartialMol> {
        vocab.arity(frag)?;
        let mut out = self.clone();
        if self.is_empty() {
            out.nodes.push(frag);
            return Ok(out);
        }
        let s = stem.ok_or(ChemError::StemOccupied { node: usize::MAX, stem: usize::MAX })?;
        let occupied = ChemError::StemOccupied { node: s.node, stem: s.stem };
        let host = *self.nodes.get(s.node).ok_or(occupied.clone())?;
        if s.stem >= vocab.arity(host)? || self.used_stem_masks()[s.node] & (1 << s.stem) != 0 {
            return Err(occupied);
        }
        let new = out.nodes.len();
        out.nodes.push(frag);
        out.edges.push(Edge { a: s.node, sa: s.stem, b: new, sb: 0 });
        Ok(out)
    }

    /// Leaves whose only bond uses their own stem 0, plus the lone node of a
    /// one-node molecule. Exactly these removals can be undone by `attach`.
    pub fn removable_leaves(&self) -> Vec<usize> {
        if self.nodes.len() == 1 {
            return vec![0];
        }
        let mut degree = vec![0usize; self.nodes.len()];
        let mut via = vec![usize::MAX; self.nodes.len()];
        for e in &self.edges {
            degree[e.a] += 1;
            degree[e.b] += 1;
            via[e.a] = e.sa;
            via[e.b] = e.sb;
        }
        (0..self.nodes.len()).filter(|&n| degree[n] == 1 && via[n] == 0).collect()
    }

    /// Removes `node` and renumbers the remaining nodes densely.
    pub fn remove_node(&self, node: usize) -> PartialMol {
        let shift = |n: usize| if n > node { n - 1 } else { n };
        let nodes = self.nodes.iter().enumerate().filter(|&(i, _)| i != node).map(|(_, &f)| f).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| e.a != node && e.b != node)
            .map(|e| Edge { a: shift(e.a), sa: e.sa, b: shift(e.b), sb: e.sb })
            .collect();
        PartialMol { nodes, edges }
    }

    /// One `(parent, removed node)` per removable leaf.
    pub fn leaf_parents(&self) -> Vec<(PartialMol, usize)> {
        self.removable_leaves().into_iter().map(|n| (self.remove_node(n), n)).collect()
    }

    /// Relabels nodes: old node `i` becomes `perm[i]`. Edge order follows the
    /// new ids so the result is an independent construction of the same tree.
    pub fn permuted(&self, perm: &[usize]) -> PartialMol {
        let mut nodes = vec![0; self.nodes.len()];
        for (i, &f) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = f;
        }
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| Edge { a: perm[e.b], sa: e.sb, b: perm[e.a], sb: e.sa })
            .collect();
        edges.sort_by_key(|e| (e.a, e.sa, e.b, e.sb));
        PartialMol { nodes, edges }
    }

    /// Checks the tree invariants against `vocab`.
    pub fn validate(&self, vocab: &FragmentVocab) -> Result<()> {
        let n = self.nodes.len();
        let bad = |m: String| Err(ChemError::InvariantViolation(m));
        for &f in &self.nodes {
            if vocab.get(f).is_none() {
                return Err(ChemError::VocabMismatch(format!("fragment id {f} outside vocabulary of {}", vocab.len())));
            }
        }
        if n == 0 {
            return if self.edges.is_empty() { Ok(()) } else { bad("edges without nodes".into()) };
        }
        if self.edges.len() != n - 1 {
            return bad(format!("{} nodes need {} edges, found {}", n, n - 1, self.edges.len()));
        }
        let mut used = vec![0u64; n];
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            for (node, stem) in [(e.a, e.sa), (e.b, e.sb)] {
                if node >= n {
                    return bad(format!("edge references node {node}"));
                }
                if stem >= vocab.arity(self.nodes[node])? || stem >= 64 {
                    return bad(format!("stem {stem} out of range on node {node}"));
                }
                if used[node] & (1 << stem) != 0 {
                    return bad(format!("stem ({node}, {stem}) used twice"));
                }
                used[node] |= 1 << stem;
            }
            let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
            if ra == rb {
                return bad("cycle".into());
            }
            parent[ra] = rb;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> FragmentVocab {
        FragmentVocab::new("t", vec![("A".into(), 2), ("B".into(), 1), ("C".into(), 3)]).unwrap()
    }

    #[test]
    fn root_insertion_and_arity_accounting() {
        let v = vocab();
        let a = PartialMol::empty().attach(&v, None, 0).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.open_stems(&v).len(), 2);
        let ab = a.attach(&v, Some(Stem { node: 0, stem: 0 }), 1).unwrap();
        assert_eq!(ab.len(), 2);
        assert_eq!(ab.edges().len(), 1);
        assert_eq!(ab.open_stems(&v), vec![Stem { node: 0, stem: 1 }]);
    }

    #[test]
    fn occupied_and_unknown_are_errors() {
        let v = vocab();
        let ab = PartialMol::empty()
            .attach(&v, None, 0)
            .unwrap()
            .attach(&v, Some(Stem { node: 0, stem: 0 }), 1)
            .unwrap();
        assert!(matches!(ab.attach(&v, Some(Stem { node: 0, stem: 0 }), 1), Err(ChemError::StemOccupied { .. })));
        assert!(matches!(ab.attach(&v, Some(Stem { node: 1, stem: 0 }), 1), Err(ChemError::StemOccupied { .. })));
        assert!(matches!(ab.attach(&v, Some(Stem { node: 0, stem: 5 }), 1), Err(ChemError::StemOccupied { .. })));
        assert_eq!(ab.attach(&v, Some(Stem { node: 0, stem: 1 }), 9), Err(ChemError::UnknownFragment(9)));
    }

    #[test]
    fn single_node_parent_is_empty() {
        let v = vocab();
        let a = PartialMol::empty().attach(&v, None, 2).unwrap();
        assert_eq!(a.leaf_parents(), vec![(PartialMol::empty(), 0)]);
    }

    #[test]
    fn path_interior_is_not_removable() {
        // A with two A children: both children are leaves bonded via stem 0.
        let v = vocab();
        let m = PartialMol::empty()
            .attach(&v, None, 0)
            .unwrap()
            .attach(&v, Some(Stem { node: 0, stem: 0 }), 0)
            .unwrap()
            .attach(&v, Some(Stem { node: 0, stem: 1 }), 0)
            .unwrap();
        let removed: Vec<usize> = m.leaf_parents().into_iter().map(|(_, n)| n).collect();
        assert_eq!(removed, vec![1, 2]);
        for (p, _) in m.leaf_parents() {
            p.validate(&v).unwrap();
        }
    }

    #[test]
    fn validate_catches_broken_trees() {
        let v = vocab();
        let e = |a, sa, b, sb| Edge { a, sa, b, sb };
        assert!(PartialMol::from_parts(vec![0, 1], vec![], &v).is_err());
        assert!(PartialMol::from_parts(vec![0, 1], vec![e(0, 2, 1, 0)], &v).is_err());
        assert!(PartialMol::from_parts(vec![0, 0, 0], vec![e(0, 0, 1, 0), e(0, 0, 2, 0)], &v).is_err());
        assert!(matches!(PartialMol::from_parts(vec![7], vec![], &v), Err(ChemError::VocabMismatch(_))));
        assert!(PartialMol::from_parts(vec![0, 1], vec![e(0, 1, 1, 0)], &v).is_ok());
    }
}
