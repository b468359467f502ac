use std::fmt::Write as _;

use super::hash::wl_layers;
use super::{ChemError, PartialMol, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FingerprintSpec {
    pub radius: usize,
    pub bits: usize,
}

impl Default for FingerprintSpec {
    fn default() -> Self {
        FingerprintSpec { radius: 3, bits: 2048 }
    }
}

/// Fixed-length bit set with a cached popcount.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    len: usize,
    words: Vec<u64>,
    count: usize,
}

impl Fingerprint {
    pub fn zeros(len: usize) -> Self {
        Fingerprint { len, words: vec![0; len.div_ceil(64)], count: 0 }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = Self::zeros(len);
        for i in indices {
            fp.set(i);
        }
        fp
    }

    /// Sets bit `i`.
    ///
    /// # Panics
    /// If `i >= len`.
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let (w, b) = (i / 64, i % 64);
        if self.words[w] & (1 << b) == 0 {
            self.words[w] |= 1 << b;
            self.count += 1;
        }
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn count_ones(&self) -> usize {
        self.count
    }

    /// Indices of set bits, ascending.
    pub fn active(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count);
        for (w, &word) in self.words.iter().enumerate() {
            let mut x = word;
            while x != 0 {
                out.push(w * 64 + x.trailing_zeros() as usize);
                x &= x - 1;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.len).map(|i| if self.get(i) { 1.0 } else { 0.0 }).collect()
    }

    /// Lowercase hex, 16 digits per 64-bit word, word 0 first.
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(self.words.len() * 16);
        for w in &self.words {
            let _ = write!(s, "{w:016x}");
        }
        s
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        let nwords = len.div_ceil(64);
        if hex.len() != nwords * 16 || !hex.is_ascii() {
            return Err(ChemError::SyntaxError(format!("expected {} hex digits for {len} bits", nwords * 16)));
        }
        let mut fp = Self::zeros(len);
        for (i, chunk) in hex.as_bytes().chunks(16).enumerate() {
            let s = std::str::from_utf8(chunk).expect("ascii");
            let w = u64::from_str_radix(s, 16).map_err(|_| ChemError::SyntaxError(format!("bad hex `{s}`")))?;
            fp.words[i] = w;
        }
        let tail = len % 64;
        if tail != 0 && fp.words[nwords - 1] >> tail != 0 {
            return Err(ChemError::SyntaxError("bits set beyond fingerprint length".into()));
        }
        fp.count = fp.words.iter().map(|w| w.count_ones() as usize).sum();
        Ok(fp)
    }

    fn and_or_counts(&self, other: &Fingerprint) -> (usize, usize) {
        self.words.iter().zip(&other.words).fold((0, 0), |(i, u), (a, b)| {
            (i + (a & b).count_ones() as usize, u + (a | b).count_ones() as usize)
        })
    }
}

/// For each node and each round `0..=radius`, sets bit `h_r(node) mod bits`.
pub fn fingerprint(mol: &PartialMol, spec: FingerprintSpec) -> Result<Fingerprint> {
    if mol.is_empty() {
        return Err(ChemError::EmptyMolecule);
    }
    let mut fp = Fingerprint::zeros(spec.bits);
    for layer in wl_layers(mol, spec.radius) {
        for h in layer {
            fp.set((h % spec.bits as u64) as usize);
        }
    }
    Ok(fp)
}

/// |A∧B| / |A∨B|, with 0/0 taken as 1.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.len != b.len {
        return Err(ChemError::LengthMismatch(a.len, b.len));
    }
    let (inter, union) = a.and_or_counts(b);
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::{FragmentVocab, Stem};

    #[test]
    fn tanimoto_examples() {
        let fp = |ix: &[usize]| Fingerprint::from_indices(16, ix.iter().copied());
        assert_eq!(tanimoto(&fp(&[1, 2, 3]), &fp(&[2, 3, 4])).unwrap(), 0.5);
        assert_eq!(tanimoto(&fp(&[1, 5]), &fp(&[1, 5])).unwrap(), 1.0);
        assert_eq!(tanimoto(&fp(&[1]), &fp(&[2])).unwrap(), 0.0);
        assert_eq!(tanimoto(&fp(&[]), &fp(&[])).unwrap(), 1.0);
        assert_eq!(tanimoto(&fp(&[]), &Fingerprint::zeros(8)), Err(ChemError::LengthMismatch(16, 8)));
    }

    #[test]
    fn single_node_sets_at_most_radius_plus_one_bits() {
        let v = FragmentVocab::generated("t", 4, &[2]).unwrap();
        for f in 0..4 {
            let m = PartialMol::empty().attach(&v, None, f).unwrap();
            let fp = fingerprint(&m, FingerprintSpec::default()).unwrap();
            assert!((1..=4).contains(&fp.count_ones()));
        }
    }

    #[test]
    fn swapping_a_leaf_type_changes_the_fingerprint() {
        let v = FragmentVocab::generated("t", 3, &[2]).unwrap();
        let s = |node, stem| Some(Stem { node, stem });
        let base = PartialMol::empty().attach(&v, None, 0).unwrap().attach(&v, s(0, 0), 1).unwrap();
        let x = base.attach(&v, s(0, 1), 1).unwrap();
        let y = base.attach(&v, s(0, 1), 2).unwrap();
        let spec = FingerprintSpec::default();
        assert_ne!(fingerprint(&x, spec).unwrap(), fingerprint(&y, spec).unwrap());
        assert_eq!(fingerprint(&x, spec).unwrap(), fingerprint(&x.clone(), spec).unwrap());
    }

    #[test]
    fn empty_molecule_has_no_fingerprint() {
        assert_eq!(fingerprint(&PartialMol::empty(), FingerprintSpec::default()), Err(ChemError::EmptyMolecule));
    }

    #[test]
    fn hex_round_trip() {
        let fp = Fingerprint::from_indices(130, [0, 63, 64, 129]);
        let back = Fingerprint::from_hex(&fp.to_hex(), 130).unwrap();
        assert_eq!(back, fp);
        assert_eq!(back.active(), vec![0, 63, 64, 129]);
        assert!(Fingerprint::from_hex("zz", 8).is_err());
    }
}
