//! Fragment vocabularies, fragment trees, canonical hashing, fingerprints.

mod assembly;
mod fingerprint;
mod hash;
mod mol;
mod vocab;

pub use assembly::{parse, serialize};
pub use fingerprint::{fingerprint, tanimoto, Fingerprint, FingerprintSpec};
pub use hash::{canonical_hash, fnv1a, node_colors, Fnv1a};
pub use mol::{Edge, PartialMol, Stem};
pub use vocab::{FragmentType, FragmentVocab};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChemError {
    #[error("stem ({node}, {stem}) is not open")]
    StemOccupied { node: usize, stem: usize },
    #[error("fragment type {0} is not in the vocabulary")]
    UnknownFragment(usize),
    #[error("fingerprint of an empty molecule")]
    EmptyMolecule,
    #[error("fingerprint lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("syntax error: {0}")]
    SyntaxError(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("invalid molecule: {0}")]
    InvariantViolation(String),
    #[error("invalid vocabulary: {0}")]
    BadVocab(String),
}

pub type Result<T, E = ChemError> = std::result::Result<T, E>;
