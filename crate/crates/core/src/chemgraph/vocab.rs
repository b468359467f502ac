use std::fmt::Write as _;
use std::path::Path;

use super::{ChemError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentType {
    pub id: usize,
    pub label: String,
    pub arity: usize,
}

/// An ordered fragment set. Action indices depend on the order, so two
/// vocabularies are only interchangeable if they compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentVocab {
    version: String,
    types: Vec<FragmentType>,
}

impl FragmentVocab {
    pub fn new(version: impl Into<String>, entries: Vec<(String, usize)>) -> Result<Self> {
        let version = version.into();
        if version.is_empty() || version.contains(char::is_whitespace) {
            return Err(ChemError::BadVocab(format!("bad version tag `{version}`")));
        }
        if entries.is_empty() {
            return Err(ChemError::BadVocab("empty vocabulary".into()));
        }
        let mut types = Vec::with_capacity(entries.len());
        for (id, (label, arity)) in entries.into_iter().enumerate() {
            if arity == 0 {
                return Err(ChemError::BadVocab(format!("fragment `{label}` has arity 0")));
            }
            if label.is_empty() || label.contains(['\t', '\n']) {
                return Err(ChemError::BadVocab(format!("bad label for fragment {id}")));
            }
            if types.iter().any(|t: &FragmentType| t.label == label) {
                return Err(ChemError::BadVocab(format!("duplicate label `{label}`")));
            }
            types.push(FragmentType { id, label, arity });
        }
        Ok(FragmentVocab { version, types })
    }

    /// `F0..F{n-1}` with arities cycling through `arities`.
    pub fn generated(version: impl Into<String>, n: usize, arities: &[usize]) -> Result<Self> {
        if arities.is_empty() {
            return Err(ChemError::BadVocab("no arities given".into()));
        }
        let entries = (0..n).map(|i| (format!("F{i}"), arities[i % arities.len()])).collect();
        Self::new(version, entries)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&FragmentType> {
        self.types.get(id)
    }

    pub fn arity(&self, id: usize) -> Result<usize> {
        self.get(id).map(|t| t.arity).ok_or(ChemError::UnknownFragment(id))
    }

    pub fn max_arity(&self) -> usize {
        self.types.iter().map(|t| t.arity).max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FragmentType> {
        self.types.iter()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#fragvocab v1 {}\n", self.version);
        for t in &self.types {
            let _ = writeln!(out, "{}\t{}\t{}", t.id, t.label, t.arity);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| ChemError::SyntaxError("empty vocabulary file".into()))?;
        let version = header
            .strip_prefix("#fragvocab v1 ")
            .ok_or_else(|| ChemError::SyntaxError(format!("bad vocabulary header `{header}`")))?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(ChemError::SyntaxError(format!("vocabulary line {}: expected 3 fields", i + 2)));
            }
            let id: usize = f[0].parse().map_err(|_| ChemError::SyntaxError(format!("bad id `{}`", f[0])))?;
            if id != i {
                return Err(ChemError::SyntaxError(format!("ids must be dense, found {id} at position {i}")));
            }
            let arity: usize = f[2].parse().map_err(|_| ChemError::SyntaxError(format!("bad arity `{}`", f[2])))?;
            entries.push((f[1].to_string(), arity));
        }
        Self::new(version.trim(), entries)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }
}
