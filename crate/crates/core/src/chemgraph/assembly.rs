//! `v1|n:<frag>,<frag>,...|e:<a>.<sa>-<b>.<sb>;...`; the empty molecule is `v1|`.

use super::{ChemError, Edge, FragmentVocab, PartialMol, Result};

const HEADER: &str = "v1";

pub fn serialize(mol: &PartialMol) -> String {
    if mol.is_empty() {
        return format!("{HEADER}|");
    }
    let nodes: Vec<String> = mol.nodes().iter().map(|f| f.to_string()).collect();
    let edges: Vec<String> = mol.edges().iter().map(|e| format!("{}.{}-{}.{}", e.a, e.sa, e.b, e.sb)).collect();
    format!("{HEADER}|n:{}|e:{}", nodes.join(","), edges.join(";"))
}

fn syntax(msg: impl Into<String>) -> ChemError {
    ChemError::SyntaxError(msg.into())
}

fn num(s: &str) -> Result<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(syntax(format!("expected a number, found `{s}`")));
    }
    s.parse().map_err(|_| syntax(format!("number `{s}` out of range")))
}

fn endpoint(s: &str) -> Result<(usize, usize)> {
    let (n, st) = s.split_once('.').ok_or_else(|| syntax(format!("bad edge endpoint `{s}`")))?;
    Ok((num(n)?, num(st)?))
}

pub fn parse(text: &str, vocab: &FragmentVocab) -> Result<PartialMol> {
    let text = text.trim();
    let mut parts = text.split('|');
    let header = parts.next().unwrap_or_default();
    if header != HEADER {
        return Err(syntax(format!("unknown header `{header}`")));
    }
    let rest: Vec<&str> = parts.collect();
    if rest == [""] {
        return Ok(PartialMol::empty());
    }
    let [n_field, e_field] = rest[..] else {
        return Err(syntax("expected `n:` and `e:` fields"));
    };
    let n_list = n_field.strip_prefix("n:").ok_or_else(|| syntax("missing `n:` field"))?;
    let e_list = e_field.strip_prefix("e:").ok_or_else(|| syntax("missing `e:` field"))?;
    let nodes = n_list.split(',').map(num).collect::<Result<Vec<_>>>()?;
    let edges = if e_list.is_empty() {
        Vec::new()
    } else {
        e_list
            .split(';')
            .map(|e| {
                let (l, r) = e.split_once('-').ok_or_else(|| syntax(format!("bad edge `{e}`")))?;
                let ((a, sa), (b, sb)) = (endpoint(l)?, endpoint(r)?);
                Ok(Edge { a, sa, b, sb })
            })
            .collect::<Result<Vec<_>>>()?
    };
    PartialMol::from_parts(nodes, edges, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemgraph::{canonical_hash, Stem};

    fn vocab() -> FragmentVocab {
        FragmentVocab::generated("t", 4, &[2, 1]).unwrap()
    }

    #[test]
    fn empty_round_trip() {
        assert_eq!(serialize(&PartialMol::empty()), "v1|");
        assert!(parse("v1|", &vocab()).unwrap().is_empty());
    }

    #[test]
    fn two_nodes_round_trip() {
        let v = vocab();
        let m = PartialMol::empty().attach(&v, None, 2).unwrap().attach(&v, Some(Stem { node: 0, stem: 1 }), 3).unwrap();
        let s = serialize(&m);
        assert_eq!(s, "v1|n:2,3|e:0.1-1.0");
        assert_eq!(canonical_hash(&parse(&s, &v).unwrap()), canonical_hash(&m));
    }

    #[test]
    fn malformed_strings() {
        let v = vocab();
        assert!(matches!(parse("v1|n:0,1|e:0.1-1", &v), Err(ChemError::SyntaxError(_))));
        assert!(matches!(parse("v1|n:0,1|e:0.x-1.0", &v), Err(ChemError::SyntaxError(_))));
        assert!(matches!(parse("v2|", &v), Err(ChemError::SyntaxError(_))));
        assert!(matches!(parse("v1|n:0,9|e:0.0-1.0", &v), Err(ChemError::VocabMismatch(_))));
        assert!(matches!(parse("v1|n:0,1|e:", &v), Err(ChemError::InvariantViolation(_))));
        assert!(parse("v1|n:3|e:", &v).is_ok());
    }
}
