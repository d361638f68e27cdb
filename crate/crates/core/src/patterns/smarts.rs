//! SMARTS subset parser.

use serde::{Deserialize, Serialize};

use crate::molgraph::{read_charge, read_element, Atom, BondOrder, ParseError};
use crate::notation::{self, AtomSyntax};

/// Constraint on one query atom. `None` fields are unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryAtom {
    pub element: Option<u8>,
    pub aromatic: Option<bool>,
    pub charge: Option<i8>,
}

impl QueryAtom {
    pub const WILDCARD: QueryAtom = QueryAtom {
        element: None,
        aromatic: None,
        charge: None,
    };

    pub fn matches(&self, atom: &Atom) -> bool {
        self.element.is_none_or(|z| z == atom.element)
            && self.aromatic.is_none_or(|ar| ar == atom.aromatic)
            && self.charge.is_none_or(|c| c == atom.formal_charge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondConstraint {
    /// `~`
    Any,
    /// `-`
    Single,
    /// `=`
    Double,
    /// `#`
    Triple,
    /// `:`
    Aromatic,
    /// Implicit bond between two query atoms.
    SingleOrAromatic,
}

impl BondConstraint {
    pub fn accepts(self, order: BondOrder) -> bool {
        match self {
            BondConstraint::Any => true,
            BondConstraint::Single => order == BondOrder::Single,
            BondConstraint::Double => order == BondOrder::Double,
            BondConstraint::Triple => order == BondOrder::Triple,
            BondConstraint::Aromatic => order == BondOrder::Aromatic,
            BondConstraint::SingleOrAromatic => {
                matches!(order, BondOrder::Single | BondOrder::Aromatic)
            }
        }
    }
}

/// A connected substructure query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryGraph {
    atoms: Vec<QueryAtom>,
    edges: Vec<(usize, usize, BondConstraint)>,
    adjacency: Vec<Vec<(usize, BondConstraint)>>,
    source: String,
}

impl QueryGraph {
    pub fn new(
        atoms: Vec<QueryAtom>,
        edges: Vec<(usize, usize, BondConstraint)>,
        source: impl Into<String>,
    ) -> Result<Self, ParseError> {
        let source = source.into();
        if atoms.is_empty() {
            return Err(ParseError::EmptyInput);
        }
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, c) in &edges {
            if a == b || a >= n || b >= n || adjacency[a].iter().any(|&(x, _)| x == b) {
                return Err(ParseError::InvalidBond { offset: 0 });
            }
            adjacency[a].push((b, c));
            adjacency[b].push((a, c));
        }
        for list in &mut adjacency {
            list.sort_unstable_by_key(|&(j, _)| j);
        }
        let q = Self {
            atoms,
            edges,
            adjacency,
            source,
        };
        if !q.is_connected() {
            return Err(ParseError::UnsupportedFeature {
                feature: "disconnected query".into(),
                offset: 0,
            });
        }
        Ok(q)
    }

    pub fn atoms(&self) -> &[QueryAtom] {
        &self.atoms
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn edges(&self) -> &[(usize, usize, BondConstraint)] {
        &self.edges
    }

    pub fn adjacency(&self, i: usize) -> &[(usize, BondConstraint)] {
        &self.adjacency[i]
    }

    pub fn bond(&self, i: usize, j: usize) -> Option<BondConstraint> {
        self.adjacency[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map(|&(_, c)| c)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

struct Smarts;

fn unsupported(what: &str, offset: usize) -> ParseError {
    ParseError::UnsupportedFeature {
        feature: what.to_string(),
        offset,
    }
}

impl AtomSyntax for Smarts {
    type Atom = QueryAtom;
    type Bond = BondConstraint;
    const ALLOW_DOT: bool = false;

    fn bare_atom(&self, s: &[u8], pos: usize) -> Result<Option<(QueryAtom, usize)>, ParseError> {
        let c = s[pos];
        let atom = match c {
            b'*' => QueryAtom::WILDCARD,
            b'a' => QueryAtom {
                aromatic: Some(true),
                ..QueryAtom::WILDCARD
            },
            b'A' => QueryAtom {
                aromatic: Some(false),
                ..QueryAtom::WILDCARD
            },
            b'$' => return Err(unsupported("recursive SMARTS", pos)),
            c if c.is_ascii_alphabetic() => {
                let (z, aromatic, used) = read_element(&s[pos..], pos, false)?;
                return Ok(Some((
                    QueryAtom {
                        element: Some(z),
                        aromatic: Some(aromatic),
                        charge: None,
                    },
                    used,
                )));
            }
            _ => return Ok(None),
        };
        Ok(Some((atom, 1)))
    }

    fn bracket_atom(&self, body: &[u8], offset: usize) -> Result<QueryAtom, ParseError> {
        let at = |i: usize| offset + 1 + i;
        let Some(&first) = body.first() else {
            return Err(unsupported("empty bracket atom", offset));
        };
        let mut i;
        let mut atom = match first {
            b'*' => {
                i = 1;
                QueryAtom::WILDCARD
            }
            b'a' if body.get(1).is_none_or(|b| !b.is_ascii_lowercase()) => {
                i = 1;
                QueryAtom {
                    aromatic: Some(true),
                    ..QueryAtom::WILDCARD
                }
            }
            b'A' if body.get(1).is_none_or(|b| !b.is_ascii_lowercase()) => {
                i = 1;
                QueryAtom {
                    aromatic: Some(false),
                    ..QueryAtom::WILDCARD
                }
            }
            b'#' => {
                i = 1;
                while body.get(i).is_some_and(u8::is_ascii_digit) {
                    i += 1;
                }
                let z: u8 = std::str::from_utf8(&body[1..i])
                    .ok()
                    .and_then(|t| t.parse().ok())
                    .filter(|&z: &u8| (1..=118).contains(&z))
                    .ok_or_else(|| ParseError::UnknownElement {
                        symbol: String::from_utf8_lossy(&body[..i]).into_owned(),
                        offset: at(0),
                    })?;
                QueryAtom {
                    element: Some(z),
                    ..QueryAtom::WILDCARD
                }
            }
            b'$' => return Err(unsupported("recursive SMARTS", at(0))),
            c if c.is_ascii_digit() => return Err(unsupported("isotope primitive", at(0))),
            c if c.is_ascii_alphabetic() => {
                let (z, aromatic, used) = read_element(body, at(0), true)?;
                i = used;
                QueryAtom {
                    element: Some(z),
                    aromatic: Some(aromatic),
                    charge: None,
                }
            }
            c => return Err(unsupported(&format!("atom primitive '{}'", c as char), at(0))),
        };
        if matches!(body.get(i), Some(b'+' | b'-')) {
            let (charge, next) = read_charge(body, i, at(i))?;
            atom.charge = Some(charge);
            i = next;
        }
        if let Some(&c) = body.get(i) {
            let what = match c {
                b'&' | b',' | b';' | b'!' => "logical operator",
                b'R' | b'r' | b'x' => "ring primitive",
                b'H' | b'h' => "hydrogen-count primitive",
                b'@' => "chirality",
                _ => "atom primitive",
            };
            return Err(unsupported(what, at(i)));
        }
        Ok(atom)
    }

    fn bond(&self, c: u8, offset: usize) -> Result<Option<BondConstraint>, ParseError> {
        Ok(match c {
            b'-' => Some(BondConstraint::Single),
            b'=' => Some(BondConstraint::Double),
            b'#' => Some(BondConstraint::Triple),
            b':' => Some(BondConstraint::Aromatic),
            b'~' => Some(BondConstraint::Any),
            b'@' => return Err(unsupported("ring bond", offset)),
            b'/' | b'\\' => return Err(unsupported("directional bond", offset)),
            b'!' | b'&' | b',' | b';' => return Err(unsupported("logical operator", offset)),
            _ => None,
        })
    }
}

/// Parses a SMARTS pattern from the supported subset.
pub fn parse_smarts(pattern: &str) -> Result<QueryGraph, ParseError> {
    let skeleton = notation::scan(&Smarts, pattern)?;
    let mut edges = Vec::with_capacity(skeleton.bonds.len());
    for rb in &skeleton.bonds {
        if edges
            .iter()
            .any(|&(a, b, _)| (a, b) == (rb.a, rb.b) || (a, b) == (rb.b, rb.a))
        {
            return Err(ParseError::InvalidBond { offset: rb.offset });
        }
        edges.push((
            rb.a,
            rb.b,
            rb.bond.unwrap_or(BondConstraint::SingleOrAromatic),
        ));
    }
    QueryGraph::new(skeleton.atoms, edges, pattern)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carboxyl_pattern() {
        let q = parse_smarts("C(=O)O").unwrap();
        assert_eq!(q.atom_count(), 3);
        assert_eq!(q.edges().len(), 2);
        let doubles = q
            .edges()
            .iter()
            .filter(|e| e.2 == BondConstraint::Double)
            .count();
        assert_eq!(doubles, 1);
    }

    #[test]
    fn aromatic_ring_pattern() {
        let q = parse_smarts("c1ccccc1").unwrap();
        assert_eq!(q.atom_count(), 6);
        assert_eq!(q.edges().len(), 6);
        assert!(q.atoms().iter().all(|a| a.aromatic == Some(true)));
        assert!((0..6).all(|i| q.adjacency(i).len() == 2));
    }

    #[test]
    fn charged_atom() {
        let q = parse_smarts("[N+]").unwrap();
        assert_eq!(q.atom_count(), 1);
        assert_eq!(q.atoms()[0].charge, Some(1));
        assert_eq!(q.atoms()[0].element, Some(7));
        let q = parse_smarts("[O-]").unwrap();
        assert_eq!(q.atoms()[0].charge, Some(-1));
    }

    #[test]
    fn wildcards_and_atomic_numbers() {
        let q = parse_smarts("[#6]~*").unwrap();
        assert_eq!(q.atoms()[0].element, Some(6));
        assert_eq!(q.atoms()[0].aromatic, None);
        assert_eq!(q.atoms()[1], QueryAtom::WILDCARD);
        assert_eq!(q.edges()[0].2, BondConstraint::Any);
        let q = parse_smarts("aA").unwrap();
        assert_eq!(q.atoms()[0].aromatic, Some(true));
        assert_eq!(q.atoms()[1].aromatic, Some(false));
    }

    #[test]
    fn unsupported_features_report_offsets() {
        let cases = [
            ("[C;R]", 2),
            ("[C&X3]", 2),
            ("[CH2]", 2),
            ("C@C", 1),
            ("[$(CO)]", 1),
            ("C.C", 1),
            ("C!-C", 1),
        ];
        for (pat, off) in cases {
            match parse_smarts(pat) {
                Err(ParseError::UnsupportedFeature { offset, .. }) => {
                    assert_eq!(offset, off, "{pat}")
                }
                other => panic!("{pat}: {other:?}"),
            }
        }
    }

    #[test]
    fn structural_errors_are_shared_with_smiles() {
        assert!(matches!(parse_smarts("C1CC"), Err(ParseError::UnbalancedRingClosure { .. })));
        assert!(matches!(parse_smarts("C(C"), Err(ParseError::UnclosedBranch { .. })));
        assert!(matches!(parse_smarts("Q"), Err(ParseError::UnknownElement { .. })));
        assert_eq!(parse_smarts(""), Err(ParseError::EmptyInput));
    }
}
