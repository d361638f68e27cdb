//! SMILES parsing into hydrogen-suppressed molecular graphs.
//!
//! Graph edges carry no bond type. Bond orders read from the input are kept
//! in a side table ([`MolecularGraph::bond_order`]) that only the path
//! fingerprint and bond-constrained SMARTS matching consult.
//!
//! Supported subset: organic-subset atoms (`B C N O P S F Cl Br I` and the
//! aromatic `b c n o p s`), bracket atoms with isotope, element, chirality,
//! explicit H count, charge and atom class, ring closures `0-9` and `%nn`,
//! branches, dot-disconnects and bond symbols `- = # :`. Stereo markers
//! (`/ \ @`), isotopes, H counts and atom classes are read and dropped.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::notation::{self, AtomSyntax};

/// Element symbols indexed by atomic number (index 0 unused).
pub const ELEMENT_SYMBOLS: [&str; 119] = [
    "", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
    "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
    "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

pub const HYDROGEN: u8 = 1;

/// Elements that may be flagged aromatic.
pub const AROMATIC_ELEMENTS: [u8; 6] = [5, 6, 7, 8, 15, 16];

pub fn element_from_symbol(symbol: &str) -> Option<u8> {
    ELEMENT_SYMBOLS
        .iter()
        .position(|s| !s.is_empty() && *s == symbol)
        .map(|z| z as u8)
}

pub fn element_symbol(z: u8) -> &'static str {
    ELEMENT_SYMBOLS.get(z as usize).copied().unwrap_or("?")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-ASCII character at offset {offset}")]
    NonAscii { offset: usize },
    #[error("ring closure {label} opened at offset {offset} is never closed")]
    UnbalancedRingClosure { label: u16, offset: usize },
    #[error("unmatched parenthesis at offset {offset}")]
    UnclosedBranch { offset: usize },
    #[error("unterminated bracket atom at offset {offset}")]
    UnclosedBracket { offset: usize },
    #[error("unknown element '{symbol}' at offset {offset}")]
    UnknownElement { symbol: String, offset: usize },
    #[error("unexpected character '{ch}' at offset {offset}")]
    UnexpectedCharacter { ch: char, offset: usize },
    #[error("bond symbol at offset {offset} is not followed by an atom")]
    DanglingBond { offset: usize },
    #[error("bond at offset {offset} would create a self-loop or parallel edge")]
    InvalidBond { offset: usize },
    #[error("unsupported feature at offset {offset}: {feature}")]
    UnsupportedFeature { feature: String, offset: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("atom index {index} out of range for a molecule with {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid edge ({0}, {1})")]
    InvalidEdge(usize, usize),
    #[error("invalid atom: {0}")]
    InvalidAtom(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    /// Atomic number, 1..=118.
    pub element: u8,
    pub formal_charge: i8,
    pub aromatic: bool,
    pub index: usize,
}

impl Atom {
    pub fn symbol(&self) -> &'static str {
        element_symbol(self.element)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// One-character code used in path strings.
    pub fn code(self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }
}

/// Hydrogen-suppressed, bond-type-agnostic molecular graph.
///
/// Edges are stored as `(low, high)` pairs, sorted. Adjacency lists are
/// sorted by neighbour index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    /// Parse-time bond orders, aligned with `adjacency`.
    orders: Vec<Vec<BondOrder>>,
    source_smiles: String,
}

impl MolecularGraph {
    /// Builds a graph from atom records and bonds, validating every
    /// structural invariant. Atom `index` fields are rewritten densely.
    pub fn from_parts(
        atoms: Vec<Atom>,
        bonds: &[(usize, usize, BondOrder)],
        source_smiles: impl Into<String>,
    ) -> Result<Self, GraphError> {
        let n = atoms.len();
        let mut atoms = atoms;
        for (i, a) in atoms.iter_mut().enumerate() {
            if a.element == 0 || a.element as usize >= ELEMENT_SYMBOLS.len() {
                return Err(GraphError::InvalidAtom(format!("atomic number {}", a.element)));
            }
            if a.element == HYDROGEN {
                return Err(GraphError::InvalidAtom("hydrogen node".into()));
            }
            if a.aromatic && !AROMATIC_ELEMENTS.contains(&a.element) {
                return Err(GraphError::InvalidAtom(format!("aromatic {}", a.symbol())));
            }
            a.index = i;
        }
        let mut adjacency: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(a, b, order) in bonds {
            if a == b || a >= n || b >= n || !seen.insert((a.min(b), a.max(b))) {
                return Err(GraphError::InvalidEdge(a, b));
            }
            adjacency[a].push((b, order));
            adjacency[b].push((a, order));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let orders = adjacency
            .iter()
            .map(|l| l.iter().map(|&(_, o)| o).collect())
            .collect();
        let adjacency = adjacency
            .into_iter()
            .map(|l| l.into_iter().map(|(j, _)| j).collect())
            .collect();
        Ok(Self {
            atoms,
            edges: seen.into_iter().collect(),
            adjacency,
            orders,
            source_smiles: source_smiles.into(),
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn source_smiles(&self) -> &str {
        &self.source_smiles
    }

    /// Neighbours of atom `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> Result<&[usize], GraphError> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(GraphError::IndexOutOfRange {
                index: i,
                len: self.atoms.len(),
            })
    }

    /// Unchecked neighbour access for hot loops; panics on a bad index.
    pub(crate) fn adj(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Bond order recorded at parse time for the edge `i`–`j`, if any.
    pub fn bond_order(&self, i: usize, j: usize) -> Option<BondOrder> {
        let list = self.adjacency.get(i)?;
        list.binary_search(&j).ok().map(|k| self.orders[i][k])
    }

    pub fn bonds(&self) -> impl Iterator<Item = (usize, usize, BondOrder)> + '_ {
        self.edges.iter().map(move |&(a, b)| {
            (a, b, self.bond_order(a, b).expect("edge present in side table"))
        })
    }

    /// Number of connected components (an empty graph has zero).
    pub fn component_count(&self) -> usize {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &u in &self.adjacency[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    /// Relabels atoms so that old atom `i` becomes new atom `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.atoms.len();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if perm.len() != n || check.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(GraphError::InvalidAtom("not a permutation".into()));
        }
        let mut atoms = vec![self.atoms[0]; n];
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old];
        }
        let bonds: Vec<_> = self
            .bonds()
            .map(|(a, b, o)| (perm[a], perm[b], o))
            .collect();
        Self::from_parts(atoms, &bonds, self.source_smiles.clone())
    }
}

impl fmt::Display for MolecularGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({} atoms, {} edges)",
            self.source_smiles,
            self.atoms.len(),
            self.edges.len()
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct RawAtom {
    element: u8,
    charge: i8,
    aromatic: bool,
}

struct Smiles;

/// Reads an element symbol at the start of `s`. Returns atomic number,
/// aromatic flag and bytes consumed. `bracket` enables the full periodic
/// table; otherwise only the organic subset is accepted.
pub(crate) fn read_element(
    s: &[u8],
    offset: usize,
    bracket: bool,
) -> Result<(u8, bool, usize), ParseError> {
    let c = s[0];
    if c.is_ascii_lowercase() {
        let z = match c {
            b'b' => 5,
            b'c' => 6,
            b'n' => 7,
            b'o' => 8,
            b'p' => 15,
            b's' => 16,
            _ => {
                let len = if s.len() > 1 && s[1].is_ascii_lowercase() { 2 } else { 1 };
                return Err(ParseError::UnknownElement {
                    symbol: String::from_utf8_lossy(&s[..len]).into_owned(),
                    offset,
                });
            }
        };
        if bracket && s.len() > 1 && matches!(&s[..2], b"se" | b"as") {
            return Err(ParseError::UnknownElement {
                symbol: String::from_utf8_lossy(&s[..2]).into_owned(),
                offset,
            });
        }
        return Ok((z, true, 1));
    }
    if !c.is_ascii_uppercase() {
        return Err(ParseError::UnexpectedCharacter {
            ch: c as char,
            offset,
        });
    }
    if bracket {
        if s.len() > 1 && s[1].is_ascii_lowercase() {
            let two = std::str::from_utf8(&s[..2]).unwrap_or("");
            if let Some(z) = element_from_symbol(two) {
                return Ok((z, false, 2));
            }
        }
        let one = std::str::from_utf8(&s[..1]).unwrap_or("");
        return element_from_symbol(one)
            .map(|z| (z, false, 1))
            .ok_or_else(|| ParseError::UnknownElement {
                symbol: one.to_string(),
                offset,
            });
    }
    if s.len() > 1 {
        match &s[..2] {
            b"Cl" => return Ok((17, false, 2)),
            b"Br" => return Ok((35, false, 2)),
            _ => {}
        }
    }
    let z = match c {
        b'B' => 5,
        b'C' => 6,
        b'N' => 7,
        b'O' => 8,
        b'P' => 15,
        b'S' => 16,
        b'F' => 9,
        b'I' => 53,
        _ => {
            let len = if s.len() > 1 && s[1].is_ascii_lowercase() { 2 } else { 1 };
            return Err(ParseError::UnknownElement {
                symbol: String::from_utf8_lossy(&s[..len]).into_owned(),
                offset,
            });
        }
    };
    Ok((z, false, 1))
}

/// Reads a charge suffix (`+`, `-`, `++`, `+2`, ...) at `s[i..]`.
pub(crate) fn read_charge(s: &[u8], mut i: usize, offset: usize) -> Result<(i8, usize), ParseError> {
    let Some(&sign_ch) = s.get(i) else {
        return Ok((0, i));
    };
    let sign: i32 = match sign_ch {
        b'+' => 1,
        b'-' => -1,
        _ => return Ok((0, i)),
    };
    i += 1;
    let mut magnitude = 1i32;
    if s.get(i).is_some_and(u8::is_ascii_digit) {
        let start = i;
        while s.get(i).is_some_and(u8::is_ascii_digit) {
            i += 1;
        }
        magnitude = std::str::from_utf8(&s[start..i])
            .ok()
            .and_then(|t| t.parse().ok())
            .unwrap_or(i32::MAX);
    } else {
        while s.get(i) == Some(&sign_ch) {
            magnitude += 1;
            i += 1;
        }
    }
    let charge = i8::try_from(sign * magnitude).map_err(|_| ParseError::UnsupportedFeature {
        feature: "charge out of range".into(),
        offset,
    })?;
    Ok((charge, i))
}

impl AtomSyntax for Smiles {
    type Atom = RawAtom;
    type Bond = BondOrder;
    const ALLOW_DOT: bool = true;

    fn bare_atom(&self, s: &[u8], pos: usize) -> Result<Option<(RawAtom, usize)>, ParseError> {
        if !s[pos].is_ascii_alphabetic() && s[pos] != b'*' {
            return Ok(None);
        }
        if s[pos] == b'*' {
            return Err(ParseError::UnknownElement {
                symbol: "*".into(),
                offset: pos,
            });
        }
        let (element, aromatic, used) = read_element(&s[pos..], pos, false)?;
        Ok(Some((
            RawAtom {
                element,
                charge: 0,
                aromatic,
            },
            used,
        )))
    }

    fn bracket_atom(&self, body: &[u8], offset: usize) -> Result<RawAtom, ParseError> {
        let at = |i: usize| offset + 1 + i;
        let mut i = 0;
        while body.get(i).is_some_and(u8::is_ascii_digit) {
            i += 1;
        }
        if i >= body.len() {
            return Err(ParseError::UnknownElement {
                symbol: String::new(),
                offset: at(i),
            });
        }
        if body[i] == b'*' {
            return Err(ParseError::UnknownElement {
                symbol: "*".into(),
                offset: at(i),
            });
        }
        let (element, aromatic, used) = read_element(&body[i..], at(i), true)?;
        if aromatic && !AROMATIC_ELEMENTS.contains(&element) {
            return Err(ParseError::UnknownElement {
                symbol: element_symbol(element).to_lowercase(),
                offset: at(i),
            });
        }
        i += used;
        // chirality: @, @@, @TH1, @AL2, @SP3, @TB10, @OH25
        while body.get(i) == Some(&b'@') {
            i += 1;
        }
        if i > 0 && body[i - 1] == b'@' {
            if let Some(tag) = body.get(i..i + 2) {
                if matches!(tag, b"TH" | b"AL" | b"SP" | b"TB" | b"OH") {
                    i += 2;
                    while body.get(i).is_some_and(u8::is_ascii_digit) {
                        i += 1;
                    }
                }
            }
        }
        if body.get(i) == Some(&b'H') {
            i += 1;
            while body.get(i).is_some_and(u8::is_ascii_digit) {
                i += 1;
            }
        }
        let (charge, next) = read_charge(body, i, at(i))?;
        i = next;
        if body.get(i) == Some(&b':') {
            i += 1;
            while body.get(i).is_some_and(u8::is_ascii_digit) {
                i += 1;
            }
        }
        if i != body.len() {
            return Err(ParseError::UnexpectedCharacter {
                ch: body[i] as char,
                offset: at(i),
            });
        }
        Ok(RawAtom {
            element,
            charge,
            aromatic,
        })
    }

    fn bond(&self, c: u8, offset: usize) -> Result<Option<BondOrder>, ParseError> {
        Ok(match c {
            b'-' | b'/' | b'\\' => Some(BondOrder::Single),
            b'=' => Some(BondOrder::Double),
            b'#' => Some(BondOrder::Triple),
            b':' => Some(BondOrder::Aromatic),
            b'$' => {
                return Err(ParseError::UnsupportedFeature {
                    feature: "quadruple bond".into(),
                    offset,
                })
            }
            _ => None,
        })
    }
}

/// Parses a SMILES string into a hydrogen-suppressed graph.
///
/// Explicit hydrogens are dropped together with their bonds; implicit
/// hydrogens are never materialised. Dot-separated fragments become
/// disconnected components of one graph.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, ParseError> {
    let skeleton = notation::scan(&Smiles, text)?;
    let mut remap = vec![usize::MAX; skeleton.atoms.len()];
    let mut atoms = Vec::new();
    for (i, raw) in skeleton.atoms.iter().enumerate() {
        if raw.element != HYDROGEN {
            remap[i] = atoms.len();
            atoms.push(Atom {
                element: raw.element,
                formal_charge: raw.charge,
                aromatic: raw.aromatic,
                index: atoms.len(),
            });
        }
    }
    let mut bonds = Vec::with_capacity(skeleton.bonds.len());
    let mut seen = BTreeSet::new();
    for rb in &skeleton.bonds {
        let (a, b) = (remap[rb.a], remap[rb.b]);
        if a == usize::MAX || b == usize::MAX {
            continue;
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(ParseError::InvalidBond { offset: rb.offset });
        }
        let order = rb.bond.unwrap_or(if atoms[a].aromatic && atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        });
        bonds.push((a, b, order));
    }
    MolecularGraph::from_parts(atoms, &bonds, text)
        .map_err(|e| ParseError::UnsupportedFeature {
            feature: e.to_string(),
            offset: 0,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degrees(g: &MolecularGraph) -> Vec<usize> {
        let mut d: Vec<_> = (0..g.atom_count()).map(|i| g.degree(i)).collect();
        d.sort_unstable();
        d
    }

    #[test]
    fn methane() {
        let g = parse_smiles("C").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.edge_count(), 0);
        let a = g.atoms()[0];
        assert_eq!((a.element, a.formal_charge, a.aromatic), (6, 0, false));
        assert!(g.neighbors(0).unwrap().is_empty());
    }

    #[test]
    fn acetic_acid() {
        let g = parse_smiles("CC(=O)O").unwrap();
        assert_eq!(g.atom_count(), 4);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(degrees(&g), vec![1, 1, 1, 3]);
        assert_eq!(g.bond_order(1, 2), Some(BondOrder::Double));
        assert_eq!(g.bond_order(1, 3), Some(BondOrder::Single));
        assert_eq!(g.bond_order(0, 3), None);
    }

    #[test]
    fn benzene_is_a_six_cycle() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.edge_count(), 6);
        assert!(g.atoms().iter().all(|a| a.aromatic && a.element == 6));
        assert!((0..6).all(|i| g.degree(i) == 2));
        assert_eq!(g.neighbors(0).unwrap(), &[1, 5]);
        assert_eq!(g.bond_order(0, 5), Some(BondOrder::Aromatic));
    }

    #[test]
    fn explicit_hydrogens_are_removed() {
        let g = parse_smiles("[H]O[H]").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.atoms()[0].element, 8);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn salt_is_two_components() {
        let g = parse_smiles("[Na+].[Cl-]").unwrap();
        assert_eq!(g.atom_count(), 2);
        assert_eq!(g.atoms()[0].formal_charge, 1);
        assert_eq!(g.atoms()[1].formal_charge, -1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.component_count(), 2);
    }

    #[test]
    fn chain_neighbors() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(g.neighbors(1).unwrap(), &[0, 2]);
        assert_eq!(
            g.neighbors(3),
            Err(GraphError::IndexOutOfRange { index: 3, len: 3 })
        );
    }

    #[test]
    fn bracket_features_are_accepted() {
        let g = parse_smiles("[13CH3][C@@H](N)C(=O)[O-]").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.atoms()[5].formal_charge, -1);
        let g = parse_smiles("C/C=C\\C").unwrap();
        assert_eq!(g.edge_count(), 3);
        let g = parse_smiles("[Fe+++]").unwrap();
        assert_eq!(g.atoms()[0].formal_charge, 3);
        let g = parse_smiles("[Cu+2]").unwrap();
        assert_eq!(g.atoms()[0].formal_charge, 2);
        let g = parse_smiles("[nH]1cccc1").unwrap();
        assert!(g.atoms()[0].aromatic);
        let g = parse_smiles("[C@TH1H](F)(Cl)Br").unwrap();
        assert_eq!(g.atom_count(), 4);
        let g = parse_smiles("[CH3:7]C").unwrap();
        assert_eq!(g.atom_count(), 2);
    }

    #[test]
    fn percent_ring_closures() {
        let g = parse_smiles("C%10CCCC%10").unwrap();
        assert_eq!(g.edge_count(), 5);
        let g = parse_smiles("C=1CC1").unwrap();
        assert_eq!(g.bond_order(0, 2), Some(BondOrder::Double));
        let g = parse_smiles("C1CC=1").unwrap();
        assert_eq!(g.bond_order(0, 2), Some(BondOrder::Double));
    }

    #[test]
    fn error_paths() {
        assert_eq!(parse_smiles(""), Err(ParseError::EmptyInput));
        assert!(matches!(
            parse_smiles("C1CC"),
            Err(ParseError::UnbalancedRingClosure { label: 1, .. })
        ));
        assert!(matches!(parse_smiles("C(C"), Err(ParseError::UnclosedBranch { .. })));
        assert!(matches!(parse_smiles("CC)"), Err(ParseError::UnclosedBranch { .. })));
        assert!(matches!(parse_smiles("[Xx]"), Err(ParseError::UnknownElement { .. })));
        assert!(matches!(parse_smiles("CQ"), Err(ParseError::UnknownElement { .. })));
        assert!(matches!(parse_smiles("C11"), Err(ParseError::InvalidBond { .. })));
        assert!(matches!(parse_smiles("C12CC12"), Err(ParseError::InvalidBond { .. })));
        assert!(matches!(parse_smiles("CC="), Err(ParseError::DanglingBond { .. })));
        assert!(matches!(parse_smiles("[CH3"), Err(ParseError::UnclosedBracket { .. })));
        assert!(matches!(parse_smiles("Cé"), Err(ParseError::NonAscii { .. })));
        assert!(matches!(parse_smiles("[se]1cccc1"), Err(ParseError::UnknownElement { .. })));
    }

    #[test]
    fn two_letter_bracket_symbols() {
        let g = parse_smiles("[Cl-].[Br-].[Sc]").unwrap();
        let z: Vec<_> = g.atoms().iter().map(|a| a.element).collect();
        assert_eq!(z, vec![17, 35, 21]);
        // bare "Cl" versus "C" followed by "l" is resolved in favour of chlorine
        let g = parse_smiles("ClCCl").unwrap();
        assert_eq!(g.atom_count(), 3);
    }

    #[test]
    fn permutation_preserves_structure() {
        let g = parse_smiles("CC(=O)O").unwrap();
        let p = g.permuted(&[3, 2, 1, 0]).unwrap();
        assert_eq!(p.atoms()[3].element, 6);
        assert_eq!(p.bond_order(2, 1), Some(BondOrder::Double));
        assert_eq!(p.edge_count(), 3);
    }
}
