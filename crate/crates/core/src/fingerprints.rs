//! Circular, path and structural-key fingerprints; Dice similarity; kNN.
//!
//! Hashed identifiers use 64-bit FNV-1a ([`crate::hash`]) and are folded into
//! the bit range by `identifier mod nbits`.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{fnv1a, Fnv1a};
use crate::molgraph::MolecularGraph;
use crate::par;
use crate::patterns::{has_match, FunctionalGroupDictionary};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("cannot compare {0}/{1} bits with {2}/{3} bits")]
    KindMismatch(FingerprintKind, usize, FingerprintKind, usize),
    #[error("bit length {0} is not a power of two")]
    InvalidBitLength(usize),
    #[error("bit {0} out of range for {1} bits")]
    PositionOutOfRange(usize, usize),
    #[error("path length bounds {0}..={1} are invalid")]
    InvalidPathLength(usize, usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("{0} labels for {1} fingerprints")]
    LabelCount(usize, usize),
    #[error("malformed fingerprint line: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FingerprintKind {
    Circular,
    Path,
    StructuralKey,
}

impl fmt::Display for FingerprintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FingerprintKind::Circular => "circular",
            FingerprintKind::Path => "path",
            FingerprintKind::StructuralKey => "structural_key",
        })
    }
}

impl FromStr for FingerprintKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "circular" | "morgan" | "ecfp" => Ok(FingerprintKind::Circular),
            "path" | "rdkit" => Ok(FingerprintKind::Path),
            "structural_key" | "structural-key" | "maccs" => Ok(FingerprintKind::StructuralKey),
            other => Err(format!("unknown fingerprint kind '{other}'")),
        }
    }
}

/// Fixed-length bit set tagged with the family that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    kind: FingerprintKind,
    nbits: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn empty(kind: FingerprintKind, nbits: usize) -> Self {
        Self {
            kind,
            nbits,
            words: vec![0; nbits.div_ceil(64)],
        }
    }

    pub fn from_positions(
        kind: FingerprintKind,
        nbits: usize,
        positions: impl IntoIterator<Item = usize>,
    ) -> Result<Self, FingerprintError> {
        let mut fp = Self::empty(kind, nbits);
        for p in positions {
            if p >= nbits {
                return Err(FingerprintError::PositionOutOfRange(p, nbits));
            }
            fp.words[p / 64] |= 1 << (p % 64);
        }
        Ok(fp)
    }

    pub fn kind(&self) -> FingerprintKind {
        self.kind
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn contains(&self, pos: usize) -> bool {
        pos < self.nbits && self.words[pos / 64] >> (pos % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w >> b & 1 == 1).map(move |b| wi * 64 + b)
        })
    }

    fn check_compatible(&self, other: &Self) -> Result<(), FingerprintError> {
        if self.kind != other.kind || self.nbits != other.nbits {
            return Err(FingerprintError::KindMismatch(
                self.kind,
                self.nbits,
                other.kind,
                other.nbits,
            ));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// `index<TAB>kind<TAB>nbits<TAB>comma-separated set bits`
    pub fn dump_line(&self, index: usize) -> String {
        let bits: Vec<String> = self.positions().map(|p| p.to_string()).collect();
        format!("{index}\t{}\t{}\t{}", self.kind, self.nbits, bits.join(","))
    }

    pub fn parse_dump_line(line: &str) -> Result<(usize, Self), FingerprintError> {
        let bad = || FingerprintError::Malformed(line.to_string());
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let index = fields[0].parse().map_err(|_| bad())?;
        let kind = fields[1].parse().map_err(|_| bad())?;
        let nbits = fields[2].parse().map_err(|_| bad())?;
        let positions = if fields[3].is_empty() {
            Vec::new()
        } else {
            fields[3]
                .split(',')
                .map(|p| p.parse().map_err(|_| bad()))
                .collect::<Result<Vec<usize>, _>>()?
        };
        Ok((index, Self::from_positions(kind, nbits, positions)?))
    }
}

fn check_power_of_two(nbits: usize) -> Result<(), FingerprintError> {
    if nbits == 0 || !nbits.is_power_of_two() {
        return Err(FingerprintError::InvalidBitLength(nbits));
    }
    Ok(())
}

fn fold(ids: impl IntoIterator<Item = u64>, kind: FingerprintKind, nbits: usize) -> Fingerprint {
    Fingerprint::from_positions(kind, nbits, ids.into_iter().map(|id| (id % nbits as u64) as usize))
        .expect("folded positions are in range")
}

/// Morgan-style circular fingerprint.
///
/// Round 0 hashes `(atomic number, heavy degree, formal charge, aromatic)`
/// as four bytes. Round `r` hashes `(r, own identifier, sorted neighbour
/// identifiers from round r-1)`, each identifier as 8 little-endian bytes.
/// An atom whose covered bond set did not grow in a round keeps its previous
/// identifier, so saturated environments (an isolated atom, both ends of
/// ethane past round 1) contribute no new bits.
pub fn circular_fingerprint(
    g: &MolecularGraph,
    radius: usize,
    nbits: usize,
) -> Result<Fingerprint, FingerprintError> {
    check_power_of_two(nbits)?;
    let n = g.atom_count();
    let edge_words = g.edge_count().div_ceil(64).max(1);
    let edge_id = |a: usize, b: usize| {
        g.edges()
            .binary_search(&(a.min(b), a.max(b)))
            .expect("adjacent atoms share an edge")
    };
    let mut ids: Vec<u64> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            fnv1a(&[
                a.element,
                g.degree(i).min(255) as u8,
                a.formal_charge as u8,
                u8::from(a.aromatic),
            ])
        })
        .collect();
    let mut cover: Vec<Vec<u64>> = vec![vec![0; edge_words]; n];
    let mut seen: BTreeSet<u64> = ids.iter().copied().collect();
    for round in 1..=radius {
        let mut next_ids = ids.clone();
        let mut next_cover = cover.clone();
        for i in 0..n {
            let c = &mut next_cover[i];
            for &j in g.adj(i) {
                let e = edge_id(i, j);
                c[e / 64] |= 1 << (e % 64);
                for (w, cw) in c.iter_mut().zip(&cover[j]) {
                    *w |= cw;
                }
            }
            if *c == cover[i] {
                continue;
            }
            let mut nbr: Vec<u64> = g.adj(i).iter().map(|&j| ids[j]).collect();
            nbr.sort_unstable();
            let mut h = Fnv1a::new();
            h.write(&(round as u32).to_le_bytes()).write_u64(ids[i]);
            for id in nbr {
                h.write_u64(id);
            }
            next_ids[i] = h.finish();
        }
        ids = next_ids;
        cover = next_cover;
        seen.extend(ids.iter().copied());
    }
    Ok(fold(seen, FingerprintKind::Circular, nbits))
}

fn atom_token(g: &MolecularGraph, i: usize) -> String {
    let a = &g.atoms()[i];
    if a.aromatic {
        a.symbol().to_lowercase()
    } else {
        a.symbol().to_string()
    }
}

fn path_string(g: &MolecularGraph, path: &[usize]) -> String {
    let mut s = atom_token(g, path[0]);
    for w in path.windows(2) {
        s.push(g.bond_order(w[0], w[1]).expect("path follows edges").code());
        s.push_str(&atom_token(g, w[1]));
    }
    s
}

/// Canonical strings of all simple paths with `min_len..=max_len` bonds.
pub fn path_strings(g: &MolecularGraph, min_len: usize, max_len: usize) -> BTreeSet<String> {
    fn walk(
        g: &MolecularGraph,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        min_len: usize,
        max_len: usize,
        out: &mut HashSet<String>,
    ) {
        let bonds = path.len() - 1;
        if bonds >= min_len {
            let fwd = path_string(g, path);
            path.reverse();
            let rev = path_string(g, path);
            path.reverse();
            out.insert(fwd.min(rev));
        }
        if bonds == max_len {
            return;
        }
        let last = *path.last().expect("non-empty path");
        for &next in g.adj(last) {
            if !on_path[next] {
                on_path[next] = true;
                path.push(next);
                walk(g, path, on_path, min_len, max_len, out);
                path.pop();
                on_path[next] = false;
            }
        }
    }
    let mut out = HashSet::new();
    let mut on_path = vec![false; g.atom_count()];
    for start in 0..g.atom_count() {
        on_path[start] = true;
        walk(g, &mut vec![start], &mut on_path, min_len, max_len, &mut out);
        on_path[start] = false;
    }
    out.into_iter().collect()
}

/// Hashed linear-path fingerprint. Each path is written as element symbols
/// (aromatic lowercase) joined by bond codes `- = # :`, and the smaller of
/// the two traversal directions is hashed.
pub fn path_fingerprint(
    g: &MolecularGraph,
    min_len: usize,
    max_len: usize,
    nbits: usize,
) -> Result<Fingerprint, FingerprintError> {
    check_power_of_two(nbits)?;
    if min_len == 0 || min_len > max_len {
        return Err(FingerprintError::InvalidPathLength(min_len, max_len));
    }
    let ids = path_strings(g, min_len, max_len)
        .into_iter()
        .map(|s| fnv1a(s.as_bytes()));
    Ok(fold(ids, FingerprintKind::Path, nbits))
}

/// Bit `i` is set iff dictionary entry `i` (insertion order) matches `g`.
pub fn structural_key_fingerprint(g: &MolecularGraph, dict: &FunctionalGroupDictionary) -> Fingerprint {
    let positions = dict
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| has_match(&e.pattern, g))
        .map(|(i, _)| i);
    Fingerprint::from_positions(FingerprintKind::StructuralKey, dict.len(), positions)
        .expect("one bit per entry")
}

/// Parameters selecting one fingerprint family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintSpec {
    pub kind: FingerprintKind,
    pub nbits: usize,
    pub radius: usize,
    pub min_path: usize,
    pub max_path: usize,
}

impl FingerprintSpec {
    pub fn new(kind: FingerprintKind) -> Self {
        Self {
            kind,
            nbits: 2048,
            radius: 2,
            min_path: 1,
            max_path: 7,
        }
    }

    pub fn compute(
        &self,
        g: &MolecularGraph,
        dict: &FunctionalGroupDictionary,
    ) -> Result<Fingerprint, FingerprintError> {
        match self.kind {
            FingerprintKind::Circular => circular_fingerprint(g, self.radius, self.nbits),
            FingerprintKind::Path => path_fingerprint(g, self.min_path, self.max_path, self.nbits),
            FingerprintKind::StructuralKey => Ok(structural_key_fingerprint(g, dict)),
        }
    }

    /// Fingerprints a whole corpus, in parallel when enabled.
    pub fn compute_all(
        &self,
        graphs: &[MolecularGraph],
        dict: &FunctionalGroupDictionary,
    ) -> Result<Vec<Fingerprint>, FingerprintError> {
        par::map(graphs, |g| self.compute(g, dict)).into_iter().collect()
    }
}

/// Dice coefficient `2|A∩B| / (|A|+|B|)`; two empty sets score 1.
pub fn dice(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    a.check_compatible(b)?;
    let total = a.count_ones() + b.count_ones();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * a.intersection_count(b) as f64 / total as f64)
}

/// The `k` corpus entries most Dice-similar to `query`, descending, ties by
/// ascending index.
pub fn knn(
    query: &Fingerprint,
    corpus: &[Fingerprint],
    k: usize,
) -> Result<Vec<(usize, f64)>, FingerprintError> {
    if corpus.is_empty() {
        return Err(FingerprintError::EmptyCorpus);
    }
    if k == 0 {
        return Err(FingerprintError::InvalidK);
    }
    let sims: Vec<f64> = corpus
        .iter()
        .map(|c| dice(query, c))
        .collect::<Result<_, _>>()?;
    let mut ranked: Vec<(usize, f64)> = sims.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

/// Mean binary label of the `k` nearest neighbours.
pub fn knn_predict(
    query: &Fingerprint,
    corpus: &[Fingerprint],
    labels: &[bool],
    k: usize,
) -> Result<f64, FingerprintError> {
    if labels.len() != corpus.len() {
        return Err(FingerprintError::LabelCount(labels.len(), corpus.len()));
    }
    let nn = knn(query, corpus, k)?;
    let positives = nn.iter().filter(|(i, _)| labels[*i]).count();
    Ok(positives as f64 / nn.len() as f64)
}

/// [`knn_predict`] for many queries, in parallel when enabled.
pub fn knn_predict_all(
    queries: &[Fingerprint],
    corpus: &[Fingerprint],
    labels: &[bool],
    k: usize,
) -> Result<Vec<f64>, FingerprintError> {
    par::map(queries, |q| knn_predict(q, corpus, labels, k))
        .into_iter()
        .collect()
}
