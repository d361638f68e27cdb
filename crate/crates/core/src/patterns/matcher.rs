//! Backtracking substructure search.
//!
//! Query atoms are visited in breadth-first order from atom 0, so every atom
//! after the first has an already-mapped parent and its candidates are drawn
//! from the parent image's neighbours. At each step the atom constraint,
//! injectivity and every bond back to already-mapped query atoms are checked.

use super::smarts::{BondConstraint, QueryGraph};
use crate::molgraph::MolecularGraph;

/// Injective query-to-molecule mapping; `m[q]` is the molecule atom for query atom `q`.
pub type Mapping = Vec<usize>;

struct Plan {
    order: Vec<usize>,
    /// For each position in `order` (after the first): the parent's query index.
    parent: Vec<Option<usize>>,
    /// Bonds from `order[k]` back to query atoms earlier in the order.
    back: Vec<Vec<(usize, BondConstraint)>>,
}

fn plan(q: &QueryGraph) -> Plan {
    let n = q.atom_count();
    let mut order = Vec::with_capacity(n);
    let mut parent = Vec::with_capacity(n);
    let mut rank = vec![usize::MAX; n];
    rank[0] = 0;
    order.push(0);
    parent.push(None);
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &(u, _) in q.adjacency(v) {
            if rank[u] == usize::MAX {
                rank[u] = order.len();
                order.push(u);
                parent.push(Some(v));
            }
        }
    }
    let back = order
        .iter()
        .map(|&v| {
            q.adjacency(v)
                .iter()
                .filter(|&&(u, _)| rank[u] < rank[v])
                .copied()
                .collect()
        })
        .collect();
    Plan {
        order,
        parent,
        back,
    }
}

struct Search<'a> {
    q: &'a QueryGraph,
    g: &'a MolecularGraph,
    plan: Plan,
    mapping: Vec<usize>,
    used: Vec<bool>,
}

impl Search<'_> {
    fn feasible(&self, k: usize, cand: usize) -> bool {
        let qv = self.plan.order[k];
        if self.used[cand] || !self.q.atoms()[qv].matches(&self.g.atoms()[cand]) {
            return false;
        }
        self.plan.back[k].iter().all(|&(qu, constraint)| {
            self.g
                .bond_order(cand, self.mapping[qu])
                .is_some_and(|order| constraint.accepts(order))
        })
    }

    /// Depth-first extension; `emit` returns false to stop the search.
    fn extend(&mut self, k: usize, emit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if k == self.plan.order.len() {
            return emit(&self.mapping);
        }
        let qv = self.plan.order[k];
        let candidates: Vec<usize> = match self.plan.parent[k] {
            None => (0..self.g.atom_count()).collect(),
            Some(p) => self.g.adj(self.mapping[p]).to_vec(),
        };
        for cand in candidates {
            if !self.feasible(k, cand) {
                continue;
            }
            self.mapping[qv] = cand;
            self.used[cand] = true;
            let keep_going = self.extend(k + 1, emit);
            self.used[cand] = false;
            if !keep_going {
                return false;
            }
        }
        true
    }
}

fn search(q: &QueryGraph, g: &MolecularGraph, emit: &mut dyn FnMut(&[usize]) -> bool) {
    if q.atom_count() > g.atom_count() {
        return;
    }
    let mut s = Search {
        q,
        g,
        plan: plan(q),
        mapping: vec![usize::MAX; q.atom_count()],
        used: vec![false; g.atom_count()],
    };
    s.extend(0, emit);
}

/// All injective mappings of `q` into `g`, sorted lexicographically by the
/// mapped index tuple (in query atom order).
pub fn match_pattern(q: &QueryGraph, g: &MolecularGraph) -> Vec<Mapping> {
    let mut out = Vec::new();
    search(q, g, &mut |m| {
        out.push(m.to_vec());
        true
    });
    out.sort_unstable();
    out
}

/// True when `q` has at least one match in `g`; stops at the first.
pub fn has_match(q: &QueryGraph, g: &MolecularGraph) -> bool {
    let mut found = false;
    search(q, g, &mut |_| {
        found = true;
        false
    });
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;
    use crate::patterns::smarts::parse_smarts;
    use std::collections::BTreeSet;

    fn m(q: &str, g: &str) -> Vec<Mapping> {
        match_pattern(&parse_smarts(q).unwrap(), &parse_smiles(g).unwrap())
    }

    #[test]
    fn no_nitrogen_in_ethanol() {
        assert!(m("N", "CCO").is_empty());
        assert!(!has_match(&parse_smarts("N").unwrap(), &parse_smiles("CCO").unwrap()));
    }

    #[test]
    fn carboxyl_in_acetic_acid() {
        let hits = m("C(=O)O", "CC(=O)O");
        let sets: BTreeSet<BTreeSet<usize>> =
            hits.iter().map(|h| h.iter().copied().collect()).collect();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets.into_iter().next().unwrap(), BTreeSet::from([1, 2, 3]));
        assert_eq!(hits, vec![vec![1, 2, 3]]);
    }

    #[test]
    fn benzene_automorphisms() {
        let hits = m("c1ccccc1", "Cc1ccccc1");
        assert_eq!(hits.len(), 12);
        let sets: BTreeSet<BTreeSet<usize>> =
            hits.iter().map(|h| h.iter().copied().collect()).collect();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets.iter().next().unwrap().len(), 6);
        let mut sorted = hits.clone();
        sorted.sort();
        assert_eq!(hits, sorted);
    }

    #[test]
    fn bond_constraints_use_parse_time_orders() {
        assert!(m("C=O", "CCO").is_empty());
        assert_eq!(m("C=O", "CC=O").len(), 1);
        assert_eq!(m("C~O", "CCO").len(), 1);
        assert_eq!(m("C#N", "CC#N").len(), 1);
        assert!(m("C-C", "c1ccccc1").is_empty());
        assert!(m("CC", "c1ccccc1").is_empty());
        assert_eq!(m("cc", "c1ccccc1").len(), 12);
        assert_eq!(m("c:c", "c1ccccc1").len(), 12);
        // implicit SMARTS bond accepts a single bond between aromatic and aliphatic atoms
        assert_eq!(m("cO", "Oc1ccccc1").len(), 1);
    }

    #[test]
    fn charge_constraints() {
        assert_eq!(m("[N+](=O)[O-]", "C[N+](=O)[O-]").len(), 1);
        assert!(m("[N+]", "CN").is_empty());
        // bare atoms leave the charge unconstrained
        assert_eq!(m("N", "C[N+](C)(C)C").len(), 1);
    }

    #[test]
    fn query_larger_than_molecule() {
        assert!(m("CCCC", "CC").is_empty());
    }
}
