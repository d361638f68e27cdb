//! Functional-group dictionary, largest-first assignment and clustering.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use super::matcher::match_pattern;
use super::smarts::{parse_smarts, QueryGraph};
use super::PatternError;
use crate::molgraph::MolecularGraph;

/// Label for atoms (and molecules) without a matched group.
pub const NOT_FOUND: &str = "NOTFOUND";
/// Cluster that collects every group below the frequency threshold.
pub const OTHER_CLUSTER: &str = "OTHER";

const BUILTIN_DICTIONARY: &str = include_str!("../../data/functional_groups.tsv");

#[derive(Debug, Clone)]
pub struct GroupEntry {
    pub name: Arc<str>,
    pub pattern: QueryGraph,
    pub atom_count: usize,
}

/// Named SMARTS patterns. Iteration through [`Self::matching_order`] is by
/// atom count descending, ties by insertion order.
#[derive(Debug, Clone)]
pub struct FunctionalGroupDictionary {
    entries: Vec<GroupEntry>,
    matching_order: Vec<usize>,
}

impl FunctionalGroupDictionary {
    pub fn new(entries: Vec<(String, QueryGraph)>) -> Result<Self, PatternError> {
        if entries.is_empty() {
            return Err(PatternError::EmptyDictionary);
        }
        let mut names = HashSet::new();
        let mut out = Vec::with_capacity(entries.len());
        for (name, pattern) in entries {
            if name == NOT_FOUND || !names.insert(name.clone()) {
                return Err(PatternError::DuplicateName(name));
            }
            out.push(GroupEntry {
                name: name.into(),
                atom_count: pattern.atom_count(),
                pattern,
            });
        }
        let mut matching_order: Vec<usize> = (0..out.len()).collect();
        matching_order.sort_by_key(|&i| (std::cmp::Reverse(out[i].atom_count), i));
        Ok(Self {
            entries: out,
            matching_order,
        })
    }

    /// Parses `name<TAB>SMARTS` lines; blank lines and `#` comments are skipped.
    pub fn from_tsv(text: &str) -> Result<Self, PatternError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, smarts) = line
                .split_once('\t')
                .ok_or_else(|| PatternError::BadDictionaryLine(lineno + 1, line.to_string()))?;
            let pattern = parse_smarts(smarts.trim()).map_err(|source| PatternError::Smarts {
                line: lineno + 1,
                source,
            })?;
            entries.push((name.trim().to_string(), pattern));
        }
        Self::new(entries)
    }

    pub fn from_file(path: &Path) -> Result<Self, PatternError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PatternError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_tsv(&text)
    }

    /// The dictionary shipped in `data/functional_groups.tsv`.
    pub fn builtin() -> Self {
        Self::from_tsv(BUILTIN_DICTIONARY).expect("built-in dictionary is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[GroupEntry] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| &*e.name)
    }

    pub fn get(&self, name: &str) -> Option<&GroupEntry> {
        self.entries.iter().find(|e| &*e.name == name)
    }

    pub fn matching_order(&self) -> impl Iterator<Item = &GroupEntry> {
        self.matching_order.iter().map(|&i| &self.entries[i])
    }
}

/// Per-atom group labels plus the biggest group present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionalGroupAssignment {
    labels: Vec<Option<Arc<str>>>,
    largest_group: Option<Arc<str>>,
    largest_size: usize,
}

impl FunctionalGroupAssignment {
    /// Builds an assignment from explicit labels. `sizes` gives each group's
    /// pattern atom count; the first group with the maximal count wins.
    pub fn from_labels(labels: Vec<Option<Arc<str>>>, sizes: &dyn Fn(&str) -> usize) -> Self {
        let mut largest: Option<(Arc<str>, usize)> = None;
        for name in labels.iter().flatten() {
            let size = sizes(name);
            if largest.as_ref().is_none_or(|(_, s)| size > *s) {
                largest = Some((name.clone(), size));
            }
        }
        let (largest_group, largest_size) = match largest {
            Some((n, s)) => (Some(n), s),
            None => (None, 0),
        };
        Self {
            labels,
            largest_group,
            largest_size,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.labels.len()
    }

    /// Group name for atom `i`, or `None` for NOTFOUND.
    pub fn group(&self, i: usize) -> Option<&str> {
        self.labels[i].as_deref()
    }

    /// Group name for atom `i` with NOTFOUND spelled out.
    pub fn label(&self, i: usize) -> &str {
        self.group(i).unwrap_or(NOT_FOUND)
    }

    pub fn labels(&self) -> &[Option<Arc<str>>] {
        &self.labels
    }

    pub fn largest_group(&self) -> Option<&str> {
        self.largest_group.as_deref()
    }

    pub fn largest_group_size(&self) -> usize {
        self.largest_size
    }

    /// Re-orders labels to follow an atom relabelling (`perm[old] = new`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut labels = vec![None; self.labels.len()];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.labels[old].clone();
        }
        Self {
            labels,
            ..self.clone()
        }
    }
}

/// Greedy largest-first assignment. Patterns are tried in matching order;
/// each match is accepted only if none of its atoms is claimed yet.
pub fn assign_functional_groups(
    g: &MolecularGraph,
    dict: &FunctionalGroupDictionary,
) -> FunctionalGroupAssignment {
    let n = g.atom_count();
    let mut labels: Vec<Option<Arc<str>>> = vec![None; n];
    let mut largest: Option<(Arc<str>, usize)> = None;
    let mut unclaimed = n;
    for entry in dict.matching_order() {
        if entry.atom_count > unclaimed {
            continue;
        }
        for mapping in match_pattern(&entry.pattern, g) {
            if mapping.iter().any(|&a| labels[a].is_some()) {
                continue;
            }
            for &a in &mapping {
                labels[a] = Some(entry.name.clone());
            }
            unclaimed -= mapping.len();
            if largest.is_none() {
                largest = Some((entry.name.clone(), entry.atom_count));
            }
        }
    }
    let (largest_group, largest_size) = match largest {
        Some((n, s)) => (Some(n), s),
        None => (None, 0),
    };
    FunctionalGroupAssignment {
        labels,
        largest_group,
        largest_size,
    }
}

/// Cluster name of a molecule: its largest group, or NOTFOUND.
pub fn cluster_id(a: &FunctionalGroupAssignment) -> &str {
    a.largest_group().unwrap_or(NOT_FOUND)
}

/// Groups molecules by [`cluster_id`]. Clusters smaller than
/// `min_frequency` are merged into [`OTHER_CLUSTER`]. Member lists are
/// ascending corpus indices.
pub fn build_clusters(
    assignments: &[FunctionalGroupAssignment],
    min_frequency: usize,
) -> Result<BTreeMap<String, Vec<usize>>, PatternError> {
    if assignments.is_empty() {
        return Err(PatternError::EmptyCorpus);
    }
    if min_frequency == 0 {
        return Err(PatternError::InvalidMinFrequency);
    }
    let mut raw: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, a) in assignments.iter().enumerate() {
        raw.entry(cluster_id(a)).or_default().push(i);
    }
    let mut clusters: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut other = Vec::new();
    for (name, members) in raw {
        if members.len() >= min_frequency {
            clusters.insert(name.to_string(), members);
        } else {
            other.extend(members);
        }
    }
    if !other.is_empty() {
        other.sort_unstable();
        clusters.entry(OTHER_CLUSTER.to_string()).or_default().extend(other);
        clusters.get_mut(OTHER_CLUSTER).expect("just inserted").sort_unstable();
    }
    Ok(clusters)
}

/// Clusters ordered by size descending, ties by name.
pub fn clusters_by_size(clusters: &BTreeMap<String, Vec<usize>>) -> Vec<(&str, &[usize])> {
    let mut v: Vec<_> = clusters
        .iter()
        .map(|(k, m)| (k.as_str(), m.as_slice()))
        .collect();
    v.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn dict(entries: &[(&str, &str)]) -> FunctionalGroupDictionary {
        FunctionalGroupDictionary::new(
            entries
                .iter()
                .map(|(n, s)| (n.to_string(), parse_smarts(s).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn builtin_dictionary_loads() {
        let d = FunctionalGroupDictionary::builtin();
        assert!(d.len() >= 30);
        assert!(d.get("carboxyl").is_some());
        let sizes: Vec<_> = d.matching_order().map(|e| e.atom_count).collect();
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn methane_has_no_groups() {
        let d = FunctionalGroupDictionary::builtin();
        let a = assign_functional_groups(&parse_smiles("C").unwrap(), &d);
        assert_eq!(a.label(0), NOT_FOUND);
        assert_eq!(a.largest_group(), None);
        assert_eq!(cluster_id(&a), NOT_FOUND);
    }

    #[test]
    fn acetic_acid_is_carboxyl() {
        for d in [dict(&[("carboxyl", "C(=O)O")]), FunctionalGroupDictionary::builtin()] {
            let a = assign_functional_groups(&parse_smiles("CC(=O)O").unwrap(), &d);
            assert_eq!(a.label(0), NOT_FOUND);
            for i in 1..4 {
                assert_eq!(a.label(i), "carboxyl");
            }
            assert_eq!(a.largest_group(), Some("carboxyl"));
            assert_eq!(cluster_id(&a), "carboxyl");
        }
    }

    #[test]
    fn two_disjoint_carboxyls_are_both_claimed() {
        let d = FunctionalGroupDictionary::builtin();
        let g = parse_smiles("OC(=O)CCC(=O)O").unwrap();
        let a = assign_functional_groups(&g, &d);
        let claimed: Vec<_> = (0..g.atom_count()).filter(|&i| a.label(i) == "carboxyl").collect();
        assert_eq!(claimed, vec![0, 1, 2, 5, 6, 7]);
        assert_eq!(a.label(3), NOT_FOUND);
    }

    #[test]
    fn largest_pattern_claims_first() {
        let d = dict(&[("hydroxyl", "CO"), ("ester", "C(=O)OC")]);
        let g = parse_smiles("CC(=O)OC").unwrap();
        let a = assign_functional_groups(&g, &d);
        assert_eq!(a.largest_group(), Some("ester"));
        assert_eq!(a.label(0), NOT_FOUND);
        assert!((1..5).all(|i| a.label(i) == "ester"));
    }

    #[test]
    fn equal_size_ties_follow_insertion_order() {
        let g = parse_smiles("CC(=O)O").unwrap();
        let a = assign_functional_groups(&g, &dict(&[("first", "CC=O"), ("second", "C(=O)O")]));
        assert_eq!(a.largest_group(), Some("first"));
        assert_eq!(a.label(3), NOT_FOUND);
        let a = assign_functional_groups(&g, &dict(&[("second", "C(=O)O"), ("first", "CC=O")]));
        assert_eq!(a.largest_group(), Some("second"));
        assert_eq!(a.label(0), NOT_FOUND);
    }

    #[test]
    fn cluster_id_picks_max_atom_count() {
        let sizes = |n: &str| match n {
            "amide" => 5,
            "hydroxyl" => 2,
            _ => 0,
        };
        let a = FunctionalGroupAssignment::from_labels(
            vec![Some("hydroxyl".into()), Some("amide".into()), None],
            &sizes,
        );
        assert_eq!(cluster_id(&a), "amide");
        let b = FunctionalGroupAssignment::from_labels(vec![None, None], &sizes);
        assert_eq!(cluster_id(&b), NOT_FOUND);
        let c = FunctionalGroupAssignment::from_labels(vec![Some("carboxyl".into())], &|_| 3);
        assert_eq!(cluster_id(&c), "carboxyl");
    }

    #[test]
    fn clusters_threshold_rule() {
        let d = FunctionalGroupDictionary::builtin();
        let mut smiles = vec!["CC(=O)O"; 6];
        smiles.extend(["CC(=O)N"; 2]);
        smiles.extend(["CCO"; 2]);
        let assignments: Vec<_> = smiles
            .iter()
            .map(|s| assign_functional_groups(&parse_smiles(s).unwrap(), &d))
            .collect();
        let c = build_clusters(&assignments, 3).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c["carboxyl"].len(), 6);
        assert_eq!(c[OTHER_CLUSTER], vec![6, 7, 8, 9]);

        let all: Vec<_> = assignments[..6].to_vec();
        let c = build_clusters(&all, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c["carboxyl"].len(), 6);
    }

    #[test]
    fn cluster_errors() {
        assert_eq!(build_clusters(&[], 1), Err(PatternError::EmptyCorpus));
        let a = FunctionalGroupAssignment::from_labels(vec![None], &|_| 0);
        assert_eq!(build_clusters(&[a], 0), Err(PatternError::InvalidMinFrequency));
    }

    #[test]
    fn dictionary_errors() {
        assert!(matches!(
            FunctionalGroupDictionary::from_tsv("a\tC\na\tO\n"),
            Err(PatternError::DuplicateName(_))
        ));
        assert!(matches!(
            FunctionalGroupDictionary::from_tsv("# nothing\n"),
            Err(PatternError::EmptyDictionary)
        ));
        assert!(matches!(
            FunctionalGroupDictionary::from_tsv("bad line\n"),
            Err(PatternError::BadDictionaryLine(1, _))
        ));
        assert!(matches!(
            FunctionalGroupDictionary::from_tsv("x\t[C;R]\n"),
            Err(PatternError::Smarts { line: 1, .. })
        ));
    }
}
