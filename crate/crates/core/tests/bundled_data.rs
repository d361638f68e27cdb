use std::path::{Path, PathBuf};

use ckgnn::corpus::{parse_pairs, read_text, Corpus};
use ckgnn::patterns::{assign_functional_groups, build_clusters, FunctionalGroupDictionary};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn every_parse_corpus_line_parses() {
    let c = Corpus::read(&data("parse_corpus.smi")).unwrap();
    assert!(c.skipped.is_empty(), "{:?}", c.skipped);
    assert_eq!(c.len(), 200);
    assert!(c.graphs.iter().any(|g| g.component_count() > 1));
    assert!(c.graphs.iter().any(|g| g.atoms().iter().any(|a| a.aromatic)));
    assert!(c.graphs.iter().any(|g| g.atoms().iter().any(|a| a.formal_charge != 0)));
}

#[test]
fn desk_corpus_has_enough_large_clusters() {
    let dict = FunctionalGroupDictionary::builtin();
    let c = Corpus::read(&data("desk_corpus.smi")).unwrap();
    assert!(c.skipped.is_empty());
    assert!((1800..=2200).contains(&c.len()));
    let a: Vec<_> = c.graphs.iter().map(|g| assign_functional_groups(g, &dict)).collect();
    let clusters = build_clusters(&a, 20).unwrap();
    assert!(clusters.values().filter(|m| m.len() >= 32).count() >= 4);
}

#[test]
fn isomer_pairs_share_heavy_atom_counts() {
    let pairs = parse_pairs(&read_text(&data("isomer_pairs.tsv")).unwrap()).unwrap();
    assert_eq!(pairs.len(), 5);
    for (l, r) in pairs {
        let count = |s: &str| {
            let g = ckgnn::parse_smiles(s).unwrap();
            let mut z: Vec<u8> = g.atoms().iter().map(|a| a.element).collect();
            z.sort_unstable();
            z
        };
        assert_eq!(count(&l), count(&r), "{l} / {r}");
    }
}

#[test]
fn dictionary_file_matches_builtin() {
    let file = FunctionalGroupDictionary::from_file(&data("functional_groups.tsv")).unwrap();
    let builtin = FunctionalGroupDictionary::builtin();
    assert_eq!(file.names().collect::<Vec<_>>(), builtin.names().collect::<Vec<_>>());
}
