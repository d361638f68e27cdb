use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn ckgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ckgnn"))
        .args(args)
        .env_remove("CKGNN_SEED")
        .env_remove("CKGNN_DICT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ckgnn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8")
}

fn manifest(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("manifest exists");
    serde_json::from_str(&text).expect("manifest is json")
}

/// A few hundred desk-corpus lines, enough for small batches.
fn small_corpus(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(data("desk_corpus.smi")).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).take(300).collect();
    let path = dir.join("small.smi");
    std::fs::write(&path, body.join("\n") + "\n").unwrap();
    path
}

fn pretrain_small(dir: &Path, corpus: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "pretrain",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--epochs",
        "2",
        "--batch",
        "8",
        "--embed-dim",
        "16",
        "--layer-dims",
        "16,8",
        "--lr",
        "1e-3",
        "--min-frequency",
        "5",
        "--seed",
        "3",
    ]);
    out
}

#[test]
fn parse_counts_atoms_and_components() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.smi");
    std::fs::write(&corpus, "CCO\nC1CC\n[Na+].[Cl-]\n").unwrap();
    let out = dir.path().join("parsed.tsv");
    ok(&["parse", "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, vec!["0\t3\t2\t1\tCCO", "1\t2\t0\t2\t[Na+].[Cl-]"]);
    let m = manifest(&dir.path().join("parsed.tsv.manifest.json"));
    assert_eq!(m["command"], "parse");
    assert_eq!(m["skipped_molecules"], 1);
}

#[test]
fn fgassign_labels_every_atom() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("c.smi");
    std::fs::write(&corpus, "CC(=O)O\nCCOC(C)=O\n").unwrap();
    let text = ok(&["fgassign", "--corpus", corpus.to_str().unwrap()]);
    assert!(text.contains("carboxyl"), "{text}");
    assert!(text.contains("ester"), "{text}");
    assert!(text.contains("NOTFOUND"), "{text}");
}

#[test]
fn fingerprints_and_knn() {
    let dir = TempDir::new().unwrap();
    let corpus = data("small_molecules.smi");
    let out = dir.path().join("fp.txt");
    ok(&[
        "fp",
        "--corpus",
        corpus.to_str().unwrap(),
        "--fp",
        "circular",
        "--nbits",
        "512",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 50);
    let m = manifest(&dir.path().join("fp.txt.manifest.json"));
    assert_eq!(m["flags"]["fp"]["nbits"], 512);

    let text = ok(&["knn", "--corpus", corpus.to_str().unwrap(), "--query", "CC(=O)O", "--k", "3"]);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].contains("CC(=O)O"), "{text}");
}

#[test]
fn cluster_merges_rare_groups() {
    let text = ok(&[
        "cluster",
        "--corpus",
        data("small_molecules.smi").to_str().unwrap(),
        "--min-frequency",
        "3",
    ]);
    assert!(text.lines().any(|l| l.starts_with("OTHER\t")), "{text}");
}

#[test]
fn pretrain_then_evaluate() {
    let dir = TempDir::new().unwrap();
    let corpus = small_corpus(dir.path());
    let run = pretrain_small(dir.path(), &corpus, "run");
    for f in ["epoch-1.ckpt", "epoch-2.ckpt", "model.ckpt", "train.log", "manifest.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let m = manifest(&run.join("manifest.json"));
    assert_eq!(m["command"], "pretrain");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config_digest"].as_str().unwrap().len(), 16);
    let log = std::fs::read_to_string(run.join("train.log")).unwrap();
    assert!(log.lines().all(|l| l.starts_with('#') || l.split('\t').count() == 4));

    let ckpt = run.join("model.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let corpus = corpus.to_str().unwrap();

    let emb = dir.path().join("emb.txt");
    ok(&["embed", "--corpus", corpus, "--checkpoint", ckpt, "--out", emb.to_str().unwrap()]);
    let text = std::fs::read_to_string(&emb).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 300);
    assert_eq!(rows[0].split('\t').nth(1).unwrap().split(' ').count(), 8);
    let em = manifest(&dir.path().join("emb.txt.manifest.json"));
    assert_eq!(em["config_digest"], m["config_digest"]);

    let text = ok(&["probe", "--corpus", corpus, "--checkpoint", ckpt, "--probe-epochs", "5"]);
    assert!(text.lines().any(|l| l.starts_with("0\t")), "{text}");

    let text = ok(&["simdist", "--corpus", corpus, "--checkpoint", ckpt, "--anchors", "5", "--per-anchor", "20"]);
    assert!(text.contains("variance"), "{text}");

    let text = ok(&["topk", "--corpus", corpus, "--checkpoint", ckpt, "--query", "CCC(=O)O", "--k", "4"]);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let pairs = data("isomer_pairs.tsv");
    let text = ok(&["isomers", "--pairs", pairs.to_str().unwrap(), "--checkpoint", ckpt]);
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn pretrain_is_reproducible_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let corpus = small_corpus(dir.path());
    let a = pretrain_small(dir.path(), &corpus, "a");
    let b = pretrain_small(dir.path(), &corpus, "b");
    for f in ["model.ckpt", "train.log"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    ok(&[
        "pretrain",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out-dir",
        c.to_str().unwrap(),
        "--epochs",
        "2",
        "--batch",
        "8",
        "--embed-dim",
        "16",
        "--layer-dims",
        "16,8",
        "--lr",
        "1e-3",
        "--min-frequency",
        "5",
        "--seed",
        "4",
    ]);
    assert_ne!(std::fs::read(a.join("model.ckpt")).unwrap(), std::fs::read(c.join("model.ckpt")).unwrap());
}

#[test]
fn exit_codes() {
    assert_eq!(ckgnn(&["pretrain"]).status.code(), Some(1));
    assert_eq!(ckgnn(&["bogus"]).status.code(), Some(1));
    let missing = ckgnn(&["parse", "--corpus", "/nonexistent/corpus.smi"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    let bad_tau = ckgnn(&[
        "pretrain",
        "--corpus",
        data("small_molecules.smi").to_str().unwrap(),
        "--tau",
        "0",
    ]);
    assert_eq!(bad_tau.status.code(), Some(1));
    assert!(ckgnn(&["--help"]).status.success());
}

#[test]
fn seed_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p.tsv");
    let status = Command::new(env!("CARGO_BIN_EXE_ckgnn"))
        .args(["parse", "--corpus", data("small_molecules.smi").to_str().unwrap()])
        .arg("--out")
        .arg(&out)
        .env("CKGNN_SEED", "42")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(manifest(&dir.path().join("p.tsv.manifest.json"))["seed"], 42);
}
