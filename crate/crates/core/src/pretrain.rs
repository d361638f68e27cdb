//! Cluster-restricted contrastive pretraining.
//!
//! Each epoch walks the viable clusters round-robin (largest first), drawing
//! batches of `N` members without replacement until every cluster's pool is
//! exhausted. Within a batch every member is an anchor in turn; its positive
//! is the most Dice-similar other member and the remaining `N - 2` are
//! negatives. The batch loss is the mean over anchors of the InfoNCE term on
//! L2-normalised embeddings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Encoder, EncoderError, PreparedMolecule};
use crate::fingerprints::{dice, Fingerprint, FingerprintError, FingerprintKind, FingerprintSpec};
use crate::molgraph::MolecularGraph;
use crate::par;
use crate::patterns::{
    assign_functional_groups, build_clusters, clusters_by_size, FunctionalGroupAssignment,
    FunctionalGroupDictionary, PatternError,
};
use crate::tensor::{AdamState, Tape, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PretrainError {
    #[error("cluster has {size} members, batch needs {batch}")]
    ClusterTooSmall { size: usize, batch: usize },
    #[error("no cluster has at least {0} members")]
    NoViableCluster(usize),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

impl From<TensorError> for PretrainError {
    fn from(e: TensorError) -> Self {
        PretrainError::Encoder(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
    pub fingerprint: FingerprintKind,
    pub min_frequency: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 5,
            lr: 1e-5,
            tau: 0.07,
            fingerprint: FingerprintKind::Path,
            min_frequency: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PretrainError> {
        let bad = |m: &str| Err(PretrainError::InvalidConfig(m.to_string()));
        if self.batch_size < 3 {
            return bad("batch size must be at least 3");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.min_frequency == 0 {
            return bad("min frequency must be at least 1");
        }
        Ok(())
    }
}

/// `n` distinct members drawn uniformly without replacement, in draw order.
pub fn sample_batch(members: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, PretrainError> {
    if members.len() < n {
        return Err(PretrainError::ClusterTooSmall {
            size: members.len(),
            batch: n,
        });
    }
    let mut pool = members.to_vec();
    let (head, _) = pool.partial_shuffle(rng, n);
    Ok(head.to_vec())
}

/// Batch position of the most Dice-similar member other than `anchor`;
/// ties go to the lowest position.
pub fn select_positive(anchor: usize, batch: &[&Fingerprint]) -> Result<usize, PretrainError> {
    let mut best: Option<(usize, f64)> = None;
    for (j, fp) in batch.iter().enumerate() {
        if j == anchor {
            continue;
        }
        let s = dice(batch[anchor], fp)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| PretrainError::InvalidConfig("batch needs at least two members".into()))
}

/// One anchor with its positive and negatives, each a `1 x d` node.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub anchor: Var,
    pub positive: Var,
    pub negatives: Vec<Var>,
    pub tau: f64,
}

/// `-ln( e^{a·p/τ} / (e^{a·p/τ} + Σ e^{a·n_i/τ}) )` over L2-normalised rows.
pub fn info_nce_loss(t: &mut Tape, b: &ContrastiveBatch) -> Result<Var, PretrainError> {
    let d = t.shape(b.anchor).1;
    for &v in std::iter::once(&b.positive).chain(&b.negatives) {
        let (r, c) = t.shape(v);
        if r != 1 || c != d {
            return Err(PretrainError::DimensionMismatch(d, c));
        }
    }
    let mut rows = vec![b.anchor, b.positive];
    rows.extend(&b.negatives);
    let stacked = t.stack_rows(&rows)?;
    let z = t.l2_normalize_rows(stacked);
    let a = t.gather_rows(z, &[0])?;
    let others: Vec<usize> = (1..rows.len()).collect();
    let rest = t.gather_rows(z, &others)?;
    let rest_t = t.transpose(rest);
    let logits = t.matmul(a, rest_t)?;
    let logits = t.scale(logits, 1.0 / b.tau);
    let lse = t.log_sum_exp(logits);
    let pos = t.pick(logits, 0, 0)?;
    Ok(t.sub(lse, pos)?)
}

/// Mean InfoNCE over every batch member as anchor. `embeddings` is `N x d`
/// and `positives[i]` is the positive position for anchor `i`.
pub fn batch_loss(t: &mut Tape, embeddings: Var, positives: &[usize], tau: f64) -> Result<Var, PretrainError> {
    let n = t.shape(embeddings).0;
    if positives.len() != n || n < 3 {
        return Err(PretrainError::InvalidConfig(format!(
            "{} positives for a batch of {n}",
            positives.len()
        )));
    }
    let z = t.l2_normalize_rows(embeddings);
    let zt = t.transpose(z);
    let sims = t.matmul(z, zt)?;
    let sims = t.scale(sims, 1.0 / tau);
    let sims_t = t.transpose(sims);
    let mut terms = Vec::with_capacity(n);
    for (i, &p) in positives.iter().enumerate() {
        if p == i || p >= n {
            return Err(PretrainError::InvalidConfig(format!("anchor {i} has positive {p}")));
        }
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let col = t.gather_rows(sims_t, &[i])?;
        let col = t.transpose(col);
        let logits = t.gather_rows(col, &others)?;
        let lse = t.log_sum_exp(logits);
        let pos = t.pick(sims, i, p)?;
        terms.push(t.sub(lse, pos)?);
    }
    let stacked = t.stack_rows(&terms)?;
    Ok(t.mean_rows(stacked)?)
}

/// Per-molecule precomputation shared by training and evaluation.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub assignments: Vec<FunctionalGroupAssignment>,
    pub fingerprints: Vec<Fingerprint>,
    pub clusters: BTreeMap<String, Vec<usize>>,
}

impl TrainingSet {
    pub fn build(
        graphs: &[MolecularGraph],
        dict: &FunctionalGroupDictionary,
        cfg: &TrainConfig,
    ) -> Result<Self, PretrainError> {
        let assignments = par::map(graphs, |g| assign_functional_groups(g, dict));
        let fingerprints = FingerprintSpec::new(cfg.fingerprint).compute_all(graphs, dict)?;
        let clusters = build_clusters(&assignments, cfg.min_frequency)?;
        Ok(Self {
            assignments,
            fingerprints,
            clusters,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub epoch: usize,
    pub cluster: String,
    pub batch: usize,
    pub loss: f64,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<BatchRecord>,
    pub skipped_clusters: Vec<(String, usize)>,
}

impl TrainingLog {
    /// `epoch<TAB>cluster<TAB>batch<TAB>loss` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            writeln!(out, "{}\t{}\t{}\t{}", r.epoch, r.cluster, r.batch, r.loss).expect("string write");
        }
        out
    }

    pub fn mean_loss(&self, epoch: usize) -> Option<f64> {
        let losses: Vec<f64> = self.records.iter().filter(|r| r.epoch == epoch).map(|r| r.loss).collect();
        (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64)
    }
}

/// Trains `encoder` in place. `on_epoch` runs after each epoch with the
/// 1-based epoch number.
pub fn train(
    encoder: &mut Encoder,
    graphs: &[MolecularGraph],
    set: &TrainingSet,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, &Encoder) -> Result<(), PretrainError>,
) -> Result<TrainingLog, PretrainError> {
    cfg.validate()?;
    let n = cfg.batch_size;
    let mut log = TrainingLog::default();
    let mut viable: Vec<(&str, &[usize])> = Vec::new();
    for (name, members) in clusters_by_size(&set.clusters) {
        if members.len() >= n {
            viable.push((name, members));
        } else {
            log::warn!("skipping cluster {name}: {} members < batch size {n}", members.len());
            log.skipped_clusters.push((name.to_string(), members.len()));
        }
    }
    if viable.is_empty() {
        return Err(PretrainError::NoViableCluster(n));
    }
    let prepared: Vec<PreparedMolecule> = par::map_indexed(graphs, |i, g| encoder.prepare(g, &set.assignments[i]))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.lr);
    for epoch in 1..=cfg.epochs {
        let mut pools: Vec<Vec<usize>> = viable.iter().map(|(_, m)| m.to_vec()).collect();
        let mut batch_no = 0;
        loop {
            let mut progressed = false;
            for (c, (name, _)) in viable.iter().enumerate() {
                if pools[c].len() < n {
                    continue;
                }
                let members = sample_batch(&pools[c], n, &mut rng)?;
                let drawn: BTreeSet<usize> = members.iter().copied().collect();
                pools[c].retain(|m| !drawn.contains(m));
                let loss = step(encoder, &mut adam, &prepared, &set.fingerprints, &members, cfg.tau)?;
                log::debug!("epoch {epoch} cluster {name} batch {batch_no} loss {loss}");
                log.records.push(BatchRecord {
                    epoch,
                    cluster: name.to_string(),
                    batch: batch_no,
                    loss,
                    members,
                });
                batch_no += 1;
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        if let Some(mean) = log.mean_loss(epoch) {
            log::info!("epoch {epoch}: {batch_no} batches, mean loss {mean:.6}");
        }
        on_epoch(epoch, encoder)?;
    }
    Ok(log)
}

/// Positive position for every anchor of a batch.
pub fn batch_positives(fps: &[&Fingerprint]) -> Result<Vec<usize>, PretrainError> {
    (0..fps.len()).map(|i| select_positive(i, fps)).collect()
}

fn step(
    encoder: &mut Encoder,
    adam: &mut AdamState,
    prepared: &[PreparedMolecule],
    fingerprints: &[Fingerprint],
    members: &[usize],
    tau: f64,
) -> Result<f64, PretrainError> {
    let fps: Vec<&Fingerprint> = members.iter().map(|&m| &fingerprints[m]).collect();
    let positives = batch_positives(&fps)?;
    let mols: Vec<&PreparedMolecule> = members.iter().map(|&m| &prepared[m]).collect();
    let mut t = Tape::new();
    let h = encoder.forward(&mut t, &mols)?;
    let loss = batch_loss(&mut t, h, &positives, tau)?;
    t.backward_into(loss, &mut encoder.params)?;
    adam.step(&mut encoder.params);
    Ok(t.scalar(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, GnnVariant};
    use crate::molgraph::parse_smiles;
    use crate::tensor::ParameterSet;

    fn fp(positions: &[usize]) -> Fingerprint {
        Fingerprint::from_positions(FingerprintKind::Path, 64, positions.iter().copied()).unwrap()
    }

    #[test]
    fn sampling_contract() {
        let members: Vec<usize> = (10..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut all = sample_batch(&members, 10, &mut rng).unwrap();
        all.sort_unstable();
        assert_eq!(all, members);
        assert_eq!(
            sample_batch(&members[..9], 10, &mut rng).unwrap_err(),
            PretrainError::ClusterTooSmall { size: 9, batch: 10 }
        );
        let a = sample_batch(&members, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_batch(&members, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<BTreeSet<_>>().len(), 4);
    }

    #[test]
    fn positive_selection() {
        let anchor = fp(&[1, 2, 3, 4]);
        let dup = fp(&[1, 2, 3, 4]);
        let other = fp(&[9]);
        assert_eq!(select_positive(0, &[&anchor, &other, &dup]).unwrap(), 2);
        let same = fp(&[7]);
        assert_eq!(select_positive(2, &[&same, &same, &anchor, &same]).unwrap(), 0);
        // Dice 0.3, 0.8, 0.5 against a 10-bit anchor
        let a: Vec<usize> = (0..10).collect();
        let a = fp(&a);
        let c1 = fp(&[0, 1, 2, 20, 21, 22, 23, 24, 25, 26]);
        let c2 = fp(&[0, 1, 2, 3, 4, 5, 6, 7, 30, 31]);
        let c3 = fp(&[0, 1, 2, 3, 4, 40, 41, 42, 43, 44]);
        assert_eq!(select_positive(0, &[&a, &c1, &c2, &c3]).unwrap(), 2);
    }

    fn rows(t: &mut Tape, vs: &[&[f64]]) -> Vec<Var> {
        vs.iter().map(|v| t.input(1, v.len(), v.to_vec(), true).unwrap()).collect()
    }

    #[test]
    fn loss_closed_forms() {
        for n in [3usize, 8, 32] {
            let mut t = Tape::new();
            let v = rows(&mut t, &vec![&[0.3, -0.4][..]; n]);
            let b = ContrastiveBatch {
                anchor: v[0],
                positive: v[1],
                negatives: v[2..].to_vec(),
                tau: 0.07,
            };
            let l = info_nce_loss(&mut t, &b).unwrap();
            assert!((t.scalar(l) - ((n - 1) as f64).ln()).abs() < 1e-9);
        }
        let mut t = Tape::new();
        let v = rows(&mut t, &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let b = ContrastiveBatch {
            anchor: v[0],
            positive: v[1],
            negatives: vec![v[2]],
            tau: 1.0,
        };
        let l = info_nce_loss(&mut t, &b).unwrap();
        assert!((t.scalar(l) - (1.0 + (-1f64).exp()).ln()).abs() < 1e-9);
    }

    #[test]
    fn loss_vanishes_at_low_temperature() {
        let mut last = f64::INFINITY;
        for tau in [1.0, 0.5, 0.1, 0.05] {
            let mut t = Tape::new();
            let v = rows(&mut t, &[&[1.0, 0.0], &[0.9, 0.1], &[0.0, 1.0], &[-1.0, 0.0]]);
            let b = ContrastiveBatch {
                anchor: v[0],
                positive: v[1],
                negatives: v[2..].to_vec(),
                tau,
            };
            let l = info_nce_loss(&mut t, &b).unwrap();
            let l = t.scalar(l);
            assert!(l > 0.0 && l < last);
            last = l;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn dimension_mismatch() {
        let mut t = Tape::new();
        let v = rows(&mut t, &[&[1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 1.0]]);
        let b = ContrastiveBatch {
            anchor: v[0],
            positive: v[1],
            negatives: vec![v[2]],
            tau: 1.0,
        };
        assert_eq!(info_nce_loss(&mut t, &b).unwrap_err(), PretrainError::DimensionMismatch(2, 3));
    }

    #[test]
    fn batch_loss_is_mean_of_anchor_losses() {
        let vals: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..3).map(|j| ((i * 3 + j) as f64 * 0.7).sin()).collect())
            .collect();
        let positives = [2, 0, 4, 1, 3];
        let mut t = Tape::new();
        let flat: Vec<f64> = vals.concat();
        let h = t.input(5, 3, flat, true).unwrap();
        let l = batch_loss(&mut t, h, &positives, 0.5).unwrap();
        let mut expect = 0.0;
        for (i, &p) in positives.iter().enumerate() {
            let mut t2 = Tape::new();
            let v: Vec<Var> = vals.iter().map(|r| t2.input(1, 3, r.clone(), false).unwrap()).collect();
            let negs = (0..5).filter(|&j| j != i && j != p).map(|j| v[j]).collect();
            let b = ContrastiveBatch {
                anchor: v[i],
                positive: v[p],
                negatives: negs,
                tau: 0.5,
            };
            let li = info_nce_loss(&mut t2, &b).unwrap();
            expect += t2.scalar(li) / 5.0;
        }
        assert!((t.scalar(l) - expect).abs() < 1e-12);
    }

    /// Toy linear encoder `H = X W`; one SGD step widens the positive margin.
    #[test]
    fn one_step_widens_the_margin() {
        let x = [1.0, 0.2, 0.0, 0.9, 0.3, 0.1, 0.0, 1.0, 0.2, 0.1, 0.1, 1.0];
        let margin = |w: &[f64]| {
            let mut t = Tape::new();
            let xv = t.input(4, 3, x.to_vec(), false).unwrap();
            let wv = t.input(3, 3, w.to_vec(), true).unwrap();
            let h = t.matmul(xv, wv).unwrap();
            let z = t.l2_normalize_rows(h);
            let v = t.value(z).to_vec();
            let d = |a: usize, b: usize| (0..3).map(|k| v[a * 3 + k] * v[b * 3 + k]).sum::<f64>();
            d(0, 1) - d(0, 2).max(d(0, 3))
        };
        let w0 = vec![1.0, 0.1, 0.0, 0.2, 1.0, 0.3, 0.0, 0.1, 1.0];
        let mut t = Tape::new();
        let xv = t.input(4, 3, x.to_vec(), false).unwrap();
        let wv = t.input(3, 3, w0.clone(), true).unwrap();
        let h = t.matmul(xv, wv).unwrap();
        let anchor = t.gather_rows(h, &[0]).unwrap();
        let pos = t.gather_rows(h, &[1]).unwrap();
        let n2 = t.gather_rows(h, &[2]).unwrap();
        let n3 = t.gather_rows(h, &[3]).unwrap();
        let b = ContrastiveBatch {
            anchor,
            positive: pos,
            negatives: vec![n2, n3],
            tau: 0.5,
        };
        let l = info_nce_loss(&mut t, &b).unwrap();
        let g = t.backward(l).unwrap();
        let w1: Vec<f64> = w0.iter().zip(g.get(wv).unwrap()).map(|(w, g)| w - 1e-3 * g).collect();
        assert!(margin(&w1) > margin(&w0));
    }

    fn toy_corpus() -> (Vec<MolecularGraph>, FunctionalGroupDictionary) {
        let mut smiles = Vec::new();
        for i in 1..=12 {
            smiles.push(format!("{}C(=O)O", "C".repeat(i)));
            smiles.push(format!("{}C(=O)N", "C".repeat(i)));
        }
        let graphs = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
        (graphs, FunctionalGroupDictionary::builtin())
    }

    fn toy_encoder(graphs: &[MolecularGraph], dict: &FunctionalGroupDictionary) -> Encoder {
        let cfg = EncoderConfig::for_corpus(GnnVariant::Gcn, 8, vec![8, 6], graphs, dict).unwrap();
        Encoder::new(cfg, 7)
    }

    fn toy_train_config() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            epochs: 2,
            lr: 1e-3,
            min_frequency: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_and_cluster_pure() {
        let (graphs, dict) = toy_corpus();
        let cfg = toy_train_config();
        let set = TrainingSet::build(&graphs, &dict, &cfg).unwrap();
        assert_eq!(set.clusters.len(), 2);
        let run = || {
            let mut enc = toy_encoder(&graphs, &dict);
            let mut epochs = Vec::new();
            let log = train(&mut enc, &graphs, &set, &cfg, &mut |e, _| {
                epochs.push(e);
                Ok(())
            })
            .unwrap();
            (enc, log, epochs)
        };
        let (a, la, epochs) = run();
        let (b, lb, _) = run();
        assert_eq!(epochs, vec![1, 2]);
        assert_eq!(a.params.checksum(), b.params.checksum());
        assert_eq!(la.to_tsv(), lb.to_tsv());
        // 12 per cluster, batch 4: 3 batches per cluster per epoch
        assert_eq!(la.records.len(), 12);
        for r in &la.records {
            let members = &set.clusters[&r.cluster];
            assert!(r.members.iter().all(|m| members.contains(m)));
            assert!(r.loss > 0.0);
        }
        let fresh = toy_encoder(&graphs, &dict);
        assert_ne!(fresh.params.checksum(), a.params.checksum());
        let frozen = a.params.get(crate::encoder::FG_EMBEDDING).unwrap();
        assert!(frozen.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_viable_cluster() {
        let (graphs, dict) = toy_corpus();
        let cfg = TrainConfig {
            batch_size: 13,
            ..toy_train_config()
        };
        let set = TrainingSet::build(&graphs, &dict, &cfg).unwrap();
        let mut enc = toy_encoder(&graphs, &dict);
        let err = train(&mut enc, &graphs, &set, &cfg, &mut |_, _| Ok(())).unwrap_err();
        assert_eq!(err, PretrainError::NoViableCluster(13));
    }

    #[test]
    fn fg_embeddings_receive_gradient() {
        let (graphs, dict) = toy_corpus();
        let enc = toy_encoder(&graphs, &dict);
        let set = TrainingSet::build(&graphs, &dict, &toy_train_config()).unwrap();
        let members = [0usize, 1, 2, 3];
        let prepared: Vec<PreparedMolecule> =
            members.iter().map(|&m| enc.prepare(&graphs[m], &set.assignments[m]).unwrap()).collect();
        let refs: Vec<&PreparedMolecule> = prepared.iter().collect();
        let fps: Vec<&Fingerprint> = members.iter().map(|&m| &set.fingerprints[m]).collect();
        let mut params: ParameterSet = enc.params.clone();
        let mut t = Tape::new();
        let h = enc.forward(&mut t, &refs).unwrap();
        let l = batch_loss(&mut t, h, &batch_positives(&fps).unwrap(), 0.07).unwrap();
        t.backward_into(l, &mut params).unwrap();
        let g = params.get(crate::encoder::FG_EMBEDDING).unwrap();
        let carboxyl = enc.config.fg_index(Some("carboxyl"));
        let cols = g.cols();
        let row = &g.grad().unwrap()[carboxyl * cols..(carboxyl + 1) * cols];
        assert!(row.iter().any(|&v| v != 0.0));
        assert!(g.grad().unwrap()[..cols].iter().all(|&v| v == 0.0));
    }
}
