//! Evaluation of frozen embeddings.

use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{cosine, Encoder, EncoderError};
use crate::molgraph::{parse_smiles, ParseError};
use crate::patterns::{assign_functional_groups, FunctionalGroupDictionary};
use crate::tensor::{AdamState, ParameterSet, Tape, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("{0} labels for {1} items")]
    LabelCount(usize, usize),
    #[error("corpus has {have} molecules, need {need}")]
    CorpusTooSmall { need: usize, have: usize },
    #[error("embeddings have inconsistent dimensions")]
    Ragged,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from the rank sum with average ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LabelCount(labels.len(), scores.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps average ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the average (i + j + 2) / 2
        let twice_avg = (i + j + 2) as u128;
        for &k in &order[i..=j] {
            if labels[k] {
                twice_rank_sum += twice_avg;
            }
        }
        i = j + 1;
    }
    let p = pos as u128;
    // 2U = 2R - P(P+1)
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128],
            lr: 1e-3,
            epochs: 100,
            batch_size: 32,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Seeded shuffle split into `(train, test)` index lists.
pub fn split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * train_fraction).round() as usize;
    let test = idx.split_off(cut.min(n));
    (idx, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub roc_auc: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub final_loss: f64,
}

fn check_dims(embeddings: &[Vec<f64>]) -> Result<usize, EvalError> {
    let d = embeddings.first().map_or(0, Vec::len);
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(EvalError::Ragged);
    }
    Ok(d)
}

/// MLP with ReLU hidden layers and a logistic output.
struct Probe {
    params: ParameterSet,
    layers: usize,
}

impl Probe {
    fn new(input: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParameterSet::new();
        let mut fan_in = input;
        let dims: Vec<usize> = hidden.iter().copied().chain(std::iter::once(1)).collect();
        for (l, &out) in dims.iter().enumerate() {
            let mut w = Tensor::randn(fan_in, out, 1.0 / (fan_in as f64).sqrt(), rng);
            w.set_requires_grad(true);
            let mut b = Tensor::zeros(vec![1, out]);
            b.set_requires_grad(true);
            params.insert(format!("probe{l}.weight"), w);
            params.insert(format!("probe{l}.bias"), b);
            fan_in = out;
        }
        Self {
            params,
            layers: dims.len(),
        }
    }

    fn logits(&self, t: &mut Tape, x: &[f64], rows: usize, cols: usize) -> Result<crate::tensor::Var, TensorError> {
        let mut h = t.input(rows, cols, x.to_vec(), false)?;
        for l in 0..self.layers {
            let w = t.param(&format!("probe{l}.weight"), self.params.get(&format!("probe{l}.weight"))?);
            let b = t.param(&format!("probe{l}.bias"), self.params.get(&format!("probe{l}.bias"))?);
            h = t.matmul(h, w)?;
            h = t.add_row(h, b)?;
            if l + 1 < self.layers {
                h = t.relu(h);
            }
        }
        Ok(h)
    }
}

fn gather(embeddings: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    idx.iter().flat_map(|&i| embeddings[i].iter().copied()).collect()
}

/// Trains a probe on the train split of frozen `embeddings` and reports
/// ROC-AUC on the held-out split.
pub fn probe_train_eval(embeddings: &[Vec<f64>], labels: &[bool], cfg: &ProbeConfig) -> Result<ProbeReport, EvalError> {
    if embeddings.len() != labels.len() {
        return Err(EvalError::LabelCount(labels.len(), embeddings.len()));
    }
    let d = check_dims(embeddings)?;
    let (train, test) = split(embeddings.len(), cfg.train_fraction, cfg.seed);
    let has_both = |idx: &[usize]| idx.iter().any(|&i| labels[i]) && idx.iter().any(|&i| !labels[i]);
    if !has_both(&train) || !has_both(&test) {
        return Err(EvalError::SingleClass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut probe = Probe::new(d, &cfg.hidden, &mut rng);
    let mut adam = AdamState::new(cfg.lr);
    let mut order = train.clone();
    let mut final_loss = f64::NAN;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let x = gather(embeddings, chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| f64::from(u8::from(labels[i]))).collect();
            let mut t = Tape::new();
            let z = probe.logits(&mut t, &x, chunk.len(), d)?;
            let loss = t.bce_with_logits(z, &y)?;
            t.backward_into(loss, &mut probe.params)?;
            adam.step(&mut probe.params);
            total += t.scalar(loss) * chunk.len() as f64;
        }
        final_loss = total / order.len() as f64;
    }
    let mut t = Tape::new();
    let z = probe.logits(&mut t, &gather(embeddings, &test), test.len(), d)?;
    let scores = t.value(z).to_vec();
    let test_labels: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
    Ok(ProbeReport {
        roc_auc: roc_auc(&scores, &test_labels)?,
        train_size: train.len(),
        test_size: test.len(),
        final_loss,
    })
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityStats {
    pub mean: f64,
    pub variance: f64,
    /// Counts over 20 equal bins of `[-1, 1]`; 1.0 falls in the last bin.
    pub histogram: Vec<usize>,
    pub pairs: usize,
}

impl SimilarityStats {
    pub fn bin_edges(i: usize) -> (f64, f64) {
        let w = 2.0 / HISTOGRAM_BINS as f64;
        (-1.0 + w * i as f64, -1.0 + w * (i + 1) as f64)
    }

    /// `bin_low<TAB>bin_high<TAB>count` lines.
    pub fn histogram_tsv(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.histogram.iter().enumerate() {
            let (lo, hi) = Self::bin_edges(i);
            writeln!(out, "{lo:.2}\t{hi:.2}\t{c}").expect("string write");
        }
        out
    }
}

/// Cosine statistics over `n_anchors` random anchors, each paired with
/// `per_anchor` distinct random non-anchors. Variance is the population
/// variance.
pub fn similarity_distribution(
    embeddings: &[Vec<f64>],
    n_anchors: usize,
    per_anchor: usize,
    seed: u64,
) -> Result<SimilarityStats, EvalError> {
    let need = n_anchors + per_anchor;
    if embeddings.len() < need || n_anchors == 0 || per_anchor == 0 {
        return Err(EvalError::CorpusTooSmall {
            need,
            have: embeddings.len(),
        });
    }
    check_dims(embeddings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..embeddings.len()).collect();
    order.shuffle(&mut rng);
    let (anchors, rest) = order.split_at(n_anchors);
    let mut sims = Vec::with_capacity(n_anchors * per_anchor);
    for &a in anchors {
        for j in index::sample(&mut rng, rest.len(), per_anchor) {
            sims.push(cosine(&embeddings[a], &embeddings[rest[j]]));
        }
    }
    let n = sims.len() as f64;
    let mean = sims.iter().sum::<f64>() / n;
    let variance = sims.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for s in &sims {
        let bin = (((s + 1.0) / 2.0) * HISTOGRAM_BINS as f64).floor() as usize;
        histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    Ok(SimilarityStats {
        mean,
        variance,
        histogram,
        pairs: sims.len(),
    })
}

/// The `k` embeddings most cosine-similar to `anchor`, descending, ties by
/// ascending index.
pub fn top_k_similar(anchor: &[f64], embeddings: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| (i, cosine(anchor, e)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsomerRow {
    pub left: String,
    pub right: String,
    pub trained: f64,
    pub random: f64,
}

/// Embeds one SMILES string.
pub fn embed_smiles(enc: &Encoder, smiles: &str, dict: &FunctionalGroupDictionary) -> Result<Vec<f64>, EvalError> {
    let g = parse_smiles(smiles)?;
    let a = assign_functional_groups(&g, dict);
    Ok(enc.encode(&enc.prepare(&g, &a)?)?)
}

/// Pair cosines under a trained and a randomly initialised encoder.
pub fn isomer_report(
    pairs: &[(String, String)],
    trained: &Encoder,
    random: &Encoder,
    dict: &FunctionalGroupDictionary,
) -> Result<Vec<IsomerRow>, EvalError> {
    pairs
        .iter()
        .map(|(l, r)| {
            let pair_cos = |enc: &Encoder| -> Result<f64, EvalError> {
                Ok(cosine(&embed_smiles(enc, l, dict)?, &embed_smiles(enc, r, dict)?))
            };
            Ok(IsomerRow {
                left: l.clone(),
                right: r.clone(),
                trained: pair_cos(trained)?,
                random: pair_cos(random)?,
            })
        })
        .collect()
}
