//! Knowledge-aware graph encoder.
//!
//! Node features are `[E_atom[element] , E_fg[group]]`; two message-passing
//! layers (GCN, GIN or GraphSAGE) follow, then a mean readout. ReLU follows
//! the first layer only, so graph embeddings can carry either sign.
//!
//! Every variant is linear in its input before its first nonlinearity, so the
//! first layer projects the two embedding tables through the matching halves
//! of its weight and gathers rows, instead of materialising the
//! `n x 2*embed_dim` feature matrix. [`initial_node_features`] and
//! [`gnn_layer`] evaluate the same map the dense way.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::fnv1a;
use crate::molgraph::MolecularGraph;
use crate::par;
use crate::patterns::{FunctionalGroupAssignment, FunctionalGroupDictionary, NOT_FOUND};
use crate::tensor::{Checkpoint, ParameterSet, SparseMatrix, Tape, Tensor, TensorError, Var};

pub const ATOM_EMBEDDING: &str = "atom_embedding";
pub const FG_EMBEDDING: &str = "fg_embedding";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("molecule has no atoms")]
    EmptyGraph,
    #[error("assignment covers {assigned} atoms, graph has {atoms}")]
    AssignmentMismatch { assigned: usize, atoms: usize },
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnVariant {
    Gcn,
    Gin,
    Sage,
}

impl GnnVariant {
    pub const ALL: [GnnVariant; 3] = [GnnVariant::Gcn, GnnVariant::Gin, GnnVariant::Sage];
}

impl fmt::Display for GnnVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GnnVariant::Gcn => "gcn",
            GnnVariant::Gin => "gin",
            GnnVariant::Sage => "sage",
        })
    }
}

impl FromStr for GnnVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(GnnVariant::Gcn),
            "gin" => Ok(GnnVariant::Gin),
            "sage" | "graphsage" => Ok(GnnVariant::Sage),
            other => Err(format!("unknown GNN variant '{other}' (gcn, gin, sage)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: GnnVariant,
    pub embed_dim: usize,
    pub layer_dims: Vec<usize>,
    /// Sorted atomic numbers; row `atom_vocab.len()` of the table is OTHER.
    pub atom_vocab: Vec<u8>,
    /// Row 0 is NOTFOUND.
    pub fg_vocab: Vec<String>,
}

impl EncoderConfig {
    pub fn new(
        variant: GnnVariant,
        embed_dim: usize,
        layer_dims: Vec<usize>,
        mut atom_vocab: Vec<u8>,
        fg_names: impl IntoIterator<Item = String>,
    ) -> Result<Self, EncoderError> {
        atom_vocab.sort_unstable();
        atom_vocab.dedup();
        let mut fg_vocab = vec![NOT_FOUND.to_string()];
        fg_vocab.extend(fg_names.into_iter().filter(|n| n != NOT_FOUND));
        let cfg = Self {
            variant,
            embed_dim,
            layer_dims,
            atom_vocab,
            fg_vocab,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Vocabularies taken from the elements present in `graphs` and the
    /// dictionary's group names.
    pub fn for_corpus(
        variant: GnnVariant,
        embed_dim: usize,
        layer_dims: Vec<usize>,
        graphs: &[MolecularGraph],
        dict: &FunctionalGroupDictionary,
    ) -> Result<Self, EncoderError> {
        let atoms = graphs
            .iter()
            .flat_map(|g| g.atoms().iter().map(|a| a.element))
            .collect();
        Self::new(variant, embed_dim, layer_dims, atoms, dict.names().map(str::to_string))
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: &str| Err(EncoderError::InvalidConfig(m.to_string()));
        if self.layer_dims.len() != 2 {
            return bad("exactly two layers are supported");
        }
        if self.embed_dim == 0 || self.layer_dims.contains(&0) {
            return bad("dimensions must be positive");
        }
        if self.fg_vocab.first().map(String::as_str) != Some(NOT_FOUND) {
            return bad("fg vocabulary must start with NOTFOUND");
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    pub fn atom_index(&self, element: u8) -> usize {
        self.atom_vocab
            .binary_search(&element)
            .unwrap_or(self.atom_vocab.len())
    }

    /// Unknown and missing groups share the NOTFOUND row.
    pub fn fg_index(&self, group: Option<&str>) -> usize {
        group
            .and_then(|g| self.fg_vocab.iter().position(|n| n == g))
            .unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, EncoderError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| EncoderError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// FNV-1a of [`EncoderConfig::to_json`]; equals the checkpoint digest.
    pub fn digest(&self) -> u64 {
        fnv1a(self.to_json().as_bytes())
    }

    fn layer_input_dim(&self, l: usize) -> usize {
        if l == 0 {
            2 * self.embed_dim
        } else {
            self.layer_dims[l - 1]
        }
    }
}

/// Standard-normal embedding tables with a frozen zero NOTFOUND row; layer
/// weights are standard normal scaled by `1/sqrt(fan_in)`; biases and GIN
/// epsilons start at zero.
pub fn init_params(cfg: &EncoderConfig, seed: u64) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParameterSet::new();
    let trainable = |mut t: Tensor| {
        t.set_requires_grad(true);
        t
    };
    let atom = Tensor::randn(cfg.atom_vocab.len() + 1, cfg.embed_dim, 1.0, &mut rng);
    p.insert(ATOM_EMBEDDING, trainable(atom));
    let mut fg = trainable(Tensor::randn(cfg.fg_vocab.len(), cfg.embed_dim, 1.0, &mut rng));
    fg.values_mut()[..cfg.embed_dim].fill(0.0);
    fg.freeze_row(0);
    p.insert(FG_EMBEDDING, fg);
    let mut linear = |p: &mut ParameterSet, name: String, fan_in: usize, out: usize| {
        let w = Tensor::randn(fan_in, out, 1.0 / (fan_in as f64).sqrt(), &mut rng);
        p.insert(format!("{name}.weight"), trainable(w));
        p.insert(format!("{name}.bias"), trainable(Tensor::zeros(vec![1, out])));
    };
    for (l, &out) in cfg.layer_dims.iter().enumerate() {
        let fan_in = cfg.layer_input_dim(l);
        match cfg.variant {
            GnnVariant::Gcn => linear(&mut p, format!("layer{l}"), fan_in, out),
            GnnVariant::Sage => linear(&mut p, format!("layer{l}"), 2 * fan_in, out),
            GnnVariant::Gin => {
                p.insert(format!("layer{l}.eps"), trainable(Tensor::zeros(vec![1, 1])));
                linear(&mut p, format!("layer{l}.mlp0"), fan_in, out);
                linear(&mut p, format!("layer{l}.mlp1"), out, out);
            }
        }
    }
    p
}

/// A molecule reduced to vocabulary rows and edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedMolecule {
    pub atom_rows: Vec<usize>,
    pub fg_rows: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl PreparedMolecule {
    pub fn new(
        cfg: &EncoderConfig,
        g: &MolecularGraph,
        a: &FunctionalGroupAssignment,
    ) -> Result<Self, EncoderError> {
        if g.atom_count() == 0 {
            return Err(EncoderError::EmptyGraph);
        }
        if a.atom_count() != g.atom_count() {
            return Err(EncoderError::AssignmentMismatch {
                assigned: a.atom_count(),
                atoms: g.atom_count(),
            });
        }
        Ok(Self {
            atom_rows: g.atoms().iter().map(|at| cfg.atom_index(at.element)).collect(),
            fg_rows: (0..g.atom_count()).map(|i| cfg.fg_index(a.group(i))).collect(),
            edges: g.edges().to_vec(),
        })
    }

    pub fn atom_count(&self) -> usize {
        self.atom_rows.len()
    }
}

/// Block-diagonal propagation matrices for a batch of molecules.
#[derive(Debug, Clone)]
pub struct GraphOps {
    /// `D̃^-1/2 (A + I) D̃^-1/2`.
    pub gcn: Arc<SparseMatrix>,
    /// Plain adjacency.
    pub adjacency: Arc<SparseMatrix>,
    /// Row-normalised adjacency; isolated atoms have an empty row.
    pub mean: Arc<SparseMatrix>,
    /// `B x n` segment mean for the readout.
    pub readout: Arc<SparseMatrix>,
}

impl GraphOps {
    pub fn new(batch: &[&PreparedMolecule]) -> Self {
        let n: usize = batch.iter().map(|m| m.atom_count()).sum();
        let (mut gcn, mut adj, mut mean, mut readout) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut offset = 0;
        for (b, m) in batch.iter().enumerate() {
            let k = m.atom_count();
            let mut degree = vec![0usize; k];
            for &(i, j) in &m.edges {
                degree[i] += 1;
                degree[j] += 1;
            }
            for (i, &d) in degree.iter().enumerate() {
                gcn.push((offset + i, offset + i, 1.0 / (d + 1) as f64));
                readout.push((b, offset + i, 1.0 / k as f64));
            }
            for &(i, j) in &m.edges {
                let w = 1.0 / (((degree[i] + 1) * (degree[j] + 1)) as f64).sqrt();
                let (gi, gj) = (offset + i, offset + j);
                gcn.push((gi, gj, w));
                gcn.push((gj, gi, w));
                adj.push((gi, gj, 1.0));
                adj.push((gj, gi, 1.0));
                mean.push((gi, gj, 1.0 / degree[i] as f64));
                mean.push((gj, gi, 1.0 / degree[j] as f64));
            }
            offset += k;
        }
        let sq = |t| Arc::new(SparseMatrix::from_triplets(n, n, t));
        Self {
            gcn: sq(gcn),
            adjacency: sq(adj),
            mean: sq(mean),
            readout: Arc::new(SparseMatrix::from_triplets(batch.len(), n, readout)),
        }
    }
}

/// Parameters of the encoder bound onto one tape.
struct Bound {
    atom: Var,
    fg: Var,
}

/// Where a layer's input comes from.
enum LayerInput<'a> {
    Dense(Var),
    /// Rows of the two embedding tables, for the first layer.
    Factored {
        bound: &'a Bound,
        atom_rows: &'a [usize],
        fg_rows: &'a [usize],
        embed_dim: usize,
    },
}

impl LayerInput<'_> {
    /// `X * W[rows]` where `rows` selects the block of `w` applied to `X`.
    fn project(&self, t: &mut Tape, w: Var, rows: std::ops::Range<usize>) -> Result<Var, TensorError> {
        let block: Vec<usize> = rows.collect();
        let w = if block.len() == t.shape(w).0 {
            w
        } else {
            t.gather_rows(w, &block)?
        };
        match self {
            LayerInput::Dense(x) => t.matmul(*x, w),
            LayerInput::Factored {
                bound,
                atom_rows,
                fg_rows,
                embed_dim,
            } => {
                let top: Vec<usize> = (0..*embed_dim).collect();
                let bottom: Vec<usize> = (*embed_dim..2 * embed_dim).collect();
                let wa = t.gather_rows(w, &top)?;
                let wf = t.gather_rows(w, &bottom)?;
                let pa = t.matmul(bound.atom, wa)?;
                let pf = t.matmul(bound.fg, wf)?;
                let ga = t.gather_rows(pa, atom_rows)?;
                let gf = t.gather_rows(pf, fg_rows)?;
                t.add(ga, gf)
            }
        }
    }

    fn width(&self, t: &Tape) -> usize {
        match self {
            LayerInput::Dense(x) => t.shape(*x).1,
            LayerInput::Factored { embed_dim, .. } => 2 * embed_dim,
        }
    }
}

fn layer(
    t: &mut Tape,
    variant: GnnVariant,
    input: &LayerInput<'_>,
    ops: &GraphOps,
    params: &ParameterSet,
    prefix: &str,
    activate: bool,
) -> Result<Var, EncoderError> {
    let width = input.width(t);
    let bind = |t: &mut Tape, name: &str| -> Result<Var, TensorError> {
        Ok(t.param(&format!("{prefix}.{name}"), params.get(&format!("{prefix}.{name}"))?))
    };
    let out = match variant {
        GnnVariant::Gcn => {
            let (w, b) = (bind(t, "weight")?, bind(t, "bias")?);
            expect_rows(t, w, width, "gcn weight")?;
            let xw = input.project(t, w, 0..width)?;
            let agg = t.sparse_mul(ops.gcn.clone(), xw)?;
            t.add_row(agg, b)?
        }
        GnnVariant::Sage => {
            let (w, b) = (bind(t, "weight")?, bind(t, "bias")?);
            expect_rows(t, w, 2 * width, "sage weight")?;
            let own = input.project(t, w, 0..width)?;
            let nb = input.project(t, w, width..2 * width)?;
            let nb = t.sparse_mul(ops.mean.clone(), nb)?;
            let sum = t.add(own, nb)?;
            t.add_row(sum, b)?
        }
        GnnVariant::Gin => {
            let eps = bind(t, "eps")?;
            let (w0, b0) = (bind(t, "mlp0.weight")?, bind(t, "mlp0.bias")?);
            let (w1, b1) = (bind(t, "mlp1.weight")?, bind(t, "mlp1.bias")?);
            expect_rows(t, w0, width, "gin weight")?;
            let xw = input.project(t, w0, 0..width)?;
            let scaled = t.scale_by(xw, eps)?;
            let nb = t.sparse_mul(ops.adjacency.clone(), xw)?;
            let h = t.add(xw, scaled)?;
            let h = t.add(h, nb)?;
            let h = t.add_row(h, b0)?;
            let h = t.relu(h);
            let h = t.matmul(h, w1)?;
            t.add_row(h, b1)?
        }
    };
    Ok(if activate { t.relu(out) } else { out })
}

fn expect_rows(t: &Tape, w: Var, rows: usize, op: &'static str) -> Result<(), TensorError> {
    let shape = t.shape(w);
    if shape.0 != rows {
        return Err(TensorError::ShapeMismatch {
            op,
            left: vec![shape.0, shape.1],
            right: vec![rows],
        });
    }
    Ok(())
}

/// Dense node features `n x 2*embed_dim`: row `v` is
/// `[E_atom[element(v)] , E_fg[group(v)]]`.
pub fn initial_node_features(
    cfg: &EncoderConfig,
    params: &ParameterSet,
    m: &PreparedMolecule,
) -> Result<Tensor, EncoderError> {
    let atom = params.get(ATOM_EMBEDDING)?;
    let fg = params.get(FG_EMBEDDING)?;
    let d = cfg.embed_dim;
    let mut values = Vec::with_capacity(m.atom_count() * 2 * d);
    for (&a, &f) in m.atom_rows.iter().zip(&m.fg_rows) {
        values.extend_from_slice(atom.row(a));
        values.extend_from_slice(fg.row(f));
    }
    Ok(Tensor::matrix(m.atom_count(), 2 * d, values)?)
}

/// One message-passing layer applied to dense features on a tape.
pub fn gnn_layer(
    t: &mut Tape,
    cfg: &EncoderConfig,
    params: &ParameterSet,
    layer_index: usize,
    x: Var,
    ops: &GraphOps,
) -> Result<Var, EncoderError> {
    let activate = layer_index + 1 < cfg.layer_dims.len();
    layer(
        t,
        cfg.variant,
        &LayerInput::Dense(x),
        ops,
        params,
        &format!("layer{layer_index}"),
        activate,
    )
}

/// Column-wise mean of the node rows.
pub fn readout(t: &mut Tape, nodes: Var) -> Result<Var, EncoderError> {
    if t.shape(nodes).0 == 0 {
        return Err(EncoderError::EmptyGraph);
    }
    Ok(t.mean_rows(nodes)?)
}

/// Trained or freshly initialised encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: ParameterSet,
}

impl Encoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Self {
        let params = init_params(&config, seed);
        Self { config, params }
    }

    pub fn prepare(
        &self,
        g: &MolecularGraph,
        a: &FunctionalGroupAssignment,
    ) -> Result<PreparedMolecule, EncoderError> {
        PreparedMolecule::new(&self.config, g, a)
    }

    /// Graph embeddings for a batch as a `B x output_dim` node on `t`.
    pub fn forward(&self, t: &mut Tape, batch: &[&PreparedMolecule]) -> Result<Var, EncoderError> {
        if batch.is_empty() || batch.iter().any(|m| m.atom_count() == 0) {
            return Err(EncoderError::EmptyGraph);
        }
        let ops = GraphOps::new(batch);
        let bound = Bound {
            atom: t.param(ATOM_EMBEDDING, self.params.get(ATOM_EMBEDDING)?),
            fg: t.param(FG_EMBEDDING, self.params.get(FG_EMBEDDING)?),
        };
        let atom_rows: Vec<usize> = batch.iter().flat_map(|m| m.atom_rows.iter().copied()).collect();
        let fg_rows: Vec<usize> = batch.iter().flat_map(|m| m.fg_rows.iter().copied()).collect();
        let input = LayerInput::Factored {
            bound: &bound,
            atom_rows: &atom_rows,
            fg_rows: &fg_rows,
            embed_dim: self.config.embed_dim,
        };
        let mut h = layer(t, self.config.variant, &input, &ops, &self.params, "layer0", true)?;
        for l in 1..self.config.layer_dims.len() {
            let activate = l + 1 < self.config.layer_dims.len();
            h = layer(
                t,
                self.config.variant,
                &LayerInput::Dense(h),
                &ops,
                &self.params,
                &format!("layer{l}"),
                activate,
            )?;
        }
        Ok(t.sparse_mul(ops.readout.clone(), h)?)
    }

    /// Embedding of one molecule.
    pub fn encode(&self, m: &PreparedMolecule) -> Result<Vec<f64>, EncoderError> {
        let mut t = Tape::new();
        let h = self.forward(&mut t, &[m])?;
        Ok(t.value(h).to_vec())
    }

    /// Embeddings of many molecules; chunks run in parallel when enabled and
    /// each row is independent of the chunk it lands in.
    pub fn encode_all(&self, mols: &[PreparedMolecule]) -> Result<Vec<Vec<f64>>, EncoderError> {
        let chunks: Vec<&[PreparedMolecule]> = mols.chunks(64).collect();
        let dim = self.config.output_dim();
        let parts = par::map(&chunks, |chunk| {
            let refs: Vec<&PreparedMolecule> = chunk.iter().collect();
            let mut t = Tape::new();
            let h = self.forward(&mut t, &refs)?;
            Ok::<_, EncoderError>(t.value(h).chunks(dim).map(<[f64]>::to_vec).collect::<Vec<_>>())
        });
        let mut out = Vec::with_capacity(mols.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_json: self.config.to_json(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, EncoderError> {
        let config = EncoderConfig::from_json(&ck.config_json)?;
        let expected = init_params(&config, 0);
        for (name, t) in expected.iter() {
            let got = ck.params.get(name)?;
            if got.shape() != t.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "checkpoint",
                    left: got.shape().to_vec(),
                    right: t.shape().to_vec(),
                }
                .into());
            }
        }
        Ok(Self {
            config,
            params: ck.params,
        })
    }
}

/// Cosine similarity; zero vectors score 0 against everything but
/// themselves, where they score 1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return if na == nb { 1.0 } else { 0.0 };
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Writes `index<TAB>v0 v1 ...` lines.
pub fn embedding_dump(embeddings: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (i, e) in embeddings.iter().enumerate() {
        out.push_str(&i.to_string());
        out.push('\t');
        let vals: Vec<String> = e.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    }
    out
}
