//! The `ckgnn` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
//! Every subcommand that writes to a file also writes
//! `<output>.manifest.json` (or `manifest.json` inside an output directory)
//! recording the resolved flags, seed, inputs and outputs.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{parse_pairs, read_text, Corpus, CorpusError};
use crate::encoder::{embedding_dump, Encoder, EncoderConfig, EncoderError, GnnVariant};
use crate::evalkit::{
    isomer_report, probe_train_eval, similarity_distribution, top_k_similar, EvalError, ProbeConfig,
};
use crate::fingerprints::{knn, FingerprintError, FingerprintKind, FingerprintSpec};
use crate::molgraph::parse_smiles;
use crate::patterns::{
    assign_functional_groups, build_clusters, clusters_by_size, FunctionalGroupDictionary, PatternError,
    NOT_FOUND,
};
use crate::pretrain::{train, PretrainError, TrainConfig, TrainingSet};
use crate::tensor::{Checkpoint, TensorError};
use crate::{par, patterns};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}
data_errors!(CorpusError, PatternError, FingerprintError, crate::molgraph::ParseError);

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::Checkpoint(m) => CliError::Data(format!("checkpoint: {m}")),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<EncoderError> for CliError {
    fn from(e: EncoderError) -> Self {
        match e {
            EncoderError::Tensor(t) => t.into(),
            EncoderError::InvalidConfig(_) => CliError::Data(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PretrainError> for CliError {
    fn from(e: PretrainError) -> Self {
        match e {
            PretrainError::InvalidConfig(m) => CliError::Usage(m),
            PretrainError::Encoder(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Encoder(inner) => inner.into(),
            EvalError::Tensor(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_internal(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "ckgnn", version, about = "Knowledge-aware molecular graph encoder toolkit")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, env = "CKGNN_SEED", default_value_t = 0, global = true)]
    pub seed: u64,
    /// Functional-group dictionary (`name<TAB>SMARTS` lines); built-in if unset.
    #[arg(long, env = "CKGNN_DICT", global = true)]
    pub dict: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a corpus and print atom/edge/component counts.
    Parse(ParseArgs),
    /// Assign functional groups largest-first.
    Fgassign(ParseArgs),
    /// Compute fingerprints.
    Fp(FpArgs),
    /// Fingerprint nearest neighbours of a query molecule.
    Knn(KnnArgs),
    /// Cluster a corpus by largest functional group.
    Cluster(ClusterArgs),
    /// Contrastive pretraining.
    Pretrain(PretrainArgs),
    /// Embed a corpus with a trained checkpoint.
    Embed(EmbedArgs),
    /// Frozen-embedding MLP probe, one ROC-AUC per label column.
    Probe(ProbeArgs),
    /// Cosine similarity distribution over random anchor pairs.
    Simdist(SimdistArgs),
    /// Most similar corpus molecules to a query.
    Topk(TopkArgs),
    /// Pair cosines under the trained and a freshly initialised encoder.
    Isomers(IsomerArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ParseArgs {
    /// Corpus file, one `SMILES[<TAB>label...]` per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output file; standard output if unset.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct FpFlags {
    /// Fingerprint family: path, circular or structural_key.
    #[arg(long = "fp", default_value = "path")]
    pub kind: FingerprintKind,
    #[arg(long, default_value_t = 2048)]
    pub nbits: usize,
    /// Circular fingerprint radius.
    #[arg(long, default_value_t = 2)]
    pub radius: usize,
    /// Shortest path length in bonds.
    #[arg(long, default_value_t = 1)]
    pub min_path: usize,
    /// Longest path length in bonds.
    #[arg(long, default_value_t = 7)]
    pub max_path: usize,
}

impl FpFlags {
    fn spec(&self) -> FingerprintSpec {
        FingerprintSpec {
            kind: self.kind,
            nbits: self.nbits,
            radius: self.radius,
            min_path: self.min_path,
            max_path: self.max_path,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FpArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub fp: FpFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct KnnArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Query SMILES.
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub fp: FpFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Clusters smaller than this merge into OTHER (2000 suits multi-million-molecule corpora).
    #[arg(long, default_value_t = 20)]
    pub min_frequency: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PretrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory for checkpoints, the training log and the manifest.
    #[arg(long, default_value = "ckgnn-run")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    /// Batch size N (one positive, N-2 negatives per anchor).
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// InfoNCE temperature.
    #[arg(long, default_value_t = 0.07)]
    pub tau: f64,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    /// GNN variant: gcn, gin or sage.
    #[arg(long, default_value = "gcn")]
    pub variant: GnnVariant,
    /// Width of each embedding table.
    #[arg(long, default_value_t = 512)]
    pub embed_dim: usize,
    /// Output width of the two GNN layers.
    #[arg(long, value_delimiter = ',', default_value = "512,256")]
    pub layer_dims: Vec<usize>,
    /// Clusters smaller than this merge into OTHER (2000 suits multi-million-molecule corpora).
    #[arg(long, default_value_t = 20)]
    pub min_frequency: usize,
    /// Fingerprint family for positive selection.
    #[arg(long = "fp", default_value = "path")]
    pub fingerprint: FingerprintKind,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    /// Corpus with 0/1 label columns after the SMILES.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// 0-based label column; every column if unset.
    #[arg(long)]
    pub label_column: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "128")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub probe_lr: f64,
    #[arg(long, default_value_t = 100)]
    pub probe_epochs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimdistArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 25)]
    pub anchors: usize,
    #[arg(long, default_value_t = 100)]
    pub per_anchor: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TopkArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct IsomerArgs {
    /// `SMILES<TAB>SMILES` lines.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: serde_json::Value,
    pub seed: u64,
    pub dictionary: String,
    pub config_digest: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub skipped_molecules: usize,
    pub version: String,
}

struct Context {
    seed: u64,
    dict: FunctionalGroupDictionary,
    dict_source: String,
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("missing input {}", path.display())));
    }
    let c = Corpus::read(path)?;
    if !c.skipped.is_empty() {
        log::warn!("{}: skipped {} unparseable lines", path.display(), c.skipped.len());
    }
    Ok(c)
}

fn load_encoder(path: &Path) -> Result<Encoder, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("missing input {}", path.display())));
    }
    Ok(Encoder::from_checkpoint(Checkpoint::load(path)?)?)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_internal(dir))?;
    }
    std::fs::write(path, text).map_err(io_internal(path))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

struct Output<'a> {
    stdout: &'a mut dyn Write,
}

impl Output<'_> {
    /// Writes `text` to `out` (with a manifest) or to standard output.
    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        ctx: &Context,
        command: &str,
        flags: &impl Serialize,
        out: Option<&Path>,
        text: &str,
        inputs: &[&Path],
        digest: Option<u64>,
        skipped: usize,
    ) -> Result<(), CliError> {
        match out {
            Some(path) => {
                write_file(path, text)?;
                let m = manifest(ctx, command, flags, inputs, &[path], digest, skipped)?;
                write_file(&manifest_path(path), &m)
            }
            None => self
                .stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Internal(format!("stdout: {e}"))),
        }
    }
}

fn manifest(
    ctx: &Context,
    command: &str,
    flags: &impl Serialize,
    inputs: &[&Path],
    outputs: &[&Path],
    digest: Option<u64>,
    skipped: usize,
) -> Result<String, CliError> {
    let m = RunManifest {
        command: command.to_string(),
        flags: serde_json::to_value(flags).map_err(|e| CliError::Internal(e.to_string()))?,
        seed: ctx.seed,
        dictionary: ctx.dict_source.clone(),
        config_digest: digest.map(|d| format!("{d:016x}")),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        skipped_molecules: skipped,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let mut s = serde_json::to_string_pretty(&m).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Parses `args` (including the program name) and runs the command,
/// writing non-file output to `stdout`.
pub fn run(args: impl IntoIterator<Item = OsString>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(stdout, "{e}").map_err(|e| CliError::Internal(e.to_string()))?;
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string().trim_end().to_string()));
        }
    };
    let (dict, dict_source) = match &cli.dict {
        Some(p) => (FunctionalGroupDictionary::from_file(p)?, p.display().to_string()),
        None => (FunctionalGroupDictionary::builtin(), "builtin".to_string()),
    };
    let ctx = Context {
        seed: cli.seed,
        dict,
        dict_source,
    };
    let mut out = Output { stdout };
    match &cli.command {
        Command::Parse(a) => cmd_parse(&ctx, &mut out, a),
        Command::Fgassign(a) => cmd_fgassign(&ctx, &mut out, a),
        Command::Fp(a) => cmd_fp(&ctx, &mut out, a),
        Command::Knn(a) => cmd_knn(&ctx, &mut out, a),
        Command::Cluster(a) => cmd_cluster(&ctx, &mut out, a),
        Command::Pretrain(a) => cmd_pretrain(&ctx, &mut out, a),
        Command::Embed(a) => cmd_embed(&ctx, &mut out, a),
        Command::Probe(a) => cmd_probe(&ctx, &mut out, a),
        Command::Simdist(a) => cmd_simdist(&ctx, &mut out, a),
        Command::Topk(a) => cmd_topk(&ctx, &mut out, a),
        Command::Isomers(a) => cmd_isomers(&ctx, &mut out, a),
    }
}

/// Runs the command and maps the outcome to a process exit code, printing a
/// one-line diagnostic on failure.
pub fn main_exit(args: impl IntoIterator<Item = OsString>) -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(args, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("");
            eprintln!("error: {}", first.trim_start_matches("error: "));
            e.exit_code()
        }
    }
}

fn cmd_parse(ctx: &Context, out: &mut Output<'_>, a: &ParseArgs) -> Result<(), CliError> {
    let c = load_corpus(&a.corpus)?;
    let mut text = String::from("# index\tatoms\tedges\tcomponents\tsmiles\n");
    for (i, g) in c.graphs.iter().enumerate() {
        text.push_str(&format!(
            "{i}\t{}\t{}\t{}\t{}\n",
            g.atom_count(),
            g.edge_count(),
            g.component_count(),
            g.source_smiles()
        ));
    }
    out.emit(ctx, "parse", a, a.out.as_deref(), &text, &[&a.corpus], None, c.skipped.len())
}

fn cmd_fgassign(ctx: &Context, out: &mut Output<'_>, a: &ParseArgs) -> Result<(), CliError> {
    let c = load_corpus(&a.corpus)?;
    let assignments = par::map(&c.graphs, |g| assign_functional_groups(g, &ctx.dict));
    let mut text = String::from("# index\tlargest_group\tper_atom_groups\n");
    for (i, asg) in assignments.iter().enumerate() {
        let labels: Vec<&str> = (0..asg.atom_count()).map(|k| asg.label(k)).collect();
        text.push_str(&format!(
            "{i}\t{}\t{}\n",
            asg.largest_group().unwrap_or(NOT_FOUND),
            labels.join(",")
        ));
    }
    out.emit(ctx, "fgassign", a, a.out.as_deref(), &text, &[&a.corpus], None, c.skipped.len())
}

fn cmd_fp(ctx: &Context, out: &mut Output<'_>, a: &FpArgs) -> Result<(), CliError> {
    let c = load_corpus(&a.corpus)?;
    let fps = a.fp.spec().compute_all(&c.graphs, &ctx.dict)?;
    let mut text = String::new();
    for (i, f) in fps.iter().enumerate() {
        text.push_str(&f.dump_line(i));
        text.push('\n');
    }
    out.emit(ctx, "fp", a, a.out.as_deref(), &text, &[&a.corpus], None, c.skipped.len())
}

fn cmd_knn(ctx: &Context, out: &mut Output<'_>, a: &KnnArgs) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let c = load_corpus(&a.corpus)?;
    let spec = a.fp.spec();
    let q = spec.compute(&parse_smiles(&a.query)?, &ctx.dict)?;
    let fps = spec.compute_all(&c.graphs, &ctx.dict)?;
    let mut text = String::from("# rank\tindex\tdice\tsmiles\n");
    for (rank, (i, s)) in knn(&q, &fps, a.k)?.into_iter().enumerate() {
        text.push_str(&format!("{}\t{i}\t{s:.6}\t{}\n", rank + 1, c.graphs[i].source_smiles()));
    }
    out.emit(ctx, "knn", a, a.out.as_deref(), &text, &[&a.corpus], None, c.skipped.len())
}

fn cmd_cluster(ctx: &Context, out: &mut Output<'_>, a: &ClusterArgs) -> Result<(), CliError> {
    let c = load_corpus(&a.corpus)?;
    let assignments = par::map(&c.graphs, |g| assign_functional_groups(g, &ctx.dict));
    let clusters = build_clusters(&assignments, a.min_frequency)?;
    let mut text = String::from("# cluster\tsize\tmembers\n");
    for (name, members) in patterns::clusters_by_size(&clusters) {
        let m: Vec<String> = members.iter().map(usize::to_string).collect();
        text.push_str(&format!("{name}\t{}\t{}\n", members.len(), m.join(",")));
    }
    out.emit(ctx, "cluster", a, a.out.as_deref(), &text, &[&a.corpus], None, c.skipped.len())
}

fn cmd_pretrain(ctx: &Context, out: &mut Output<'_>, a: &PretrainArgs) -> Result<(), CliError> {
    let tcfg = TrainConfig {
        batch_size: a.batch,
        epochs: a.epochs,
        lr: a.lr,
        tau: a.tau,
        fingerprint: a.fingerprint,
        min_frequency: a.min_frequency,
        seed: ctx.seed,
    };
    tcfg.validate()?;
    let c = load_corpus(&a.corpus)?;
    let ecfg = EncoderConfig::for_corpus(a.variant, a.embed_dim, a.layer_dims.clone(), &c.graphs, &ctx.dict)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let set = TrainingSet::build(&c.graphs, &ctx.dict, &tcfg)?;
    let mut enc = Encoder::new(ecfg, ctx.seed);
    std::fs::create_dir_all(&a.out_dir).map_err(io_internal(&a.out_dir))?;
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut write_error = None;
    let result = train(&mut enc, &c.graphs, &set, &tcfg, &mut |epoch, e| {
        let path = a.out_dir.join(format!("epoch-{epoch}.ckpt"));
        if let Err(err) = e.to_checkpoint().save(&path) {
            write_error = Some(CliError::Internal(format!("writing {}: {err}", path.display())));
            return Err(PretrainError::InvalidConfig("checkpoint write failed".into()));
        }
        outputs.push(path);
        Ok(())
    });
    if let Some(err) = write_error {
        return Err(err);
    }
    let log = result?;
    let model = a.out_dir.join("model.ckpt");
    enc.to_checkpoint().save(&model)?;
    outputs.push(model);
    let log_path = a.out_dir.join("train.log");
    write_file(&log_path, &log.to_tsv())?;
    outputs.push(log_path);
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let m = manifest(ctx, "pretrain", a, &[&a.corpus], &outs, Some(enc.config.digest()), c.skipped.len())?;
    write_file(&a.out_dir.join("manifest.json"), &m)?;
    let sizes = clusters_by_size(&set.clusters);
    writeln!(
        out.stdout,
        "trained {} batches over {} clusters; skipped {} small clusters; wrote {}",
        log.records.len(),
        sizes.len() - log.skipped_clusters.len(),
        log.skipped_clusters.len(),
        a.out_dir.display()
    )
    .map_err(|e| CliError::Internal(e.to_string()))
}

fn embed_corpus(ctx: &Context, enc: &Encoder, c: &Corpus) -> Result<Vec<Vec<f64>>, CliError> {
    let prepared = par::map(&c.graphs, |g| enc.prepare(g, &assign_functional_groups(g, &ctx.dict)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(enc.encode_all(&prepared)?)
}

fn cmd_embed(ctx: &Context, out: &mut Output<'_>, a: &EmbedArgs) -> Result<(), CliError> {
    let enc = load_encoder(&a.checkpoint)?;
    let c = load_corpus(&a.corpus)?;
    let emb = embed_corpus(ctx, &enc, &c)?;
    let text = embedding_dump(&emb);
    out.emit(
        ctx,
        "embed",
        a,
        a.out.as_deref(),
        &text,
        &[&a.corpus, &a.checkpoint],
        Some(enc.config.digest()),
        c.skipped.len(),
    )
}

fn cmd_probe(ctx: &Context, out: &mut Output<'_>, a: &ProbeArgs) -> Result<(), CliError> {
    let enc = load_encoder(&a.checkpoint)?;
    let c = load_corpus(&a.corpus)?;
    let columns: Vec<usize> = match a.label_column {
        Some(col) => vec![col],
        None => (0..c.label_columns()).collect(),
    };
    if columns.is_empty() {
        return Err(CliError::Data("corpus has no label columns".into()));
    }
    let emb = embed_corpus(ctx, &enc, &c)?;
    let cfg = ProbeConfig {
        hidden: a.hidden.clone(),
        lr: a.probe_lr,
        epochs: a.probe_epochs,
        seed: ctx.seed,
        ..ProbeConfig::default()
    };
    let mut text = String::from("# column\troc_auc\ttrain\ttest\n");
    for col in columns {
        let labels = c.binary_labels(col)?;
        let r = probe_train_eval(&emb, &labels, &cfg)?;
        text.push_str(&format!("{col}\t{:.6}\t{}\t{}\n", r.roc_auc, r.train_size, r.test_size));
    }
    out.emit(
        ctx,
        "probe",
        a,
        a.out.as_deref(),
        &text,
        &[&a.corpus, &a.checkpoint],
        Some(enc.config.digest()),
        c.skipped.len(),
    )
}

fn cmd_simdist(ctx: &Context, out: &mut Output<'_>, a: &SimdistArgs) -> Result<(), CliError> {
    let enc = load_encoder(&a.checkpoint)?;
    let c = load_corpus(&a.corpus)?;
    let emb = embed_corpus(ctx, &enc, &c)?;
    let s = similarity_distribution(&emb, a.anchors, a.per_anchor, ctx.seed)?;
    let text = format!(
        "# mean\t{:.6}\n# variance\t{:.6}\n# pairs\t{}\n{}",
        s.mean,
        s.variance,
        s.pairs,
        s.histogram_tsv()
    );
    out.emit(
        ctx,
        "simdist",
        a,
        a.out.as_deref(),
        &text,
        &[&a.corpus, &a.checkpoint],
        Some(enc.config.digest()),
        c.skipped.len(),
    )
}

fn cmd_topk(ctx: &Context, out: &mut Output<'_>, a: &TopkArgs) -> Result<(), CliError> {
    let enc = load_encoder(&a.checkpoint)?;
    let c = load_corpus(&a.corpus)?;
    let emb = embed_corpus(ctx, &enc, &c)?;
    let q = crate::evalkit::embed_smiles(&enc, &a.query, &ctx.dict)?;
    let mut text = String::from("# rank\tindex\tcosine\tsmiles\n");
    for (rank, (i, s)) in top_k_similar(&q, &emb, a.k).into_iter().enumerate() {
        text.push_str(&format!("{}\t{i}\t{s:.6}\t{}\n", rank + 1, c.graphs[i].source_smiles()));
    }
    out.emit(
        ctx,
        "topk",
        a,
        a.out.as_deref(),
        &text,
        &[&a.corpus, &a.checkpoint],
        Some(enc.config.digest()),
        c.skipped.len(),
    )
}

fn cmd_isomers(ctx: &Context, out: &mut Output<'_>, a: &IsomerArgs) -> Result<(), CliError> {
    let enc = load_encoder(&a.checkpoint)?;
    let pairs = parse_pairs(&read_text(&a.pairs).map_err(|e| CliError::Data(e.to_string()))?)?;
    let random = Encoder::new(enc.config.clone(), ctx.seed);
    let rows = isomer_report(&pairs, &enc, &random, &ctx.dict)?;
    let mut text = String::from("# left\tright\ttrained\trandom_init\n");
    for r in rows {
        text.push_str(&format!("{}\t{}\t{:.6}\t{:.6}\n", r.left, r.right, r.trained, r.random));
    }
    out.emit(
        ctx,
        "isomers",
        a,
        a.out.as_deref(),
        &text,
        &[&a.pairs, &a.checkpoint],
        Some(enc.config.digest()),
        0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (Result<(), CliError>, String) {
        let mut buf = Vec::new();
        let r = run(args.iter().map(OsString::from), &mut buf);
        (r, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn help_lists_defaults() {
        let (r, text) = run_args(&["ckgnn", "pretrain", "--help"]);
        r.unwrap();
        for needle in ["--batch", "[default: 32]", "[default: 0.07]", "[default: 0.00001]", "512,256", "2000"] {
            assert!(text.contains(needle), "missing {needle} in\n{text}");
        }
    }

    #[test]
    fn usage_errors_exit_one() {
        let (r, _) = run_args(&["ckgnn", "frobnicate"]);
        assert_eq!(r.unwrap_err().exit_code(), 1);
        let (r, _) = run_args(&["ckgnn", "knn", "--corpus", "x", "--query", "C", "--k", "zero"]);
        assert_eq!(r.unwrap_err().exit_code(), 1);
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let (r, _) = run_args(&["ckgnn", "parse", "--corpus", "/nonexistent/corpus.smi"]);
        assert_eq!(r.unwrap_err().exit_code(), 2);
    }

    #[test]
    fn global_flags_parse_after_the_subcommand() {
        let cli = Cli::try_parse_from(["ckgnn", "parse", "--corpus", "x", "--seed", "9"]).unwrap();
        assert_eq!(cli.seed, 9);
        assert!(matches!(cli.command, Command::Parse(_)));
    }
}
