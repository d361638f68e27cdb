//! Knowledge-aware molecular representation learning at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! * [`molgraph`] parses SMILES into hydrogen-suppressed graphs whose edges
//!   carry no bond type.
//! * [`patterns`] parses SMARTS queries, matches them by backtracking, assigns
//!   functional groups largest-first and clusters molecules by their largest
//!   group.
//! * [`fingerprints`] computes circular, path and structural-key fingerprints,
//!   Dice similarity and the fingerprint kNN baseline.
//! * [`tensor`] is a small reverse-mode autodiff engine with Adam and a binary
//!   checkpoint format.
//! * [`encoder`] builds node features from atom and functional-group
//!   embeddings, runs two GCN / GIN / GraphSAGE layers and mean-pools.
//! * [`pretrain`] samples cluster-restricted batches, picks positives by
//!   fingerprint similarity and minimises the InfoNCE objective.
//! * [`evalkit`] scores frozen embeddings: MLP probe with ROC-AUC, similarity
//!   distributions, retrieval and isomer reports.
//! * [`cli`] wires everything into the `ckgnn` binary.
//!
//! Corpus-level stages run data-parallel through [`par`] when the `parallel`
//! feature is enabled (the default) and sequentially otherwise.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod evalkit;
pub mod fingerprints;
pub mod hash;
pub mod molgraph;
mod notation;
pub mod par;
pub mod patterns;
pub mod pretrain;
pub mod tensor;

pub use encoder::{Encoder, EncoderConfig, GnnVariant};
pub use fingerprints::{Fingerprint, FingerprintKind};
pub use molgraph::{parse_smiles, Atom, BondOrder, MolecularGraph};
pub use patterns::{
    assign_functional_groups, match_pattern, parse_smarts, FunctionalGroupAssignment,
    FunctionalGroupDictionary, QueryGraph,
};


pub use pretrain::TrainConfig;
pub use tensor::{ParameterSet, Tensor};
