//! SMARTS queries, substructure matching and functional-group assignment.

mod groups;
mod matcher;
mod smarts;

use thiserror::Error;

use crate::molgraph::ParseError;

pub use groups::{
    assign_functional_groups, build_clusters, cluster_id, clusters_by_size,
    FunctionalGroupAssignment, FunctionalGroupDictionary, GroupEntry, NOT_FOUND, OTHER_CLUSTER,
};
pub use matcher::{has_match, match_pattern, Mapping};
pub use smarts::{parse_smarts, BondConstraint, QueryAtom, QueryGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PatternError {
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("duplicate or reserved group name '{0}'")]
    DuplicateName(String),
    #[error("dictionary line {0} is not `name<TAB>SMARTS`: {1:?}")]
    BadDictionaryLine(usize, String),
    #[error("dictionary line {line}: {source}")]
    Smarts { line: usize, source: ParseError },
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("min_frequency must be at least 1")]
    InvalidMinFrequency,
}
