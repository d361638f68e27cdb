//! Corpus files.
//!
//! One molecule per line: `SMILES[<TAB>label...]`. Blank lines and lines
//! starting with `#` are ignored. Lines whose SMILES fail to parse are
//! skipped and reported, not fatal.

use std::path::Path;

use thiserror::Error;

use crate::molgraph::{parse_smiles, MolecularGraph, ParseError};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("corpus contains no parseable molecules")]
    EmptyCorpus,
    #[error("line {line}: label column {column} missing")]
    MissingLabel { line: usize, column: usize },
    #[error("line {line}: label '{value}' is not 0/1")]
    BadLabel { line: usize, value: String },
    #[error("line {line}: expected two tab-separated SMILES")]
    BadPair { line: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub line: usize,
    pub smiles: String,
    pub error: ParseError,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub graphs: Vec<MolecularGraph>,
    /// 1-based source line of each graph.
    pub lines: Vec<usize>,
    pub labels: Vec<Vec<String>>,
    pub skipped: Vec<Skipped>,
}

fn records(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect()
}

impl Corpus {
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let recs = records(text);
        let parsed = par::map(&recs, |(line, l)| {
            let mut fields = l.split('\t');
            let smiles = fields.next().unwrap_or("").trim();
            let labels: Vec<String> = fields.map(|f| f.trim().to_string()).collect();
            (*line, smiles.to_string(), labels, parse_smiles(smiles))
        });
        let mut c = Corpus::default();
        for (line, smiles, labels, g) in parsed {
            match g {
                Ok(g) => {
                    c.graphs.push(g);
                    c.lines.push(line);
                    c.labels.push(labels);
                }
                Err(error) => {
                    log::warn!("line {line}: skipping '{smiles}': {error}");
                    c.skipped.push(Skipped { line, smiles, error });
                }
            }
        }
        if c.graphs.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self, CorpusError> {
        Self::parse(&read_text(path)?)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Binary labels from 0-based label column `column`.
    pub fn binary_labels(&self, column: usize) -> Result<Vec<bool>, CorpusError> {
        self.labels
            .iter()
            .zip(&self.lines)
            .map(|(labels, &line)| {
                let v = labels.get(column).ok_or(CorpusError::MissingLabel { line, column })?;
                match v.as_str() {
                    "1" | "true" => Ok(true),
                    "0" | "false" => Ok(false),
                    _ => Err(CorpusError::BadLabel {
                        line,
                        value: v.clone(),
                    }),
                }
            })
            .collect()
    }

    pub fn label_columns(&self) -> usize {
        self.labels.iter().map(Vec::len).min().unwrap_or(0)
    }
}

pub fn read_text(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// `SMILES<TAB>SMILES` lines, with the same comment rules as corpora.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CorpusError> {
    records(text)
        .into_iter()
        .map(|(line, l)| {
            let f: Vec<&str> = l.split('\t').map(str::trim).collect();
            match f.as_slice() {
                [a, b, ..] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
                _ => Err(CorpusError::BadPair { line }),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels_and_skips_bad_lines() {
        let c = Corpus::parse("# header\nCCO\t1\n\nC1CC\t0\nCC(=O)O\t0\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.lines, vec![2, 5]);
        assert_eq!(c.skipped.len(), 1);
        assert_eq!(c.skipped[0].line, 4);
        assert_eq!(c.binary_labels(0).unwrap(), vec![true, false]);
        assert_eq!(
            c.binary_labels(1).unwrap_err(),
            CorpusError::MissingLabel { line: 2, column: 1 }
        );
    }

    #[test]
    fn empty_corpus() {
        assert_eq!(Corpus::parse("").unwrap_err(), CorpusError::EmptyCorpus);
        assert_eq!(Corpus::parse("# only\nC1C\n").unwrap_err(), CorpusError::EmptyCorpus);
    }

    #[test]
    fn pairs() {
        let p = parse_pairs("CCO\tCOC\n# x\nCC\n").unwrap_err();
        assert_eq!(p, CorpusError::BadPair { line: 3 });
        assert_eq!(parse_pairs("CCO\tCOC\n").unwrap(), vec![("CCO".into(), "COC".into())]);
    }
}
