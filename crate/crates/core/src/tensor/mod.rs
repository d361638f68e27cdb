//! Dense `f64` tensors, a reverse-mode tape, Adam and checkpoints.
//!
//! Everything is two-dimensional: scalars are `1 x 1`, vectors are rows.
//! Parameters live in a [`ParameterSet`]; a training step binds them onto a
//! [`Tape`], builds the loss, and [`Tape::backward_into`] accumulates the
//! gradients back into the set.

mod adam;
mod checkpoint;
mod ops;
mod tape;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::hash::Fnv1a;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use ops::{matmul_into, SparseMatrix};
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{len} values do not fill shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("index {index} out of range ({len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Dense row-major tensor with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    frozen_rows: Vec<usize>,
}

impl Tensor {
    /// A constant (no gradient buffer).
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, TensorError> {
        let len: usize = shape.iter().product();
        if len != values.len() || shape.is_empty() {
            return Err(TensorError::BadLength {
                shape,
                len: values.len(),
            });
        }
        Ok(Self {
            shape,
            values,
            grad: None,
            frozen_rows: Vec::new(),
        })
    }

    /// A trainable tensor with a zeroed gradient buffer.
    pub fn parameter(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, TensorError> {
        let mut t = Self::new(shape, values)?;
        t.grad = Some(vec![0.0; t.values.len()]);
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len]).expect("consistent length")
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], values)
    }

    /// Standard-normal entries multiplied by `scale`.
    pub fn randn(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let values = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        Self::matrix(rows, cols, values).expect("consistent length")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.grad = on.then(|| vec![0.0; self.values.len()]);
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.fill(0.0);
        }
    }

    /// Pins row `r` to its current values: no gradient reaches it and the
    /// optimizer skips it.
    pub fn freeze_row(&mut self, r: usize) {
        if !self.frozen_rows.contains(&r) {
            self.frozen_rows.push(r);
            self.frozen_rows.sort_unstable();
        }
    }

    pub fn frozen_rows(&self) -> &[usize] {
        &self.frozen_rows
    }

    pub fn is_row_frozen(&self, r: usize) -> bool {
        self.frozen_rows.binary_search(&r).is_ok()
    }
}

/// Named parameters, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, TensorError> {
        self.tensors
            .get(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, TensorError> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| TensorError::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(|t| t.values.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.zero_grad();
        }
    }

    /// FNV-1a over names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv1a::new();
        for (name, t) in &self.tensors {
            h.write(name.as_bytes());
            for &d in &t.shape {
                h.write_u64(d as u64);
            }
            for v in &t.values {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn construction_checks_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::parameter(vec![2, 3], vec![0.0; 6]).unwrap();
        assert!(t.requires_grad());
        assert_eq!(t.grad().unwrap().len(), 6);
        assert!(!Tensor::zeros(vec![2, 2]).requires_grad());
    }

    #[test]
    fn randn_is_seeded() {
        let a = Tensor::randn(3, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = Tensor::randn(3, 4, 1.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn checksum_tracks_values() {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::parameter(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let before = p.checksum();
        p.get_mut("w").unwrap().values_mut()[0] = 1.5;
        assert_ne!(before, p.checksum());
    }
}
