//! Adam with bias correction.

use std::collections::BTreeMap;

use super::ParameterSet;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable tensor, then zeroes the
    /// gradients. Frozen rows keep both their values and their moments.
    pub fn step(&mut self, params: &mut ParameterSet) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, tensor) in params.iter_mut() {
            let Some(grad) = tensor.grad.as_mut() else {
                continue;
            };
            let n = grad.len();
            let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let cols = tensor.shape[1..].iter().product::<usize>().max(1);
            for i in 0..n {
                if tensor.frozen_rows.binary_search(&(i / cols)).is_ok() {
                    continue;
                }
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                tensor.values[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            grad.fill(0.0);
        }
    }
}
