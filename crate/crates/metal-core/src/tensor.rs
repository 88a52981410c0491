//! Dense tensors (vectors and matrices) and the named parameter store.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// A dense rank-1 or rank-2 tensor with an optional accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn vector(values: Vec<f64>) -> Self {
        let shape = vec![values.len()];
        Tensor {
            shape,
            values,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::vector(vec![v])
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                context: "Tensor::matrix",
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Tensor {
            shape: vec![rows, cols],
            values,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows when viewed as a matrix; a vector is a single column.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient slot, allocated zeroed on first use (same shape as values).
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Named parameter tensors with a stable, insertion-defined iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::DuplicateParam(name));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn entry(&self, index: usize) -> (&str, &Tensor) {
        let (n, t) = &self.entries[index];
        (n, t)
    }

    pub fn entry_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Number of tensors.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// All parameter values concatenated in store order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_params());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.values());
        }
        out
    }

    /// Write a flat vector (as produced by [`flatten`](Self::flatten)) back
    /// into the store. Round-trips bit-exactly.
    pub fn restore(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total_params() {
            return Err(Error::ShapeMismatch {
                context: "ParamStore::restore",
                expected: self.total_params(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for (_, t) in &mut self.entries {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }
}

/// Per-parameter gradient accumulator aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradStore {
    grads: Vec<Vec<f64>>,
}

impl GradStore {
    pub fn zeros_like(store: &ParamStore) -> Self {
        GradStore {
            grads: store.iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn slot(&self, index: usize) -> &[f64] {
        &self.grads[index]
    }

    pub fn slot_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.grads[index]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_scaled(&mut self, other: &GradStore, scale: f64) {
        debug_assert_eq!(self.grads.len(), other.grads.len());
        for (dst, src) in self.grads.iter_mut().zip(&other.grads) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Global L2 norm over every coordinate.
    pub fn global_norm(&self) -> f64 {
        math::sqrt(
            self.grads
                .iter()
                .map(|g| g.iter().map(|v| v * v).sum::<f64>())
                .sum(),
        )
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.grads {
            out.extend_from_slice(g);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.grads
            .iter()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }
}
