//! Minimal dense numeric core: 64-bit tensors, a reverse-mode autodiff
//! tape, dense and LSTM layers, ReLU, and Adam. Exactly what the recurrent
//! Q-network needs and nothing more; no GPU, no fusion beyond the LSTM cell.

mod adam;
mod graph;
mod lstm;

pub use adam::{adam_step, Adam, AdamHyper};
pub use graph::{Graph, NodeId};
pub use lstm::{dense_forward, lstm_step, relu, LstmWeights};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch in {ctx}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { ctx: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("non-finite value produced by {ctx}")]
    NonFinite { ctx: &'static str },
}

/// Dense row-major tensor of 64-bit reals. All entries are finite;
/// construction rejects NaN and infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NeuralError> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(NeuralError::ShapeMismatch {
                ctx: "Tensor::new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        if !buffer_is_finite(&data) {
            return Err(NeuralError::NonFinite { ctx: "Tensor::new" });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows under the 2-D view; a vector counts as one row.
    pub fn rows(&self) -> usize {
        if self.shape.len() < 2 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Columns under the 2-D view.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }
}

/// Named collection of parameter tensors with mirrored gradient buffers.
/// Iteration order is the insertion order and is fixed for a given network,
/// so optimizer state and checkpoints line up deterministically.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, t: Tensor) {
        debug_assert!(!self.names.iter().any(|n| n == name), "duplicate param {name}");
        self.grads.push(Tensor::zeros(t.shape.clone()));
        self.tensors.push(t);
        self.names.push(String::from(name));
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.tensors[self.index_of(name).unwrap_or_else(|| panic!("no param {name}"))]
    }

    pub fn tensor_at(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_at_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn grad_at(&self, i: usize) -> &Tensor {
        &self.grads[i]
    }

    pub fn grad_at_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.grads[i]
    }

    pub fn name_at(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data.fill(0.0);
        }
    }
}

/// Single-pass finiteness check; any NaN or infinity poisons the sum.
pub(crate) fn buffer_is_finite(buf: &[f64]) -> bool {
    buf.iter().sum::<f64>().is_finite()
}
