//! Plain (tape-free) layer evaluations: dense affine, ReLU, and a single
//! LSTM cell step. These back the fast inference paths; training goes
//! through [`crate::neural::Graph`], and the gradient checks pin both to the
//! same arithmetic.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::neural::graph::matmul_acc;
use crate::neural::{NeuralError, Tensor};

/// y = x*W + b with the bias row broadcast over the rows of `x`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NeuralError> {
    let (r, k) = (x.rows(), x.cols());
    let (wk, c) = (w.rows(), w.cols());
    if k != wk || b.cols() != c || b.rows() != 1 {
        return Err(NeuralError::ShapeMismatch {
            ctx: "dense_forward",
            lhs: vec![r, k],
            rhs: vec![wk, c],
        });
    }
    let mut out = vec![0.0; r * c];
    for row in out.chunks_exact_mut(c) {
        row.copy_from_slice(b.data());
    }
    matmul_acc(x.data(), r, k, w.data(), c, &mut out);
    Tensor::new(vec![r, c], out)
}

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    let data: Vec<f64> = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("relu preserves finiteness")
}

/// The weight triple of one LSTM layer: input map, recurrent map, and gate
/// biases, each spanning the four gates [input|forget|candidate|output].
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    /// (input_dim x 4*hidden)
    pub wx: &'a Tensor,
    /// (hidden x 4*hidden)
    pub wh: &'a Tensor,
    /// (1 x 4*hidden)
    pub b: &'a Tensor,
}

impl<'a> LstmWeights<'a> {
    pub fn hidden_dim(&self) -> usize {
        self.wh.rows()
    }
}

/// One batched LSTM cell step: `h` and `c` are (rows x hidden) and are
/// updated in place from the input `x` (rows x input_dim).
pub fn lstm_step(
    x: &Tensor,
    h: &mut Tensor,
    c: &mut Tensor,
    weights: &LstmWeights<'_>,
) -> Result<(), NeuralError> {
    let r = x.rows();
    let hdim = weights.hidden_dim();
    if weights.wx.rows() != x.cols()
        || weights.wx.cols() != 4 * hdim
        || weights.wh.cols() != 4 * hdim
        || weights.b.cols() != 4 * hdim
        || h.rows() != r
        || h.cols() != hdim
        || c.rows() != r
        || c.cols() != hdim
    {
        return Err(NeuralError::ShapeMismatch {
            ctx: "lstm_step",
            lhs: vec![r, x.cols()],
            rhs: vec![weights.wx.rows(), weights.wx.cols()],
        });
    }
    let mut gates = vec![0.0; r * 4 * hdim];
    for row in gates.chunks_exact_mut(4 * hdim) {
        row.copy_from_slice(weights.b.data());
    }
    matmul_acc(x.data(), r, x.cols(), weights.wx.data(), 4 * hdim, &mut gates);
    matmul_acc(h.data(), r, hdim, weights.wh.data(), 4 * hdim, &mut gates);
    lstm_cell_inplace(&gates, r, hdim, h.data_mut(), c.data_mut());
    Ok(())
}

/// Applies the cell update given precomputed gate pre-activations; `h` and
/// `c` hold the previous step on entry and the new step on exit.
pub(crate) fn lstm_cell_inplace(gates: &[f64], rows: usize, hdim: usize, h: &mut [f64], c: &mut [f64]) {
    for row in 0..rows {
        let gofs = row * 4 * hdim;
        let ofs = row * hdim;
        for u in 0..hdim {
            let i = math::sigmoid(gates[gofs + u]);
            let f = math::sigmoid(gates[gofs + hdim + u]);
            let g = math::tanh(gates[gofs + 2 * hdim + u]);
            let o = math::sigmoid(gates[gofs + 3 * hdim + u]);
            let cn = f * c[ofs + u] + i * g;
            c[ofs + u] = cn;
            h[ofs + u] = o * math::tanh(cn);
        }
    }
}
