//! Reverse-mode autodiff on a flat tape of 2-D nodes.
//!
//! Forward values are computed eagerly as nodes are appended; `backward`
//! walks the tape in reverse, so a node's gradient is complete by the time
//! it propagates to its inputs. Gradients of shared inputs accumulate,
//! which is what backpropagation through time over a weight-tied LSTM
//! unroll requires. Any NaN or infinity produced in either direction is an
//! error.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::neural::{buffer_is_finite, NeuralError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    /// Leaf holding externally supplied values (inputs, constants, params).
    Value,
    /// x*W + b, rows of b broadcast.
    Affine { x: NodeId, w: NodeId, b: NodeId },
    /// x*Wx + h*Wh + b; the fused pre-activation of all four LSTM gates.
    Affine2 { x: NodeId, wx: NodeId, h: NodeId, wh: NodeId, b: NodeId },
    /// LSTM cell update from packed gate pre-activations [i|f|g|o] and the
    /// previous cell state; output is packed [h'|c'].
    LstmCell { gates: NodeId, c_prev: NodeId },
    SliceCols { src: NodeId, start: usize },
    Relu { x: NodeId },
    Mul { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    /// Row-wise sum to a single column.
    RowSum { x: NodeId },
    /// Same data, different 2-D view.
    Reshape { x: NodeId },
    /// Mean over all entries, a 1x1 scalar.
    MeanAll { x: NodeId },
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    grad: Vec<f64>,
}

/// One forward/backward tape.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn rows(&self, id: NodeId) -> usize {
        self.nodes[id.0].rows
    }

    pub fn cols(&self, id: NodeId) -> usize {
        self.nodes[id.0].cols
    }

    pub fn value_of(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn grad_of(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Result<NodeId, NeuralError> {
        debug_assert_eq!(value.len(), rows * cols);
        if !buffer_is_finite(&value) {
            return Err(NeuralError::NonFinite { ctx: op_name(&op) });
        }
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node { op, rows, cols, value, grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Leaf node from raw row-major data.
    pub fn input(&mut self, rows: usize, cols: usize, data: &[f64]) -> Result<NodeId, NeuralError> {
        if data.len() != rows * cols {
            return Err(NeuralError::ShapeMismatch {
                ctx: "input",
                lhs: vec![rows, cols],
                rhs: vec![data.len()],
            });
        }
        self.push(Op::Value, rows, cols, data.to_vec())
    }

    /// Leaf node bound to a parameter tensor (2-D view).
    pub fn param(&mut self, t: &Tensor) -> Result<NodeId, NeuralError> {
        self.push(Op::Value, t.rows(), t.cols(), t.data().to_vec())
    }

    /// y = x*W + b.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NeuralError> {
        let (r, k) = (self.rows(x), self.cols(x));
        let (wk, c) = (self.rows(w), self.cols(w));
        if k != wk || self.cols(b) != c || self.rows(b) != 1 {
            return Err(self.shape_err("affine", x, w));
        }
        let mut out = vec![0.0; r * c];
        for row in out.chunks_exact_mut(c) {
            row.copy_from_slice(&self.nodes[b.0].value);
        }
        matmul_acc(
            &self.nodes[x.0].value,
            r,
            k,
            &self.nodes[w.0].value,
            c,
            &mut out,
        );
        self.push(Op::Affine { x, w, b }, r, c, out)
    }

    /// y = x*Wx + h*Wh + b, one buffer for all four gate pre-activations.
    pub fn affine2(
        &mut self,
        x: NodeId,
        wx: NodeId,
        h: NodeId,
        wh: NodeId,
        b: NodeId,
    ) -> Result<NodeId, NeuralError> {
        let (r, k) = (self.rows(x), self.cols(x));
        let c = self.cols(wx);
        if self.rows(wx) != k
            || self.rows(h) != r
            || self.rows(wh) != self.cols(h)
            || self.cols(wh) != c
            || self.cols(b) != c
            || self.rows(b) != 1
        {
            return Err(self.shape_err("affine2", x, wx));
        }
        let mut out = vec![0.0; r * c];
        for row in out.chunks_exact_mut(c) {
            row.copy_from_slice(&self.nodes[b.0].value);
        }
        matmul_acc(&self.nodes[x.0].value, r, k, &self.nodes[wx.0].value, c, &mut out);
        matmul_acc(
            &self.nodes[h.0].value,
            r,
            self.cols(h),
            &self.nodes[wh.0].value,
            c,
            &mut out,
        );
        self.push(Op::Affine2 { x, wx, h, wh, b }, r, c, out)
    }

    /// LSTM cell: `gates` is (rows x 4H) pre-activations ordered
    /// [input|forget|candidate|output], `c_prev` is (rows x H). The output
    /// packs [h'|c'] as (rows x 2H).
    pub fn lstm_cell(&mut self, gates: NodeId, c_prev: NodeId) -> Result<NodeId, NeuralError> {
        let (r, g4) = (self.rows(gates), self.cols(gates));
        let hdim = self.cols(c_prev);
        if g4 != 4 * hdim || self.rows(c_prev) != r {
            return Err(self.shape_err("lstm_cell", gates, c_prev));
        }
        let mut out = vec![0.0; r * 2 * hdim];
        let gv = &self.nodes[gates.0].value;
        let cv = &self.nodes[c_prev.0].value;
        for row in 0..r {
            let gofs = row * g4;
            let cofs = row * hdim;
            let oofs = row * 2 * hdim;
            for u in 0..hdim {
                let i = math::sigmoid(gv[gofs + u]);
                let f = math::sigmoid(gv[gofs + hdim + u]);
                let g = math::tanh(gv[gofs + 2 * hdim + u]);
                let o = math::sigmoid(gv[gofs + 3 * hdim + u]);
                let c = f * cv[cofs + u] + i * g;
                out[oofs + u] = o * math::tanh(c);
                out[oofs + hdim + u] = c;
            }
        }
        self.push(Op::LstmCell { gates, c_prev }, r, 2 * hdim, out)
    }

    pub fn slice_cols(&mut self, src: NodeId, start: usize, len: usize) -> Result<NodeId, NeuralError> {
        let (r, c) = (self.rows(src), self.cols(src));
        if start + len > c {
            return Err(self.shape_err("slice_cols", src, src));
        }
        let mut out = vec![0.0; r * len];
        let sv = &self.nodes[src.0].value;
        for row in 0..r {
            out[row * len..(row + 1) * len].copy_from_slice(&sv[row * c + start..row * c + start + len]);
        }
        self.push(Op::SliceCols { src, start }, r, len, out)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, NeuralError> {
        let out: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| v.max(0.0)).collect();
        let (r, c) = (self.rows(x), self.cols(x));
        self.push(Op::Relu { x }, r, c, out)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NeuralError> {
        self.elementwise(a, b, Op::Mul { a, b }, |x, y| x * y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NeuralError> {
        self.elementwise(a, b, Op::Sub { a, b }, |x, y| x - y)
    }

    fn elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId, NeuralError> {
        let (r, c) = (self.rows(a), self.cols(a));
        if self.rows(b) != r || self.cols(b) != c {
            return Err(self.shape_err(op_name(&op), a, b));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(op, r, c, out)
    }

    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId, NeuralError> {
        let (r, c) = (self.rows(x), self.cols(x));
        let v = &self.nodes[x.0].value;
        let out: Vec<f64> = (0..r).map(|row| v[row * c..(row + 1) * c].iter().sum()).collect();
        self.push(Op::RowSum { x }, r, 1, out)
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId, NeuralError> {
        if rows * cols != self.nodes[x.0].value.len() {
            return Err(self.shape_err("reshape", x, x));
        }
        let v = self.nodes[x.0].value.clone();
        self.push(Op::Reshape { x }, rows, cols, v)
    }

    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId, NeuralError> {
        let v = &self.nodes[x.0].value;
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::MeanAll { x }, 1, 1, vec![mean])
    }

    fn shape_err(&self, ctx: &'static str, a: NodeId, b: NodeId) -> NeuralError {
        NeuralError::ShapeMismatch {
            ctx,
            lhs: vec![self.rows(a), self.cols(a)],
            rhs: vec![self.rows(b), self.cols(b)],
        }
    }

    /// Reverse pass from a scalar root. Gradients accumulate into every
    /// node; read them back with [`Graph::grad_of`].
    pub fn backward(&mut self, root: NodeId) -> Result<(), NeuralError> {
        assert_eq!(self.nodes[root.0].value.len(), 1, "backward needs a scalar root");
        for n in &mut self.nodes {
            n.grad.fill(0.0);
        }
        self.nodes[root.0].grad[0] = 1.0;

        for idx in (0..=root.0).rev() {
            // A node's own gradient is final once every consumer (which
            // necessarily lives later on the tape) has been processed.
            if !buffer_is_finite(&self.nodes[idx].grad) {
                return Err(NeuralError::NonFinite { ctx: "backward" });
            }
            let op = self.nodes[idx].op;
            match op {
                Op::Value => {}
                Op::Affine { x, w, b } => self.back_affine(idx, x, w, b),
                Op::Affine2 { x, wx, h, wh, b } => {
                    self.back_affine(idx, x, wx, b);
                    self.back_matmul_pair(idx, h, wh);
                }
                Op::LstmCell { gates, c_prev } => self.back_lstm(idx, gates, c_prev),
                Op::SliceCols { src, start } => {
                    let (r, len) = (self.nodes[idx].rows, self.nodes[idx].cols);
                    let c = self.nodes[src.0].cols;
                    let (head, tail) = self.nodes.split_at_mut(idx);
                    let dz = &tail[0].grad;
                    let dst = &mut head[src.0].grad;
                    for row in 0..r {
                        for j in 0..len {
                            dst[row * c + start + j] += dz[row * len + j];
                        }
                    }
                }
                Op::Relu { x } => {
                    let (head, tail) = self.nodes.split_at_mut(idx);
                    let node = &tail[0];
                    let src = &mut head[x.0];
                    for i in 0..node.grad.len() {
                        if src.value[i] > 0.0 {
                            src.grad[i] += node.grad[i];
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let dz = self.nodes[idx].grad.clone();
                    if a == b {
                        let src = &mut self.nodes[a.0];
                        for i in 0..dz.len() {
                            src.grad[i] += 2.0 * dz[i] * src.value[i];
                        }
                    } else {
                        let av = self.nodes[a.0].value.clone();
                        let bv = self.nodes[b.0].value.clone();
                        for i in 0..dz.len() {
                            self.nodes[a.0].grad[i] += dz[i] * bv[i];
                            self.nodes[b.0].grad[i] += dz[i] * av[i];
                        }
                    }
                }
                Op::Sub { a, b } => {
                    let dz = self.nodes[idx].grad.clone();
                    for i in 0..dz.len() {
                        self.nodes[a.0].grad[i] += dz[i];
                        self.nodes[b.0].grad[i] -= dz[i];
                    }
                }
                Op::RowSum { x } => {
                    let (r, _) = (self.nodes[idx].rows, self.nodes[idx].cols);
                    let c = self.nodes[x.0].cols;
                    let (head, tail) = self.nodes.split_at_mut(idx);
                    let dz = &tail[0].grad;
                    let dst = &mut head[x.0].grad;
                    for row in 0..r {
                        let g = dz[row];
                        for j in 0..c {
                            dst[row * c + j] += g;
                        }
                    }
                }
                Op::Reshape { x } => {
                    let (head, tail) = self.nodes.split_at_mut(idx);
                    let dz = &tail[0].grad;
                    let dst = &mut head[x.0].grad;
                    for i in 0..dz.len() {
                        dst[i] += dz[i];
                    }
                }
                Op::MeanAll { x } => {
                    let g = self.nodes[idx].grad[0] / self.nodes[x.0].value.len() as f64;
                    for d in &mut self.nodes[x.0].grad {
                        *d += g;
                    }
                }
            }
        }
        Ok(())
    }

    /// Shared backward for y = x*W (+ broadcast bias b).
    fn back_affine(&mut self, idx: usize, x: NodeId, w: NodeId, b: NodeId) {
        self.back_matmul_pair(idx, x, w);
        let c = self.nodes[idx].cols;
        let r = self.nodes[idx].rows;
        let (head, tail) = self.nodes.split_at_mut(idx);
        let dz = &tail[0].grad;
        let db = &mut head[b.0].grad;
        for row in 0..r {
            for j in 0..c {
                db[j] += dz[row * c + j];
            }
        }
    }

    /// dX += dZ * W^T and dW += X^T * dZ for one matmul term of the output
    /// at `idx`. Gradient buffers are taken out and restored so values and
    /// gradients of distinct nodes can be touched together.
    fn back_matmul_pair(&mut self, idx: usize, x: NodeId, w: NodeId) {
        let (r, c) = (self.nodes[idx].rows, self.nodes[idx].cols);
        let k = self.nodes[x.0].cols;
        debug_assert!(x.0 < idx && w.0 < idx && x != w);
        // dX += dZ * W^T
        let mut dx = core::mem::take(&mut self.nodes[x.0].grad);
        matmul_nt_acc(&self.nodes[idx].grad, r, c, &self.nodes[w.0].value, k, &mut dx);
        self.nodes[x.0].grad = dx;
        // dW += X^T * dZ
        let mut dw = core::mem::take(&mut self.nodes[w.0].grad);
        matmul_tn_acc(&self.nodes[x.0].value, r, k, &self.nodes[idx].grad, c, &mut dw);
        self.nodes[w.0].grad = dw;
    }

    fn back_lstm(&mut self, idx: usize, gates: NodeId, c_prev: NodeId) {
        let r = self.nodes[idx].rows;
        let hdim = self.nodes[idx].cols / 2;
        let mut dg = vec![0.0; r * 4 * hdim];
        let mut dcp = vec![0.0; r * hdim];
        {
            let dout = &self.nodes[idx].grad;
            let out = &self.nodes[idx].value;
            let gv = &self.nodes[gates.0].value;
            let cv = &self.nodes[c_prev.0].value;
            for row in 0..r {
                let gofs = row * 4 * hdim;
                let cofs = row * hdim;
                let oofs = row * 2 * hdim;
                for u in 0..hdim {
                    // Recompute the activations from the stored
                    // pre-activations instead of caching them forward.
                    let i = math::sigmoid(gv[gofs + u]);
                    let f = math::sigmoid(gv[gofs + hdim + u]);
                    let g = math::tanh(gv[gofs + 2 * hdim + u]);
                    let o = math::sigmoid(gv[gofs + 3 * hdim + u]);
                    let c = out[oofs + hdim + u];
                    let t = math::tanh(c);
                    let dh = dout[oofs + u];
                    let dc_direct = dout[oofs + hdim + u];
                    let dct = dh * o * (1.0 - t * t) + dc_direct;
                    dg[gofs + u] += dct * g * i * (1.0 - i);
                    dg[gofs + hdim + u] += dct * cv[cofs + u] * f * (1.0 - f);
                    dg[gofs + 2 * hdim + u] += dct * i * (1.0 - g * g);
                    dg[gofs + 3 * hdim + u] += dh * t * o * (1.0 - o);
                    dcp[cofs + u] += dct * f;
                }
            }
        }
        for (d, s) in self.nodes[gates.0].grad.iter_mut().zip(&dg) {
            *d += s;
        }
        for (d, s) in self.nodes[c_prev.0].grad.iter_mut().zip(&dcp) {
            *d += s;
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Value => "value",
        Op::Affine { .. } => "affine",
        Op::Affine2 { .. } => "affine2",
        Op::LstmCell { .. } => "lstm_cell",
        Op::SliceCols { .. } => "slice_cols",
        Op::Relu { .. } => "relu",
        Op::Mul { .. } => "mul",
        Op::Sub { .. } => "sub",
        Op::RowSum { .. } => "row_sum",
        Op::Reshape { .. } => "reshape",
        Op::MeanAll { .. } => "mean_all",
    }
}

/// out += a (r x k) * b (k x c), row-major.
pub(crate) fn matmul_acc(a: &[f64], r: usize, k: usize, b: &[f64], c: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), k * c);
    debug_assert_eq!(out.len(), r * c);
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * c..(i + 1) * c];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * c..(kk + 1) * c];
            for j in 0..c {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// out (k x c) += a^T (k x r) * b (r x c), with a given as (r x k).
fn matmul_tn_acc(a: &[f64], r: usize, k: usize, b: &[f64], c: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), k * c);
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * c..(i + 1) * c];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[kk * c..(kk + 1) * c];
            for j in 0..c {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// out (r x k) += a (r x c) * b^T (c x k), with b given as (k x c).
fn matmul_nt_acc(a: &[f64], r: usize, c: usize, b: &[f64], k: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), r * k);
    debug_assert_eq!(b.len(), k * c);
    for i in 0..r {
        let arow = &a[i * c..(i + 1) * c];
        let orow = &mut out[i * k..(i + 1) * k];
        for kk in 0..k {
            let brow = &b[kk * c..(kk + 1) * c];
            let mut s = 0.0;
            for j in 0..c {
                s += arow[j] * brow[j];
            }
            orow[kk] += s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn randv(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn affine_identity_and_bias() {
        let mut g = Graph::new();
        let x = g.input(1, 3, &[1.0, -2.0, 3.0]).unwrap();
        let eye = g.input(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let zero = g.input(1, 3, &[0.0; 3]).unwrap();
        let y = g.affine(x, eye, zero).unwrap();
        assert_eq!(g.value_of(y), &[1.0, -2.0, 3.0]);

        let xz = g.input(1, 3, &[0.0; 3]).unwrap();
        let b = g.input(1, 3, &[0.5, 0.25, -1.0]).unwrap();
        let y2 = g.affine(xz, eye, b).unwrap();
        assert_eq!(g.value_of(y2), &[0.5, 0.25, -1.0]);
    }

    #[test]
    fn affine_matches_naive_multiply() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (r, k, c) = (3, 4, 5);
        let xv = randv(&mut rng, r * k);
        let wv = randv(&mut rng, k * c);
        let bv = randv(&mut rng, c);
        let mut g = Graph::new();
        let x = g.input(r, k, &xv).unwrap();
        let w = g.input(k, c, &wv).unwrap();
        let b = g.input(1, c, &bv).unwrap();
        let y = g.affine(x, w, b).unwrap();
        // Independent naive triple loop.
        for i in 0..r {
            for j in 0..c {
                let mut s = bv[j];
                for kk in 0..k {
                    s += xv[i * k + kk] * wv[kk * c + j];
                }
                assert!((g.value_of(y)[i * c + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relu_values_and_gradient() {
        let mut g = Graph::new();
        let x = g.input(1, 3, &[-1.0, 0.0, 2.0]).unwrap();
        let y = g.relu(x).unwrap();
        assert_eq!(g.value_of(y), &[0.0, 0.0, 2.0]);
        let s = g.mean_all(y).unwrap();
        g.backward(s).unwrap();
        // Subgradient at exactly zero is zero by convention.
        assert_eq!(g.grad_of(x), &[0.0, 0.0, 1.0 / 3.0]);
    }

    #[test]
    fn linear_least_squares_gradient_matches_closed_form() {
        // loss = 0.5 * ||x*W - y||^2 for one row: dW = x^T (xW - y).
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let (k, c) = (4, 3);
        let xv = randv(&mut rng, k);
        let wv = randv(&mut rng, k * c);
        let yv = randv(&mut rng, c);
        let mut g = Graph::new();
        let x = g.input(1, k, &xv).unwrap();
        let w = g.input(k, c, &wv).unwrap();
        let zero = g.input(1, c, &[0.0; 3]).unwrap();
        let pred = g.affine(x, w, zero).unwrap();
        let y = g.input(1, c, &yv).unwrap();
        let e = g.sub(pred, y).unwrap();
        let e2 = g.mul(e, e).unwrap();
        let half = g.input(1, c, &[0.5; 3]).unwrap();
        let scaled = g.mul(e2, half).unwrap();
        let rs = g.row_sum(scaled).unwrap();
        let loss = g.mean_all(rs).unwrap();
        g.backward(loss).unwrap();
        let resid: Vec<f64> = (0..c)
            .map(|j| (0..k).map(|kk| xv[kk] * wv[kk * c + j]).sum::<f64>() - yv[j])
            .collect();
        for kk in 0..k {
            for j in 0..c {
                let expect = xv[kk] * resid[j];
                let got = g.grad_of(w)[kk * c + j];
                assert!((got - expect).abs() < 1e-12, "dW[{kk},{j}] {got} vs {expect}");
            }
        }
    }

    /// Central finite differences on a scalar-valued graph builder. Only
    /// the first `ids.len()` inputs are differentiated; the rest are
    /// constants of the function.
    fn finite_diff_check(
        build: impl Fn(&mut Graph, &[Vec<f64>]) -> (Vec<NodeId>, NodeId),
        inputs: &[Vec<f64>],
        tol: f64,
    ) {
        let mut g = Graph::new();
        let (ids, root) = build(&mut g, inputs);
        g.backward(root).unwrap();
        let grads: Vec<Vec<f64>> = ids.iter().map(|&id| g.grad_of(id).to_vec()).collect();
        let h = 1e-5;
        for (which, input) in inputs.iter().enumerate().take(ids.len()) {
            for i in 0..input.len() {
                let mut plus = inputs.to_vec();
                plus[which][i] += h;
                let mut minus = inputs.to_vec();
                minus[which][i] -= h;
                let mut gp = Graph::new();
                let (_, rp) = build(&mut gp, &plus);
                let mut gm = Graph::new();
                let (_, rm) = build(&mut gm, &minus);
                let fd = (gp.scalar(rp) - gm.scalar(rm)) / (2.0 * h);
                let ad = grads[which][i];
                let denom = ad.abs().max(fd.abs()).max(1e-6);
                assert!(
                    ((ad - fd) / denom).abs() < tol,
                    "input {which} coord {i}: ad {ad} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn lstm_cell_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let (r, hdim) = (2, 3);
        let gates = randv(&mut rng, r * 4 * hdim);
        let c_prev = randv(&mut rng, r * hdim);
        // Weighted sum of outputs keeps every path to the root active.
        let weights = randv(&mut rng, r * 2 * hdim);
        finite_diff_check(
            |g, inp| {
                let gates = g.input(r, 4 * hdim, &inp[0]).unwrap();
                let cp = g.input(r, hdim, &inp[1]).unwrap();
                let out = g.lstm_cell(gates, cp).unwrap();
                let w = g.input(r, 2 * hdim, &inp[2]).unwrap();
                let prod = g.mul(out, w).unwrap();
                let rs = g.row_sum(prod).unwrap();
                let m = g.reshape(rs, 1, r).unwrap();
                let root = g.mean_all(m).unwrap();
                (alloc::vec![gates, cp], root)
            },
            &[gates, c_prev, weights],
            1e-6,
        );
    }

    #[test]
    fn affine2_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let (r, k, hd, c) = (2, 3, 2, 4);
        let inputs = alloc::vec![
            randv(&mut rng, r * k),
            randv(&mut rng, k * c),
            randv(&mut rng, r * hd),
            randv(&mut rng, hd * c),
            randv(&mut rng, c),
            randv(&mut rng, r * c),
        ];
        finite_diff_check(
            |g, inp| {
                let x = g.input(r, k, &inp[0]).unwrap();
                let wx = g.input(k, c, &inp[1]).unwrap();
                let h = g.input(r, hd, &inp[2]).unwrap();
                let wh = g.input(hd, c, &inp[3]).unwrap();
                let b = g.input(1, c, &inp[4]).unwrap();
                let y = g.affine2(x, wx, h, wh, b).unwrap();
                let w = g.input(r, c, &inp[5]).unwrap();
                let prod = g.mul(y, w).unwrap();
                let rs = g.row_sum(prod).unwrap();
                let m = g.reshape(rs, 1, r).unwrap();
                let root = g.mean_all(m).unwrap();
                (alloc::vec![x, wx, h, wh, b], root)
            },
            &inputs,
            1e-6,
        );
    }

    #[test]
    fn shared_weights_accumulate_gradients_across_uses() {
        // Two-step unroll with the same W: the gradient equals the sum of
        // the two single-use gradients.
        let wv = alloc::vec![0.3, -0.2, 0.5, 0.7];
        let xv = alloc::vec![1.0, 2.0];
        let build_two_step = |g: &mut Graph, w_data: &[f64]| {
            let x = g.input(1, 2, &xv).unwrap();
            let w = g.input(2, 2, w_data).unwrap();
            let zero = g.input(1, 2, &[0.0, 0.0]).unwrap();
            let h1 = g.affine(x, w, zero).unwrap();
            let h2 = g.affine(h1, w, zero).unwrap();
            let rs = g.row_sum(h2).unwrap();
            let root = g.mean_all(rs).unwrap();
            (w, root)
        };
        let mut g = Graph::new();
        let (w, root) = build_two_step(&mut g, &wv);
        g.backward(root).unwrap();
        let ad = g.grad_of(w).to_vec();
        // Finite differences as the independent oracle.
        let h = 1e-6;
        for i in 0..4 {
            let mut p = wv.clone();
            p[i] += h;
            let mut m = wv.clone();
            m[i] -= h;
            let mut gp = Graph::new();
            let (_, rp) = build_two_step(&mut gp, &p);
            let mut gm = Graph::new();
            let (_, rm) = build_two_step(&mut gm, &m);
            let fd = (gp.scalar(rp) - gm.scalar(rm)) / (2.0 * h);
            assert!((ad[i] - fd).abs() < 1e-6, "coord {i}: {} vs {fd}", ad[i]);
        }
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut g = Graph::new();
        let big = g.input(1, 1, &[1e308]).unwrap();
        let r = g.mul(big, big);
        assert!(matches!(r, Err(NeuralError::NonFinite { .. })));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::new();
        let x = g.input(1, 3, &[0.0; 3]).unwrap();
        let w = g.input(2, 2, &[0.0; 4]).unwrap();
        let b = g.input(1, 2, &[0.0; 2]).unwrap();
        assert!(matches!(g.affine(x, w, b), Err(NeuralError::ShapeMismatch { .. })));
    }
}
