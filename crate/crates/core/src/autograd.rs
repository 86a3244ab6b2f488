//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation in execution order; [`Graph::backward`]
//! walks the tape in reverse. Nodes that do not depend on a trainable
//! parameter carry no gradient, which is how stop-gradient is expressed:
//! constants and frozen parameter groups are leaves without gradient.

use std::collections::HashMap;

use crate::params::{Group, ParamId, ParamStore};
use crate::tensor::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

#[derive(Debug)]
struct LstmCache {
    /// Gate activations i, f, g, o, each `[T × H]`.
    gates: [Matrix; 4],
    cell: Matrix,
    cell_tanh: Matrix,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Matrix, rstd: Vec<f64> },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
    MeanRows(NodeId),
    Norm(NodeId),
    Lstm { x: NodeId, wih: NodeId, whh: NodeId, b: NodeId, cache: Box<LstmCache> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Per-parameter gradients, indexed like the [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn new(n_params: usize) -> Self {
        Self { grads: vec![None; n_params] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add(&mut self, id: ParamId, g: &Matrix) {
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }

    /// Largest absolute gradient entry over the given parameters (0 when absent).
    pub fn max_abs(&self, ids: impl IntoIterator<Item = ParamId>) -> f64 {
        ids.into_iter()
            .filter_map(|id| self.get(id))
            .fold(0.0, |m, g| m.max(g.max_abs()))
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
    frozen: Vec<Group>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parameters of `group` enter this graph as constants.
    pub fn freeze(&mut self, group: Group) {
        if !self.frozen.contains(&group) {
            self.frozen.push(group);
        }
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let trainable = !self.frozen.contains(&store.spec(id).group);
        let node = self.push(store.get(id).clone(), Op::Param(id), trainable);
        self.param_nodes.insert(id, node);
        node
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_bt(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMulBt(a, b), ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    /// Adds the `[1 × m]` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let bv = self.value(b);
        assert_eq!(bv.rows(), 1, "add_row expects a row vector");
        assert_eq!(bv.cols(), self.value(a).cols(), "add_row width mismatch");
        let mut v = self.value(a).clone();
        let bias = bv.as_slice().to_vec();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::AddRow(a, b), ng)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh()));
        let ng = self.ng(a);
        self.push(v, Op::Gelu(a), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` for `j > i` is masked out.
    pub fn softmax_rows(&mut self, a: NodeId, causal: bool) -> NodeId {
        let x = self.value(a);
        let mut y = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let visible = if causal { (r + 1).min(x.cols()) } else { x.cols() };
            let row = &x.row(r)[..visible];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = y.row_mut(r);
            let mut sum = 0.0;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in &mut out[..visible] {
                *o /= sum;
            }
        }
        let ng = self.ng(a);
        self.push(y, Op::Softmax(a), ng)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = self.value(gamma).as_slice();
        let b = self.value(beta).as_slice();
        assert_eq!(g.len(), cols, "layer norm gain width");
        let mut xhat = Matrix::zeros(rows, cols);
        let mut y = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(rs);
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat.set(r, c, h);
                y.set(r, c, h * g[c] + b[c]);
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(y, Op::LayerNorm { x, gamma, beta, xhat, rstd }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let v = Matrix::concat_cols(&parts.iter().map(|&p| self.value(p)).collect::<Vec<_>>());
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let v = Matrix::concat_rows(&parts.iter().map(|&p| self.value(p)).collect::<Vec<_>>());
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(v, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice_rows(start, len);
        let ng = self.ng(a);
        self.push(v, Op::SliceRows(a, start), ng)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice_cols(start, len);
        let ng = self.ng(a);
        self.push(v, Op::SliceCols(a, start), ng)
    }

    /// Output row `r` is input row `index[r]`.
    pub fn gather_rows(&mut self, a: NodeId, index: Vec<usize>) -> NodeId {
        let src = self.value(a);
        let mut v = Matrix::zeros(index.len(), src.cols());
        for (r, &i) in index.iter().enumerate() {
            v.row_mut(r).copy_from_slice(src.row(i));
        }
        let ng = self.ng(a);
        self.push(v, Op::GatherRows(a, index), ng)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mean_rows();
        let ng = self.ng(a);
        self.push(v, Op::MeanRows(a), ng)
    }

    /// Euclidean norm of all entries, as a `[1 × 1]` node.
    pub fn norm(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::row_vector(vec![self.value(a).frobenius_norm()]);
        let ng = self.ng(a);
        self.push(v, Op::Norm(a), ng)
    }

    /// One LSTM layer over the rows of `x`; returns all hidden states `[T × H]`.
    /// `wih` is `[in × 4H]`, `whh` is `[H × 4H]`, `b` is `[1 × 4H]`, gate order i, f, g, o.
    pub fn lstm(&mut self, x: NodeId, wih: NodeId, whh: NodeId, b: NodeId) -> NodeId {
        let xw = self.value(x).matmul(self.value(wih));
        let whh_v = self.value(whh);
        let bias = self.value(b).as_slice();
        let hidden = whh_v.rows();
        let steps = xw.rows();
        let mut gates = [
            Matrix::zeros(steps, hidden),
            Matrix::zeros(steps, hidden),
            Matrix::zeros(steps, hidden),
            Matrix::zeros(steps, hidden),
        ];
        let mut cell = Matrix::zeros(steps, hidden);
        let mut cell_tanh = Matrix::zeros(steps, hidden);
        let mut h = Matrix::zeros(steps, hidden);
        let mut h_prev = vec![0.0; hidden];
        let mut c_prev = vec![0.0; hidden];
        let mut z = vec![0.0; 4 * hidden];
        for t in 0..steps {
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = xw.get(t, k) + bias[k];
            }
            for (p, &hp) in h_prev.iter().enumerate() {
                if hp == 0.0 {
                    continue;
                }
                for (zk, w) in z.iter_mut().zip(whh_v.row(p)) {
                    *zk += hp * w;
                }
            }
            for j in 0..hidden {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hidden + j]);
                let g = z[2 * hidden + j].tanh();
                let o = sigmoid(z[3 * hidden + j]);
                let c = f * c_prev[j] + i * g;
                let tc = c.tanh();
                gates[0].set(t, j, i);
                gates[1].set(t, j, f);
                gates[2].set(t, j, g);
                gates[3].set(t, j, o);
                cell.set(t, j, c);
                cell_tanh.set(t, j, tc);
                h.set(t, j, o * tc);
                c_prev[j] = c;
                h_prev[j] = o * tc;
            }
        }
        let ng = self.ng(x) || self.ng(wih) || self.ng(whh) || self.ng(b);
        let cache = Box::new(LstmCache { gates, cell, cell_tanh });
        self.push(h, Op::Lstm { x, wih, whh, b, cache }, ng)
    }

    /// Reverse pass from the given `(node, upstream gradient)` seeds.
    pub fn backward(&self, seeds: &[(NodeId, Matrix)], n_params: usize) -> Gradients {
        let mut grads: Vec<Option<Matrix>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        let mut last = 0;
        for (id, g) in seeds {
            assert_eq!(self.value(*id).shape(), g.shape(), "seed gradient shape");
            if self.ng(*id) {
                accumulate(&mut grads, *id, g.clone());
                last = last.max(id.0);
            }
        }
        let mut out = Gradients::new(n_params);
        for idx in (0..=last).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, g, &mut grads, &mut out);
        }
        out
    }

    fn propagate(&self, node: &Node, g: Matrix, grads: &mut [Option<Matrix>], out: &mut Gradients) {
        let needs = |id: NodeId| self.nodes[id.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Param(pid) => out.add(*pid, &g),
            Op::MatMul(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, g.matmul_bt(self.value(*b)));
                }
                if needs(*b) {
                    accumulate(grads, *b, self.value(*a).matmul_at(&g));
                }
            }
            Op::MatMulBt(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, g.matmul(self.value(*b)));
                }
                if needs(*b) {
                    accumulate(grads, *b, g.matmul_at(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if needs(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::Sub(a, b) => {
                if needs(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
                if needs(*a) {
                    accumulate(grads, *a, g);
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if needs(*b) {
                    accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, b) => {
                if needs(*b) {
                    accumulate(grads, *b, g.col_sums());
                }
                if needs(*a) {
                    accumulate(grads, *a, g);
                }
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.map(|v| v * s)),
            Op::Gelu(a) => {
                let d = g.zip_map(self.value(*a), |gv, x| {
                    let inner = GELU_K * (x + GELU_C * x * x * x);
                    let t = inner.tanh();
                    let dinner = GELU_K * (1.0 + 3.0 * GELU_C * x * x);
                    gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)
                });
                accumulate(grads, *a, d);
            }
            Op::Tanh(a) => {
                let d = g.zip_map(&node.value, |gv, y| gv * (1.0 - y * y));
                accumulate(grads, *a, d);
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let s = dot(g.row(r), y.row(r));
                    for c in 0..y.cols() {
                        d.set(r, c, y.get(r, c) * (g.get(r, c) - s));
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let gam = self.value(*gamma).as_slice();
                let (rows, cols) = xhat.shape();
                if needs(*gamma) {
                    let mut dg = Matrix::zeros(1, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            dg.as_mut_slice()[c] += g.get(r, c) * xhat.get(r, c);
                        }
                    }
                    accumulate(grads, *gamma, dg);
                }
                if needs(*beta) {
                    accumulate(grads, *beta, g.col_sums());
                }
                if needs(*x) {
                    let mut dx = Matrix::zeros(rows, cols);
                    let n = cols as f64;
                    for r in 0..rows {
                        let gh: Vec<f64> = (0..cols).map(|c| g.get(r, c) * gam[c]).collect();
                        let mean_gh = gh.iter().sum::<f64>() / n;
                        let mean_ghx =
                            gh.iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..cols {
                            dx.set(r, c, rstd[r] * (gh[c] - mean_gh - xhat.get(r, c) * mean_ghx));
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if needs(p) {
                        accumulate(grads, p, g.slice_cols(start, w));
                    }
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    if needs(p) {
                        accumulate(grads, p, g.slice_rows(start, h));
                    }
                    start += h;
                }
            }
            Op::SliceRows(a, start) => {
                let src = self.value(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    d.row_mut(start + r).copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, d);
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    d.row_mut(r)[*start..start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, d);
            }
            Op::GatherRows(a, index) => {
                let src = self.value(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (r, &i) in index.iter().enumerate() {
                    for (dv, gv) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                        *dv += gv;
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::MeanRows(a) => {
                let src = self.value(*a);
                let inv = 1.0 / src.rows() as f64;
                let d = Matrix::from_fn(src.rows(), src.cols(), |_, c| g.get(0, c) * inv);
                accumulate(grads, *a, d);
            }
            Op::Norm(a) => {
                let n = node.value.get(0, 0);
                let s = if n > 0.0 { g.get(0, 0) / n } else { 0.0 };
                accumulate(grads, *a, self.value(*a).map(|v| v * s));
            }
            Op::Lstm { x, wih, whh, b, cache } => {
                self.lstm_backward(&node.value, &g, (*x, *wih, *whh, *b), cache, grads);
            }
        }
    }

    fn lstm_backward(
        &self,
        h: &Matrix,
        dh_out: &Matrix,
        (x, wih, whh, b): (NodeId, NodeId, NodeId, NodeId),
        cache: &LstmCache,
        grads: &mut [Option<Matrix>],
    ) {
        let whh_v = self.value(whh);
        let (steps, hidden) = h.shape();
        let [ig, fg, gg, og] = &cache.gates;
        let mut dz = Matrix::zeros(steps, 4 * hidden);
        let mut dh_next = vec![0.0; hidden];
        let mut dc_next = vec![0.0; hidden];
        for t in (0..steps).rev() {
            for j in 0..hidden {
                let dh = dh_out.get(t, j) + dh_next[j];
                let (i, f, gv, o) = (ig.get(t, j), fg.get(t, j), gg.get(t, j), og.get(t, j));
                let tc = cache.cell_tanh.get(t, j);
                let c_prev = if t > 0 { cache.cell.get(t - 1, j) } else { 0.0 };
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dc_next[j] = dc * f;
                dz.set(t, j, dc * gv * i * (1.0 - i));
                dz.set(t, hidden + j, dc * c_prev * f * (1.0 - f));
                dz.set(t, 2 * hidden + j, dc * i * (1.0 - gv * gv));
                dz.set(t, 3 * hidden + j, d_o * o * (1.0 - o));
            }
            let dzt = dz.row(t);
            for (p, dn) in dh_next.iter_mut().enumerate() {
                *dn = dot(dzt, whh_v.row(p));
            }
        }
        let needs = |id: NodeId| self.nodes[id.0].needs_grad;
        if needs(whh) && steps > 1 {
            let h_prev = h.slice_rows(0, steps - 1);
            let dz_tail = dz.slice_rows(1, steps - 1);
            accumulate(grads, whh, h_prev.matmul_at(&dz_tail));
        } else if needs(whh) {
            accumulate(grads, whh, Matrix::zeros(whh_v.rows(), whh_v.cols()));
        }
        if needs(b) {
            accumulate(grads, b, dz.col_sums());
        }
        if needs(wih) {
            accumulate(grads, wih, self.value(x).matmul_at(&dz));
        }
        if needs(x) {
            accumulate(grads, x, dz.matmul_bt(self.value(wih)));
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Init, LayoutBuilder};

    /// Central differences over every entry of every parameter.
    fn check(specs_seed: u64, build: impl Fn(&mut Graph, &ParamStore) -> NodeId, layout: LayoutBuilder) {
        let specs = layout.finish();
        let store = ParamStore::init(&specs, specs_seed);
        let mut g = Graph::new();
        let out = build(&mut g, &store);
        let seed = Matrix::filled(1, 1, 1.0);
        let grads = g.backward(&[(out, seed)], store.len());
        let eval = |s: &ParamStore| {
            let mut g = Graph::new();
            let o = build(&mut g, s);
            g.value(o).get(0, 0)
        };
        let h = 1e-5;
        for id in store.ids() {
            let analytic = grads.get(id).cloned().unwrap_or_else(|| {
                Matrix::zeros(store.get(id).rows(), store.get(id).cols())
            });
            for k in 0..store.get(id).len() {
                let mut plus = store.clone();
                plus.get_mut(id).as_mut_slice()[k] += h;
                let mut minus = store.clone();
                minus.get_mut(id).as_mut_slice()[k] -= h;
                let num = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.as_slice()[k];
                let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-5);
                assert!(err < 1e-5, "param {} entry {k}: analytic {a} numeric {num}", store.spec(id).name);
            }
        }
    }

    #[test]
    fn gradients_of_elementary_ops() {
        let mut l = LayoutBuilder::default();
        let x = l.add("x", 3, 4, Init::Uniform(1.0));
        let w = l.add("w", 4, 4, Init::Uniform(1.0));
        let b = l.add("b", 1, 4, Init::Uniform(1.0));
        let gam = l.add("gamma", 1, 4, Init::Uniform(1.0));
        check(
            1,
            move |g, s| {
                let xv = g.param(s, x);
                let wv = g.param(s, w);
                let bv = g.param(s, b);
                let gv = g.param(s, gam);
                let h = g.matmul(xv, wv);
                let h = g.add_row(h, bv);
                let hb = g.matmul_bt(h, xv);
                let hb = g.matmul(hb, xv);
                let h = g.add(h, hb);
                let h = g.gelu(h);
                let ln = g.layer_norm(h, gv, bv);
                let sm = g.softmax_rows(ln, true);
                let t = g.tanh(sm);
                let m = g.mul(t, xv);
                let cat = g.concat_cols(&[m, xv]);
                let sl = g.slice_cols(cat, 2, 5);
                let gat = g.gather_rows(sl, vec![2, 0, 0, 1]);
                let top = g.slice_rows(gat, 1, 3);
                let rows = g.concat_rows(&[top, sl]);
                let mean = g.mean_rows(rows);
                let sc = g.scale(mean, 0.7);
                let d = g.sub(sc, mean);
                let d = g.add(d, sc);
                g.norm(d)
            },
            l,
        );
    }

    #[test]
    fn lstm_gradients() {
        let mut l = LayoutBuilder::default();
        let x = l.add("x", 5, 3, Init::Uniform(1.0));
        let wih = l.add("wih", 3, 8, Init::FanIn(3));
        let whh = l.add("whh", 2, 8, Init::OrthogonalGates);
        let b = l.add("b", 1, 8, Init::Uniform(0.5));
        let wih2 = l.add("wih2", 2, 8, Init::FanIn(2));
        check(
            2,
            move |g, s| {
                let xv = g.param(s, x);
                let (wi, wh, bv) = (g.param(s, wih), g.param(s, whh), g.param(s, b));
                let h = g.lstm(xv, wi, wh, bv);
                let wi2 = g.param(s, wih2);
                let h2 = g.lstm(h, wi2, wh, bv);
                let all = g.concat_cols(&[h, h2]);
                g.norm(all)
            },
            l,
        );
    }

    #[test]
    fn frozen_group_gets_no_gradient() {
        let mut l = LayoutBuilder::default();
        let a = l.add("enc.a", 2, 2, Init::Uniform(1.0));
        let d = l.add("disc.d", 2, 2, Init::Uniform(1.0));
        let store = ParamStore::init(&l.finish(), 5);
        let mut g = Graph::new();
        g.freeze(Group::Discriminator);
        let (av, dv) = (g.param(&store, a), g.param(&store, d));
        let p = g.matmul(av, dv);
        let n = g.norm(p);
        let grads = g.backward(&[(n, Matrix::filled(1, 1, 1.0))], store.len());
        assert!(grads.get(a).is_some());
        assert!(grads.get(d).is_none());
    }
}
