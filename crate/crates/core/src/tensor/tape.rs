//! Reverse-mode differentiation over an explicitly recorded operation tape.
//!
//! Every operation appends a node holding its output value and the ids of its
//! inputs. [`Tape::backward`] walks the nodes in reverse, accumulating
//! adjoints, and returns the gradients of every parameter that was read.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::matrix::{matmul_nt_acc, matmul_tn_acc};
use super::ops::{cross_entropy, sigmoid, softmax_in_place};
use super::{Gradients, Matrix, ParamId, ParamStore};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<S> {
    Input,
    Param(ParamId),
    Lookup { table: ParamId, row: usize },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddColBroadcast(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, S),
    Sigmoid(NodeId),
    Tanh(NodeId),
    SoftmaxRows(NodeId),
    Transpose(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    CrossEntropy { logits: NodeId, dlogits: Matrix<S> },
}

struct Node<S> {
    op: Op<S>,
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Matrix<S>>,
    requires_grad: bool,
}

pub struct Tape<'a, S> {
    store: &'a ParamStore<S>,
    nodes: Vec<Node<S>>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'a, S: Scalar> Tape<'a, S> {
    pub fn new(store: &'a ParamStore<S>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'a ParamStore<S> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<S> {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(pid)) => self.store.value(*pid),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    fn push(&mut self, op: Op<S>, value: Matrix<S>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, value: Matrix<S>) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.0] {
            return node;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: true,
        });
        let node = NodeId(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(node);
        node
    }

    /// Row `row` of parameter `table`, returned as a column vector.
    pub fn lookup(&mut self, table: ParamId, row: usize) -> Result<NodeId> {
        let t = self.store.value(table);
        if row >= t.rows() {
            return Err(Error::Range {
                id: row,
                size: t.rows(),
            });
        }
        let v = Matrix::column(t.row(row).to_vec());
        Ok(self.push(Op::Lookup { table, row }, v, true))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), v, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), v, rg))
    }

    /// Adds column vector `v` (r×1) to every column of `m` (r×c).
    pub fn add_col_broadcast(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (mv, vv) = (self.value(m), self.value(v));
        if vv.cols() != 1 || vv.rows() != mv.rows() {
            return Err(Error::Dimension(format!(
                "add_col_broadcast: {}x{} plus {}x{}",
                mv.rows(),
                mv.cols(),
                vv.rows(),
                vv.cols()
            )));
        }
        let mut out = mv.clone();
        for r in 0..out.rows() {
            let b = vv[(r, 0)];
            out.row_mut(r).iter_mut().for_each(|x| *x += b);
        }
        let rg = self.rg(m) || self.rg(v);
        Ok(self.push(Op::AddColBroadcast(m, v), out, rg))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Hadamard(a, b), v, rg))
    }

    pub fn scale(&mut self, a: NodeId, k: S) -> NodeId {
        let v = self.value(a).scale(k);
        let rg = self.rg(a);
        self.push(Op::Scale(a, k), v, rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a), v, rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.tanh());
        let rg = self.rg(a);
        self.push(Op::Tanh(a), v, rg)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        let rg = self.rg(a);
        self.push(Op::SoftmaxRows(a), v, rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(Op::Transpose(a), v, rg)
    }

    /// Stacks the inputs vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let cols = parts
            .first()
            .map(|&p| self.value(p).cols())
            .ok_or_else(|| Error::Dimension("concat_rows of nothing".into()))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::Dimension(format!(
                    "concat_rows: {} columns vs {cols}",
                    v.cols()
                )));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let v = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), v, rg))
    }

    /// Places the inputs side by side; all must share a row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::Dimension("concat_cols of nothing".into()))?;
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::Dimension(format!(
                    "concat_cols: {} rows vs {rows}",
                    v.rows()
                )));
            }
            total += v.cols();
        }
        let mut out = Matrix::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
            }
            offset += v.cols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out, rg))
    }

    /// Masked softmax cross-entropy of `logits` (T×V), multiplied by `scale`.
    /// Produces a 1×1 node.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        mask: &[S],
        scale: S,
    ) -> Result<NodeId> {
        let (loss, grad) = cross_entropy(self.value(logits), targets, mask)?;
        let rg = self.rg(logits);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                dlogits: grad.scale(scale),
            },
            Matrix::column(vec![loss * scale]),
            rg,
        ))
    }

    /// Gradients of the 1×1 node `loss` with respect to every parameter read
    /// on this tape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<S>> {
        if self.value(loss).shape() != (1, 1) {
            let (r, c) = self.value(loss).shape();
            return Err(Error::Dimension(format!(
                "backward needs a 1x1 loss, got {r}x{c}"
            )));
        }
        let mut adj: Vec<Option<Matrix<S>>> = Vec::with_capacity(self.nodes.len());
        adj.resize_with(self.nodes.len(), || None);
        adj[loss.0] = Some(Matrix::filled(1, 1, S::one()));
        let mut out = Gradients::new(self.store.len());

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => {
                    out.slot(*pid, g.shape()).add_assign(&g);
                }
                Op::Lookup { table, row } => {
                    let shape = self.store.value(*table).shape();
                    let slot = out.slot(*table, shape);
                    for (dst, &src) in slot.row_mut(*row).iter_mut().zip(g.data()) {
                        *dst += src;
                    }
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let bv = self.value(*b);
                        let ga = self.adj_slot(&mut adj, *a);
                        matmul_nt_acc(&g, bv, ga);
                    }
                    if self.rg(*b) {
                        let av = self.value(*a);
                        let gb = self.adj_slot(&mut adj, *b);
                        matmul_tn_acc(av, &g, gb);
                    }
                }
                Op::Add(a, b) => {
                    for p in [*a, *b] {
                        if self.rg(p) {
                            self.adj_slot(&mut adj, p).add_assign(&g);
                        }
                    }
                }
                Op::AddColBroadcast(m, v) => {
                    if self.rg(*m) {
                        self.adj_slot(&mut adj, *m).add_assign(&g);
                    }
                    if self.rg(*v) {
                        let gv = self.adj_slot(&mut adj, *v);
                        for r in 0..g.rows() {
                            gv[(r, 0)] += g.row(r).iter().copied().sum::<S>();
                        }
                    }
                }
                Op::Hadamard(a, b) => {
                    if self.rg(*a) {
                        let bv = self.value(*b);
                        let ga = self.adj_slot(&mut adj, *a);
                        for ((d, &gi), &bi) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                            *d += gi * bi;
                        }
                    }
                    if self.rg(*b) {
                        let av = self.value(*a);
                        let gb = self.adj_slot(&mut adj, *b);
                        for ((d, &gi), &ai) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                            *d += gi * ai;
                        }
                    }
                }
                Op::Scale(a, k) => {
                    let ga = self.adj_slot(&mut adj, *a);
                    for (d, &gi) in ga.data_mut().iter_mut().zip(g.data()) {
                        *d += gi * *k;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = self.value(NodeId(idx));
                    let ga = self.adj_slot(&mut adj, *a);
                    for ((d, &gi), &yi) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *d += gi * yi * (S::one() - yi);
                    }
                }
                Op::Tanh(a) => {
                    let y = self.value(NodeId(idx));
                    let ga = self.adj_slot(&mut adj, *a);
                    for ((d, &gi), &yi) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *d += gi * (S::one() - yi * yi);
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = self.value(NodeId(idx));
                    let ga = self.adj_slot(&mut adj, *a);
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: S = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for ((d, &yi), &gi) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *d += yi * (gi - dot);
                        }
                    }
                }
                Op::Transpose(a) => {
                    self.adj_slot(&mut adj, *a).add_assign(&g.transpose());
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        if self.rg(p) {
                            let gp = self.adj_slot(&mut adj, p);
                            let src = &g.data()[offset * cols..(offset + rows) * cols];
                            for (d, &s) in gp.data_mut().iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                        offset += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.value(p).cols();
                        if self.rg(p) {
                            let gp = self.adj_slot(&mut adj, p);
                            for r in 0..g.rows() {
                                for (d, &s) in gp
                                    .row_mut(r)
                                    .iter_mut()
                                    .zip(&g.row(r)[offset..offset + cols])
                                {
                                    *d += s;
                                }
                            }
                        }
                        offset += cols;
                    }
                }
                Op::CrossEntropy { logits, dlogits } => {
                    let k = g[(0, 0)];
                    let gl = self.adj_slot(&mut adj, *logits);
                    for (d, &s) in gl.data_mut().iter_mut().zip(dlogits.data()) {
                        *d += k * s;
                    }
                }
            }
        }
        Ok(out)
    }

    fn adj_slot<'b>(&self, adj: &'b mut [Option<Matrix<S>>], id: NodeId) -> &'b mut Matrix<S> {
        let (r, c) = self.value(id).shape();
        adj[id.0].get_or_insert_with(|| Matrix::zeros(r, c))
    }
}
