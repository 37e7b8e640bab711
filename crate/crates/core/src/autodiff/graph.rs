use std::sync::Arc;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub(crate) index: usize,
    pub(crate) generation: u32,
}

pub(crate) type Index = Arc<[usize]>;

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Shift(usize, f64),
    Exp(usize),
    Square(usize),
    SafeRecip(usize),
    Sigmoid(usize),
    Ssp(usize),
    SumAll(usize),
    Broadcast(usize),
    RowSum(usize),
    BroadcastCols(usize),
    ColSum(usize),
    BroadcastRows(usize),
    MatMul(usize, usize),
    Transpose(usize),
    GatherRows(usize, Index),
    SegmentSum(usize, Index),
    ConcatRows(Vec<usize>),
    L2NormRows(usize),
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => vec![*a, *b],
            Neg(a)
            | Scale(a, _)
            | Shift(a, _)
            | Exp(a)
            | Square(a)
            | SafeRecip(a)
            | Sigmoid(a)
            | Ssp(a)
            | SumAll(a)
            | Broadcast(a)
            | RowSum(a)
            | BroadcastCols(a)
            | ColSum(a)
            | BroadcastRows(a)
            | Transpose(a)
            | GatherRows(a, _)
            | SegmentSum(a, _)
            | L2NormRows(a) => vec![*a],
            ConcatRows(xs) => xs.clone(),
        }
    }

    pub(crate) fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Leaf => "leaf",
            Add(..) => "add",
            Sub(..) => "sub",
            Mul(..) => "mul",
            Div(..) => "div",
            Neg(..) => "neg",
            Scale(..) => "scale",
            Shift(..) => "shift",
            Exp(..) => "exp",
            Square(..) => "square",
            SafeRecip(..) => "safe_recip",
            Sigmoid(..) => "sigmoid",
            Ssp(..) => "ssp",
            SumAll(..) => "sum_all",
            Broadcast(..) => "broadcast",
            RowSum(..) => "row_sum",
            BroadcastCols(..) => "broadcast_cols",
            ColSum(..) => "col_sum",
            BroadcastRows(..) => "broadcast_rows",
            MatMul(..) => "matmul",
            Transpose(..) => "transpose",
            GatherRows(..) => "gather_rows",
            SegmentSum(..) => "segment_sum",
            ConcatRows(..) => "concat_rows",
            L2NormRows(..) => "l2_norm_rows",
        }
    }
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
}

/// Append-only computation graph with eager forward evaluation.
///
/// Every primitive's derivative is itself built from primitives, so the
/// gradients produced by [`Graph::backward`] with `create_graph = true` can be
/// differentiated again.
#[derive(Debug)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    generation: u32,
    pub(crate) grad_enabled: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            generation: 0,
            grad_enabled: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// Drops every node. Handles from earlier generations become invalid.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.generation = self.generation.wrapping_add(1);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.check(v).expect("stale variable")].value
    }

    pub fn try_value(&self, v: Var) -> Result<&Tensor> {
        Ok(&self.nodes[self.check(v)?].value)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[self.check(v).expect("stale variable")].requires_grad
    }

    /// Name of the primitive that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[self.check(v).expect("stale variable")].op.name()
    }

    pub(crate) fn check(&self, v: Var) -> Result<usize> {
        if v.generation != self.generation || v.index >= self.nodes.len() {
            return Err(Error::StaleVariable);
        }
        Ok(v.index)
    }

    pub(crate) fn var(&self, index: usize) -> Var {
        Var {
            index,
            generation: self.generation,
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        self.var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> Var {
        let value = evaluate(&op, &self.nodes, shape);
        let requires_grad = self.grad_enabled && op.inputs().iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        self.var(self.nodes.len() - 1)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize, Vec<usize>)> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (sa, sb) = (self.nodes[ia].value.shape(), self.nodes[ib].value.shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok((ia, ib, sa.to_vec()))
    }

    fn unary(&mut self, a: Var, make: impl FnOnce(usize) -> Op) -> Result<Var> {
        let ia = self.check(a)?;
        let shape = self.nodes[ia].value.shape().to_vec();
        Ok(self.push(make(ia), shape))
    }

    fn rank2(&self, op: &'static str, a: Var) -> Result<(usize, usize, usize)> {
        let ia = self.check(a)?;
        match *self.nodes[ia].value.shape() {
            [n, d] => Ok((ia, n, d)),
            ref s => Err(Error::shape(op, s, &[])),
        }
    }

    fn rank1(&self, op: &'static str, a: Var) -> Result<(usize, usize)> {
        let ia = self.check(a)?;
        match *self.nodes[ia].value.shape() {
            [n] => Ok((ia, n)),
            ref s => Err(Error::shape(op, s, &[])),
        }
    }

    // Element-wise binary primitives: both operands must have identical shape.

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, s) = self.same_shape("add", a, b)?;
        Ok(self.push(Op::Add(ia, ib), s))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, s) = self.same_shape("sub", a, b)?;
        Ok(self.push(Op::Sub(ia, ib), s))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, s) = self.same_shape("mul", a, b)?;
        Ok(self.push(Op::Mul(ia, ib), s))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, s) = self.same_shape("div", a, b)?;
        Ok(self.push(Op::Div(ia, ib), s))
    }

    // Element-wise unary primitives: output shape equals input shape.

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Neg)
    }

    /// `c · a` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |i| Op::Scale(i, c))
    }

    /// `a + c` for a constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, |i| Op::Shift(i, c))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Exp)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Square)
    }

    /// `1/a`, with zero mapped to zero.
    pub fn safe_recip(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::SafeRecip)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid)
    }

    /// Shifted softplus, see [`kernels::ssp`].
    pub fn ssp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Ssp)
    }

    // Reductions and their adjoint broadcasts.

    /// Sum of every element; output has shape `[]`.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        Ok(self.push(Op::SumAll(ia), vec![]))
    }

    /// Replicates a rank-0 tensor to `shape`.
    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        if !self.nodes[ia].value.shape().is_empty() || shape.len() > 2 {
            return Err(Error::shape("broadcast", self.nodes[ia].value.shape(), shape));
        }
        Ok(self.push(Op::Broadcast(ia), shape.to_vec()))
    }

    /// `[n×d] → [n]`, summing each row.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (ia, n, _) = self.rank2("row_sum", a)?;
        Ok(self.push(Op::RowSum(ia), vec![n]))
    }

    /// `[n] → [n×d]`, repeating each entry along its row.
    pub fn broadcast_cols(&mut self, a: Var, d: usize) -> Result<Var> {
        let (ia, n) = self.rank1("broadcast_cols", a)?;
        Ok(self.push(Op::BroadcastCols(ia), vec![n, d]))
    }

    /// `[n×d] → [d]`, summing each column.
    pub fn col_sum(&mut self, a: Var) -> Result<Var> {
        let (ia, _, d) = self.rank2("col_sum", a)?;
        Ok(self.push(Op::ColSum(ia), vec![d]))
    }

    /// `[d] → [n×d]`, stacking `n` copies of the vector.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let (ia, d) = self.rank1("broadcast_rows", a)?;
        Ok(self.push(Op::BroadcastRows(ia), vec![n, d]))
    }

    /// `[n×k] · [k×m] → [n×m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, n, k) = self.rank2("matmul", a)?;
        let (ib, k2, m) = self.rank2("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", &[n, k], &[k2, m]));
        }
        Ok(self.push(Op::MatMul(ia, ib), vec![n, m]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (ia, n, d) = self.rank2("transpose", a)?;
        Ok(self.push(Op::Transpose(ia), vec![d, n]))
    }

    // Row indexing. Rank-1 tensors are treated as columns of width one.

    /// `out[q] = x[index[q]]` row-wise; output has `index.len()` rows.
    pub fn gather_rows(&mut self, x: Var, index: impl Into<Index>) -> Result<Var> {
        let ix = self.check(x)?;
        let index: Index = index.into();
        let value = &self.nodes[ix].value;
        if value.shape().is_empty() {
            return Err(Error::shape("gather_rows", value.shape(), &[]));
        }
        let n = value.rows();
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                len: n,
            });
        }
        let mut shape = value.shape().to_vec();
        shape[0] = index.len();
        Ok(self.push(Op::GatherRows(ix, index), shape))
    }

    /// `out[s] = Σ_{q: segment[q] = s} x[q]` row-wise; output has `n_segments` rows.
    pub fn segment_sum(&mut self, x: Var, segment: impl Into<Index>, n_segments: usize) -> Result<Var> {
        let ix = self.check(x)?;
        let segment: Index = segment.into();
        let value = &self.nodes[ix].value;
        if value.shape().is_empty() || value.rows() != segment.len() {
            return Err(Error::shape("segment_sum", value.shape(), &[segment.len()]));
        }
        if let Some(&bad) = segment.iter().find(|&&s| s >= n_segments) {
            return Err(Error::IndexOutOfRange {
                op: "segment_sum",
                index: bad,
                len: n_segments,
            });
        }
        let mut shape = value.shape().to_vec();
        shape[0] = n_segments;
        Ok(self.push(Op::SegmentSum(ix, segment), shape))
    }

    /// Stacks tensors with equal trailing dimensions along the first axis.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let idx = xs.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        let Some(&first) = idx.first() else {
            return Err(Error::shape("concat_rows", &[], &[]));
        };
        let tail = self.nodes[first].value.shape().get(1..).map(<[usize]>::to_vec);
        let Some(tail) = tail else {
            return Err(Error::shape("concat_rows", &[], &[]));
        };
        let mut rows = 0;
        for &i in &idx {
            let s = self.nodes[i].value.shape();
            if s.is_empty() || s[1..] != tail[..] {
                return Err(Error::shape("concat_rows", self.nodes[first].value.shape(), s));
            }
            rows += s[0];
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        Ok(self.push(Op::ConcatRows(idx), shape))
    }

    /// `[n×d] → [n]` Euclidean row norms. The derivative at a zero row is taken as zero.
    pub fn l2_norm_rows(&mut self, a: Var) -> Result<Var> {
        let (ia, n, _) = self.rank2("l2_norm_rows", a)?;
        Ok(self.push(Op::L2NormRows(ia), vec![n]))
    }

    // Composites.

    /// `x[n×d] + b[d]` on every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, n, d) = self.rank2("add_bias", x)?;
        let (_, db) = self.rank1("add_bias", bias)?;
        if d != db {
            return Err(Error::shape("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.broadcast_rows(bias, n)?;
        self.add(x, b)
    }

    /// Scales row `i` of `x[n×d]` by `v[i]`.
    pub fn mul_cols(&mut self, x: Var, v: Var) -> Result<Var> {
        let (_, n, d) = self.rank2("mul_cols", x)?;
        let (_, nv) = self.rank1("mul_cols", v)?;
        if n != nv {
            return Err(Error::shape("mul_cols", self.shape(x), self.shape(v)));
        }
        let b = self.broadcast_cols(v, d)?;
        self.mul(x, b)
    }

    /// Dense layer `x·W + b` applied row-wise: `[n×d_in]·[d_in×d_out] + [d_out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (_, _, d_in) = self.rank2("linear", x)?;
        let (_, w_in, w_out) = self.rank2("linear", weight)?;
        let (_, b_out) = self.rank1("linear", bias)?;
        if d_in != w_in || w_out != b_out {
            return Err(Error::Shape {
                op: "linear",
                lhs: self.shape(x).to_vec(),
                rhs: vec![w_in, w_out, b_out],
            });
        }
        let xw = self.matmul(x, weight)?;
        self.add_bias(xw, bias)
    }

    /// Recomputes the forward value of `v` from the stored values of its inputs.
    pub fn recompute(&self, v: Var) -> Result<Tensor> {
        let i = self.check(v)?;
        let node = &self.nodes[i];
        Ok(match node.op {
            Op::Leaf => node.value.clone(),
            ref op => evaluate(op, &self.nodes, node.value.shape().to_vec()),
        })
    }
}

fn evaluate(op: &Op, nodes: &[Node], shape: Vec<usize>) -> Tensor {
    let val = |i: usize| &nodes[i].value;
    let map = |i: usize, f: &dyn Fn(f64) -> f64| val(i).data().iter().map(|&x| f(x)).collect();
    let zip = |a: usize, b: usize, f: &dyn Fn(f64, f64) -> f64| {
        val(a)
            .data()
            .iter()
            .zip(val(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect()
    };
    let data: Vec<f64> = match *op {
        Op::Leaf => unreachable!("leaves are never re-evaluated"),
        Op::Add(a, b) => zip(a, b, &|x, y| x + y),
        Op::Sub(a, b) => zip(a, b, &|x, y| x - y),
        Op::Mul(a, b) => zip(a, b, &|x, y| x * y),
        Op::Div(a, b) => zip(a, b, &|x, y| x / y),
        Op::Neg(a) => map(a, &|x| -x),
        Op::Scale(a, c) => map(a, &|x| c * x),
        Op::Shift(a, c) => map(a, &|x| x + c),
        Op::Exp(a) => map(a, &f64::exp),
        Op::Square(a) => map(a, &|x| x * x),
        Op::SafeRecip(a) => map(a, &kernels::safe_recip),
        Op::Sigmoid(a) => map(a, &kernels::sigmoid),
        Op::Ssp(a) => map(a, &kernels::ssp),
        Op::SumAll(a) => vec![val(a).data().iter().sum()],
        Op::Broadcast(a) => vec![val(a).data()[0]; shape.iter().product()],
        Op::RowSum(a) => {
            let x = val(a);
            (0..x.rows()).map(|i| x.row(i).iter().sum()).collect()
        }
        Op::BroadcastCols(a) => {
            let d = shape[1];
            val(a).data().iter().flat_map(|&x| std::iter::repeat_n(x, d)).collect()
        }
        Op::ColSum(a) => {
            let x = val(a);
            let mut out = vec![0.0; x.row_width()];
            for i in 0..x.rows() {
                for (o, &v) in out.iter_mut().zip(x.row(i)) {
                    *o += v;
                }
            }
            out
        }
        Op::BroadcastRows(a) => {
            let b = val(a).data();
            let mut out = Vec::with_capacity(shape[0] * b.len());
            for _ in 0..shape[0] {
                out.extend_from_slice(b);
            }
            out
        }
        Op::MatMul(a, b) => {
            let (x, y) = (val(a), val(b));
            kernels::matmul(x.data(), y.data(), x.shape()[0], x.shape()[1], y.shape()[1])
        }
        Op::Transpose(a) => {
            let x = val(a);
            kernels::transpose(x.data(), x.shape()[0], x.shape()[1])
        }
        Op::GatherRows(a, ref index) => {
            let x = val(a);
            let mut out = Vec::with_capacity(index.len() * x.row_width());
            for &i in index.iter() {
                out.extend_from_slice(x.row(i));
            }
            out
        }
        Op::SegmentSum(a, ref segment) => {
            let x = val(a);
            let w = x.row_width();
            let mut out = vec![0.0; shape[0] * w];
            for (q, &s) in segment.iter().enumerate() {
                for (o, &v) in out[s * w..(s + 1) * w].iter_mut().zip(x.row(q)) {
                    *o += v;
                }
            }
            out
        }
        Op::ConcatRows(ref xs) => xs.iter().flat_map(|&i| val(i).data().iter().copied()).collect(),
        Op::L2NormRows(a) => {
            let x = val(a);
            (0..x.rows())
                .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect()
        }
    };
    Tensor::from_parts(shape, data)
}
