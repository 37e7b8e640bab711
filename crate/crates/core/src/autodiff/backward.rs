use std::collections::{HashMap, HashSet};
use std::ops::Index;

use super::graph::{Graph, Op, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Gradients returned by [`Graph::backward`], keyed by the requested variables.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    grads: HashMap<Var, Var>,
    unreachable: Vec<Var>,
}

impl GradientMap {
    pub fn get(&self, v: Var) -> Option<Var> {
        self.grads.get(&v).copied()
    }

    /// Requested variables the loss does not depend on; their gradient is zero.
    pub fn unreachable(&self) -> &[Var] {
        &self.unreachable
    }

    pub fn is_reachable(&self, v: Var) -> bool {
        !self.unreachable.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Index<Var> for GradientMap {
    type Output = Var;

    fn index(&self, v: Var) -> &Var {
        &self.grads[&v]
    }
}

impl Graph {
    /// Reverse-mode gradients of a scalar `loss` with respect to `wrt`.
    ///
    /// Gradient nodes are appended to this graph. With `create_graph = true` they
    /// carry `requires_grad` and can be passed to another `backward` call;
    /// otherwise they are constants.
    pub fn backward(&mut self, loss: Var, wrt: &[Var], create_graph: bool) -> Result<GradientMap> {
        let saved = self.grad_enabled;
        self.grad_enabled = create_graph;
        let out = self.backward_inner(loss, wrt);
        self.grad_enabled = saved;
        out
    }

    fn backward_inner(&mut self, loss: Var, wrt: &[Var]) -> Result<GradientMap> {
        let root = self.check(loss)?;
        let loss_shape = self.nodes[root].value.shape().to_vec();
        if self.nodes[root].value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        let targets: HashSet<usize> = wrt.iter().map(|&v| self.check(v)).collect::<Result<_>>()?;

        // Nodes on some path from a target to the loss.
        let mut live = vec![false; root + 1];
        for i in 0..=root {
            let node = &self.nodes[i];
            live[i] = node.requires_grad && (targets.contains(&i) || node.op.inputs().iter().any(|&j| live[j]));
        }

        let mut grads: Vec<Option<Var>> = vec![None; root + 1];
        if live[root] {
            grads[root] = Some(self.constant(Tensor::full(&loss_shape, 1.0)));
        }
        for i in (0..=root).rev() {
            let Some(g) = grads[i] else { continue };
            let op = self.nodes[i].op.clone();
            for (input, contribution) in self.input_grads(&op, i, g, &live)? {
                grads[input] = Some(match grads[input] {
                    Some(acc) => self.add(acc, contribution)?,
                    None => contribution,
                });
            }
        }

        let mut map = GradientMap::default();
        for &v in wrt {
            let grad = match grads.get(v.index).copied().flatten() {
                Some(g) => g,
                None => {
                    log::warn!("backward: loss does not depend on variable {}", v.index);
                    map.unreachable.push(v);
                    let shape = self.nodes[v.index].value.shape().to_vec();
                    self.constant(Tensor::zeros(&shape))
                }
            };
            map.grads.insert(v, grad);
        }
        Ok(map)
    }

    /// Contributions of output gradient `g` of node `out` to each live input.
    fn input_grads(&mut self, op: &Op, out: usize, g: Var, live: &[bool]) -> Result<Vec<(usize, Var)>> {
        let out_var = self.var(out);
        let v = |i: usize| Var {
            index: i,
            generation: out_var.generation,
        };
        let mut res = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if live[a] {
                    res.push((a, g));
                }
                if live[b] {
                    res.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if live[a] {
                    res.push((a, g));
                }
                if live[b] {
                    res.push((b, self.neg(g)?));
                }
            }
            Op::Mul(a, b) => {
                if live[a] {
                    res.push((a, self.mul(g, v(b))?));
                }
                if live[b] {
                    res.push((b, self.mul(g, v(a))?));
                }
            }
            Op::Div(a, b) => {
                if live[a] {
                    res.push((a, self.div(g, v(b))?));
                }
                if live[b] {
                    let t = self.mul(g, out_var)?;
                    let t = self.div(t, v(b))?;
                    res.push((b, self.neg(t)?));
                }
            }
            Op::Neg(a) => res.push((a, self.neg(g)?)),
            Op::Scale(a, c) => res.push((a, self.scale(g, c)?)),
            Op::Shift(a, _) => res.push((a, g)),
            Op::Exp(a) => res.push((a, self.mul(g, out_var)?)),
            Op::Square(a) => {
                let two_a = self.scale(v(a), 2.0)?;
                res.push((a, self.mul(g, two_a)?));
            }
            Op::SafeRecip(a) => {
                let sq = self.square(out_var)?;
                let t = self.mul(g, sq)?;
                res.push((a, self.neg(t)?));
            }
            Op::Sigmoid(a) => {
                let sq = self.square(out_var)?;
                let d = self.sub(out_var, sq)?;
                res.push((a, self.mul(g, d)?));
            }
            Op::Ssp(a) => {
                let s = self.sigmoid(v(a))?;
                res.push((a, self.mul(g, s)?));
            }
            Op::SumAll(a) => {
                let shape = self.nodes[a].value.shape().to_vec();
                res.push((a, self.broadcast(g, &shape)?));
            }
            Op::Broadcast(a) => res.push((a, self.sum_all(g)?)),
            Op::RowSum(a) => {
                let d = self.nodes[a].value.shape()[1];
                res.push((a, self.broadcast_cols(g, d)?));
            }
            Op::BroadcastCols(a) => res.push((a, self.row_sum(g)?)),
            Op::ColSum(a) => {
                let n = self.nodes[a].value.shape()[0];
                res.push((a, self.broadcast_rows(g, n)?));
            }
            Op::BroadcastRows(a) => res.push((a, self.col_sum(g)?)),
            Op::MatMul(a, b) => {
                if live[a] {
                    let bt = self.transpose(v(b))?;
                    res.push((a, self.matmul(g, bt)?));
                }
                if live[b] {
                    let at = self.transpose(v(a))?;
                    res.push((b, self.matmul(at, g)?));
                }
            }
            Op::Transpose(a) => res.push((a, self.transpose(g)?)),
            Op::GatherRows(a, ref index) => {
                let n = self.nodes[a].value.rows();
                res.push((a, self.segment_sum(g, index.clone(), n)?));
            }
            Op::SegmentSum(a, ref segment) => {
                res.push((a, self.gather_rows(g, segment.clone())?));
            }
            Op::ConcatRows(ref xs) => {
                let mut start = 0;
                for &x in xs {
                    let rows = self.nodes[x].value.rows();
                    if live[x] {
                        let range: Vec<usize> = (start..start + rows).collect();
                        res.push((x, self.gather_rows(g, range)?));
                    }
                    start += rows;
                }
            }
            Op::L2NormRows(a) => {
                let d = self.nodes[a].value.shape()[1];
                let inv = self.safe_recip(out_var)?;
                let t = self.mul(g, inv)?;
                let t = self.broadcast_cols(t, d)?;
                res.push((a, self.mul(v(a), t)?));
            }
        }
        // Single-input ops push unconditionally; drop contributions to dead inputs.
        res.retain(|&(i, _)| live[i]);
        Ok(res)
    }
}
