//! Building blocks of the network, each expressed as graph operations.

use std::sync::Arc;

use super::params::{BlockVars, Dense};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Ordered atom pairs `(i, j)` over which cfconv sums, as global atom indices.
///
/// Pairs cover every ordered combination of atoms inside the same molecule;
/// there is no distance cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct PairList {
    pub i: Arc<[usize]>,
    pub j: Arc<[usize]>,
    pub n_atoms: usize,
}

impl PairList {
    /// All ordered pairs within each contiguous molecule of `atom_counts` atoms.
    pub fn within_molecules(atom_counts: &[usize], include_self: bool) -> Self {
        let (mut is, mut js) = (Vec::new(), Vec::new());
        let mut start = 0;
        for &n in atom_counts {
            for a in start..start + n {
                for b in start..start + n {
                    if a != b || include_self {
                        is.push(a);
                        js.push(b);
                    }
                }
            }
            start += n;
        }
        PairList {
            i: is.into(),
            j: js.into(),
            n_atoms: start,
        }
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    /// Plain distances `‖r_i − r_j‖` for every pair.
    pub fn distances(&self, positions: &[[f64; 3]]) -> Vec<f64> {
        self.i
            .iter()
            .zip(self.j.iter())
            .map(|(&a, &b)| {
                let d = [0, 1, 2].map(|k| positions[a][k] - positions[b][k]);
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            })
            .collect()
    }

    fn check(&self, n_atoms: usize) -> Result<()> {
        if let Some(&bad) = self.i.iter().chain(self.j.iter()).find(|&&a| a >= n_atoms) {
            return Err(Error::IndexOutOfRange {
                op: "pair list",
                index: bad,
                len: n_atoms,
            });
        }
        Ok(())
    }
}

/// Pair distances `[p]` from a positions variable `[n×3]`.
pub fn pair_distances(g: &mut Graph, positions: Var, pairs: &PairList) -> Result<Var> {
    pairs.check(g.shape(positions)[0])?;
    let ri = g.gather_rows(positions, pairs.i.clone())?;
    let rj = g.gather_rows(positions, pairs.j.clone())?;
    let diff = g.sub(ri, rj)?;
    g.l2_norm_rows(diff)
}

/// Rows of the embedding table for atomic numbers `z` (row `Z − 1` holds `a_Z`).
pub fn embed(g: &mut Graph, table: Var, z: &[u32]) -> Result<Var> {
    let max = g.shape(table)[0] as u32;
    let mut rows = Vec::with_capacity(z.len());
    for &zi in z {
        if zi < 1 || zi > max {
            return Err(Error::AtomicNumber { z: zi, max });
        }
        rows.push(zi as usize - 1);
    }
    g.gather_rows(table, rows)
}

/// Gaussian expansion `exp(−γ (d − μ_k)²)`: `[p] → [p×K]`.
pub fn rbf_expand(g: &mut Graph, d: Var, centers: &[f64], gamma: f64) -> Result<Var> {
    let wide = g.broadcast_cols(d, centers.len())?;
    let neg_mu = g.constant(Tensor::vector(centers.iter().map(|m| -m).collect()));
    let diff = g.add_bias(wide, neg_mu)?;
    let sq = g.square(diff)?;
    let arg = g.scale(sq, -gamma)?;
    g.exp(arg)
}

pub fn dense(g: &mut Graph, x: Var, layer: &Dense) -> Result<Var> {
    g.linear(x, layer.weight, layer.bias)
}

/// Filter-generating network `ssp(L2(ssp(L1(e))))`: `[p×K] → [p×F]`.
pub fn filter_generate(g: &mut Graph, e: Var, first: &Dense, second: &Dense) -> Result<Var> {
    let h = dense(g, e, first)?;
    let h = g.ssp(h)?;
    let h = dense(g, h, second)?;
    g.ssp(h)
}

/// Continuous-filter convolution `out_i = Σ_{(i,j)} x_j ∘ W_ij` with per-pair filters `[p×F]`.
pub fn cfconv(g: &mut Graph, x: Var, pairs: &PairList, filters: Var) -> Result<Var> {
    let n = g.shape(x)[0];
    pairs.check(n)?;
    let xj = g.gather_rows(x, pairs.j.clone())?;
    let msg = g.mul(xj, filters)?;
    g.segment_sum(msg, pairs.i.clone(), n)
}

/// Residual interaction update `x + atomwise(ssp(atomwise(cfconv(atomwise(x)))))`.
pub fn interaction_block(g: &mut Graph, x: Var, pairs: &PairList, rbf: Var, block: &BlockVars) -> Result<Var> {
    let y = dense(g, x, &block.in2f)?;
    let w = filter_generate(g, rbf, &block.filter1, &block.filter2)?;
    let c = cfconv(g, y, pairs, w)?;
    let v = dense(g, c, &block.f2out)?;
    let v = g.ssp(v)?;
    let v = dense(g, v, &block.dense)?;
    g.add(x, v)
}

/// Atom-wise energy head `dense2(ssp(dense1(x)))`: `[n×F] → [n×1]`.
pub fn output_head(g: &mut Graph, x: Var, first: &Dense, second: &Dense) -> Result<Var> {
    let h = dense(g, x, first)?;
    let h = g.ssp(h)?;
    dense(g, h, second)
}
