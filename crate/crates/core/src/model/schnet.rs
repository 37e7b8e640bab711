use super::config::ModelConfig;
use super::layers::{embed, interaction_block, output_head, pair_distances, rbf_expand, PairList};
use super::params::{ModelVars, ParamStore};
use crate::autodiff::{Graph, Tensor, Var};
use crate::data::{MiniBatch, Normalizer};
use crate::error::{Error, Result};

/// Energies (kcal/mol) and optionally forces (kcal/mol/Å) for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub energies: Vec<f64>,
    pub forces: Option<Vec<[f64; 3]>>,
}

/// Handles produced by [`SchNet::forward`].
#[derive(Clone, Debug)]
pub struct Forward {
    /// Per-molecule energies `[b]` in normalized units.
    pub energies: Var,
    /// Positions leaf `[n×3]`, Å.
    pub positions: Var,
    pub pairs: PairList,
}

/// The full network: parameters plus the energy normalization applied at the API boundary.
///
/// Inference builds a private [`Graph`] per call, so a model can be shared
/// between threads.
#[derive(Clone, Debug, PartialEq)]
pub struct SchNet {
    config: ModelConfig,
    params: ParamStore,
    normalizer: Normalizer,
    centers: Vec<f64>,
}

impl SchNet {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::init(&config, seed);
        Ok(SchNet {
            centers: config.rbf_centers(),
            config,
            params,
            normalizer: Normalizer::identity(),
        })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore, normalizer: Normalizer) -> Result<Self> {
        config.validate()?;
        let params = ParamStore::from_entries(&config, params.entries().to_vec())?;
        Ok(SchNet {
            centers: config.rbf_centers(),
            config,
            params,
            normalizer,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn normalizer(&self) -> Normalizer {
        self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) {
        self.normalizer = normalizer;
    }

    pub fn rbf_centers(&self) -> &[f64] {
        &self.centers
    }

    /// Builds the energy graph for `batch` and returns normalized per-molecule energies.
    ///
    /// `positions_require_grad` makes the positions a differentiable leaf so
    /// forces can be taken.
    pub fn forward(
        &self,
        g: &mut Graph,
        vars: &ModelVars,
        batch: &MiniBatch,
        positions_require_grad: bool,
    ) -> Result<Forward> {
        if batch.positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("positions".into()));
        }
        if batch.n_atoms() == 0 {
            return Err(Error::InsufficientData("molecule without atoms".into()));
        }
        let positions = g.leaf(Tensor::from_rows(&batch.positions), positions_require_grad);
        let pairs = PairList::within_molecules(&batch.atom_counts, self.config.include_self_pairs);

        let mut x = embed(g, vars.embedding, &batch.z)?;
        let d = pair_distances(g, positions, &pairs)?;
        let rbf = rbf_expand(g, d, &self.centers, self.config.rbf_gamma)?;
        for block in &vars.blocks {
            x = interaction_block(g, x, &pairs, rbf, block)?;
        }
        let atom_energy = output_head(g, x, &vars.head1, &vars.head2)?;
        let per_molecule = g.segment_sum(atom_energy, batch.atom_molecule.clone(), batch.n_molecules())?;
        let energies = g.row_sum(per_molecule)?;
        Ok(Forward {
            energies,
            positions,
            pairs,
        })
    }

    /// `∂(Σ Ê)/∂r` in normalized units, i.e. minus the normalized forces.
    pub fn energy_gradient(&self, g: &mut Graph, fwd: &Forward, create_graph: bool) -> Result<Var> {
        let total = g.sum_all(fwd.energies)?;
        let grads = g.backward(total, &[fwd.positions], create_graph)?;
        Ok(grads[fwd.positions])
    }

    pub fn predict_batch(&self, batch: &MiniBatch, with_forces: bool) -> Result<Prediction> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let fwd = self.forward(&mut g, &vars, batch, with_forces)?;
        let energies = g
            .value(fwd.energies)
            .data()
            .iter()
            .map(|&e| self.normalizer.denormalize_energy(e))
            .collect();
        let forces = if with_forces {
            let grad = self.energy_gradient(&mut g, &fwd, false)?;
            let grad = g.value(grad);
            Some(
                (0..grad.rows())
                    .map(|a| {
                        let r = grad.row(a);
                        self.normalizer.denormalize_force([-r[0], -r[1], -r[2]])
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(Prediction { energies, forces })
    }

    pub fn predict_energy(&self, z: &[u32], positions: &[[f64; 3]]) -> Result<f64> {
        let batch = MiniBatch::single(z, positions)?;
        Ok(self.predict_batch(&batch, false)?.energies[0])
    }

    /// Energy and `F_i = −∂E/∂r_i`.
    pub fn predict_energy_forces(&self, z: &[u32], positions: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        let batch = MiniBatch::single(z, positions)?;
        let p = self.predict_batch(&batch, true)?;
        Ok((p.energies[0], p.forces.expect("forces requested")))
    }

    /// Filter values `W(d)` of interaction block `block` for each distance: `[p×F]`.
    pub fn filter_values(&self, block: usize, distances: &[f64]) -> Result<Tensor> {
        if block >= self.config.n_interactions {
            return Err(Error::IndexOutOfRange {
                op: "filter_values",
                index: block,
                len: self.config.n_interactions,
            });
        }
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let d = g.constant(Tensor::vector(distances.to_vec()));
        let e = rbf_expand(&mut g, d, &self.centers, self.config.rbf_gamma)?;
        let b = &vars.blocks[block];
        let w = super::layers::filter_generate(&mut g, e, &b.filter1, &b.filter2)?;
        Ok(g.value(w).clone())
    }
}
