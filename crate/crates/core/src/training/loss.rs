use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::data::{MiniBatch, Normalizer};
use crate::error::{Error, Result};
use crate::model::{ModelVars, SchNet};

/// Weighting of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Energy weight ρ. Ignored (treated as 1) when forces are not trained.
    pub rho: f64,
    pub train_forces: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            rho: 0.01,
            train_forces: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be non-negative, got {}", self.rho)));
        }
        Ok(())
    }

    pub fn energy_weight(&self) -> f64 {
        if self.train_forces {
            self.rho
        } else {
            1.0
        }
    }
}

/// Labels of a batch in normalized units.
#[derive(Clone, Debug)]
pub struct Targets {
    pub energies: Vec<f64>,
    /// Normalized forces `[n×3]`, present when training on forces.
    pub forces: Option<Vec<[f64; 3]>>,
    pub atom_molecule: Arc<[usize]>,
    pub atom_counts: Vec<usize>,
}

impl Targets {
    pub fn from_batch(batch: &MiniBatch, normalizer: &Normalizer, forces: bool) -> Result<Self> {
        let energies = batch
            .energies
            .as_ref()
            .ok_or_else(|| Error::MissingLabels("batch has conformations without an energy".into()))?
            .iter()
            .map(|&e| normalizer.normalize_energy(e))
            .collect();
        let forces = if forces {
            let f = batch
                .forces
                .as_ref()
                .ok_or_else(|| Error::MissingLabels("force training needs forces on every conformation".into()))?;
            Some(f.iter().map(|&v| normalizer.normalize_force(v)).collect())
        } else {
            None
        };
        Ok(Targets {
            energies,
            forces,
            atom_molecule: batch.atom_molecule.clone(),
            atom_counts: batch.atom_counts.clone(),
        })
    }
}

/// Mean over molecules of `ρ(E − Ê)² + (1/n)Σ_i ‖F_i + ∂Ê/∂r_i‖²`.
///
/// `energy_grad` is `∂Ê/∂r` `[n×3]`; it must have been built with
/// `create_graph = true` for the loss to be differentiable in the parameters.
pub fn combined_loss(
    g: &mut Graph,
    predicted: Var,
    energy_grad: Option<Var>,
    targets: &Targets,
    config: &LossConfig,
) -> Result<Var> {
    let b = targets.energies.len();
    let e_true = g.constant(Tensor::vector(targets.energies.clone()));
    let diff = g.sub(e_true, predicted)?;
    let sq = g.square(diff)?;
    let mut per_molecule = g.scale(sq, config.energy_weight())?;

    if config.train_forces {
        let (grad, forces) = match (energy_grad, &targets.forces) {
            (Some(gv), Some(f)) => (gv, f),
            _ => return Err(Error::MissingLabels("force term needs both forces and ∂Ê/∂r".into())),
        };
        let f_true = g.constant(Tensor::from_rows(forces));
        let residual = g.add(f_true, grad)?;
        let sq = g.square(residual)?;
        let per_atom = g.row_sum(sq)?;
        let summed = g.segment_sum(per_atom, targets.atom_molecule.clone(), b)?;
        let inv_n = g.constant(Tensor::vector(
            targets.atom_counts.iter().map(|&n| 1.0 / n as f64).collect(),
        ));
        let force_term = g.mul(summed, inv_n)?;
        per_molecule = g.add(per_molecule, force_term)?;
    }
    let total = g.sum_all(per_molecule)?;
    g.scale(total, 1.0 / b as f64)
}

/// Builds the forward pass, the force residual and the loss for one batch.
pub fn batch_loss(
    g: &mut Graph,
    model: &SchNet,
    vars: &ModelVars,
    batch: &MiniBatch,
    config: &LossConfig,
) -> Result<Var> {
    let targets = Targets::from_batch(batch, &model.normalizer(), config.train_forces)?;
    let fwd = model.forward(g, vars, batch, config.train_forces)?;
    let grad = if config.train_forces {
        Some(model.energy_gradient(g, &fwd, true)?)
    } else {
        None
    };
    combined_loss(g, fwd.energies, grad, &targets, config)
}
