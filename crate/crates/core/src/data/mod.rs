//! Molecular conformations, dataset I/O, splits, ragged batching and a
//! synthetic Morse-potential generator.

mod batch;
pub mod elements;
mod extxyz;
mod normalize;
mod split;
mod synthetic;

pub use batch::{batch_iter, epoch_order, BatchIter, MiniBatch};
pub use extxyz::{parse_extxyz, parse_extxyz_str, write_extxyz, write_extxyz_path};
pub use normalize::Normalizer;
pub use split::{split, SplitMode, SplitSpec};
pub use synthetic::{generate_synthetic, MorseParams, SyntheticOracle};

use crate::error::{Error, Result};

/// A single molecular geometry with optional labels.
///
/// Positions are in Å, energies in kcal/mol and forces in kcal/mol/Å.
#[derive(Clone, Debug, PartialEq)]
pub struct Conformation {
    pub z: Vec<u32>,
    pub positions: Vec<[f64; 3]>,
    pub energy: Option<f64>,
    pub forces: Option<Vec<[f64; 3]>>,
    pub molecule_id: String,
}

impl Conformation {
    /// Unlabelled conformation; the molecule id defaults to the chemical formula.
    pub fn new(z: Vec<u32>, positions: Vec<[f64; 3]>) -> Result<Self> {
        let molecule_id = elements::formula(&z);
        let conf = Conformation {
            z,
            positions,
            energy: None,
            forces: None,
            molecule_id,
        };
        conf.validate()?;
        Ok(conf)
    }

    pub fn with_energy(mut self, energy: f64) -> Self {
        self.energy = Some(energy);
        self
    }

    pub fn with_forces(mut self, forces: Vec<[f64; 3]>) -> Self {
        self.forces = Some(forces);
        self
    }

    pub fn with_molecule_id(mut self, id: impl Into<String>) -> Self {
        self.molecule_id = id.into();
        self
    }

    pub fn n_atoms(&self) -> usize {
        self.z.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.z.len() != self.positions.len() {
            return Err(Error::shape(
                "conformation",
                &[self.z.len()],
                &[self.positions.len(), 3],
            ));
        }
        if self.positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("positions of `{}`", self.molecule_id)));
        }
        if let Some(f) = &self.forces {
            if f.len() != self.z.len() {
                return Err(Error::shape("conformation forces", &[f.len(), 3], &[self.z.len(), 3]));
            }
        }
        Ok(())
    }
}

/// Ordered collection of conformations plus where they came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub conformations: Vec<Conformation>,
    pub source: Option<String>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(conformations: Vec<Conformation>) -> Self {
        Dataset {
            conformations,
            source: None,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.conformations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conformations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Conformation> {
        self.conformations.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Conformation> {
        self.conformations.get(i)
    }

    /// New dataset holding copies of the given conformations, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            conformations: indices.iter().map(|&i| self.conformations[i].clone()).collect(),
            source: self.source.clone(),
            seed: self.seed,
        }
    }

    pub fn has_energies(&self) -> bool {
        self.iter().all(|c| c.energy.is_some())
    }

    pub fn has_forces(&self) -> bool {
        self.iter().all(|c| c.forces.is_some())
    }

    /// Errors unless every conformation carries an energy (and forces, if asked).
    pub fn require_labels(&self, forces: bool) -> Result<()> {
        if let Some((i, _)) = self.iter().enumerate().find(|(_, c)| c.energy.is_none()) {
            return Err(Error::MissingLabels(format!("conformation {i} has no energy")));
        }
        if forces {
            if let Some((i, _)) = self.iter().enumerate().find(|(_, c)| c.forces.is_none()) {
                return Err(Error::MissingLabels(format!("conformation {i} has no forces")));
            }
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Conformation;
    type IntoIter = std::slice::Iter<'a, Conformation>;

    fn into_iter(self) -> Self::IntoIter {
        self.conformations.iter()
    }
}

impl FromIterator<Conformation> for Dataset {
    fn from_iter<T: IntoIterator<Item = Conformation>>(iter: T) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conformation_invariants() {
        assert!(Conformation::new(vec![1, 1], vec![[0.0; 3]]).is_err());
        assert!(Conformation::new(vec![1], vec![[f64::NAN, 0.0, 0.0]]).is_err());
        let c = Conformation::new(vec![8, 1, 1], vec![[0.0; 3]; 3]).unwrap();
        assert_eq!(c.molecule_id, "H2O");
        assert!(c.clone().with_forces(vec![[0.0; 3]; 2]).validate().is_err());
    }

    #[test]
    fn missing_labels_are_reported() {
        let c = Conformation::new(vec![1], vec![[0.0; 3]]).unwrap();
        let ds = Dataset::new(vec![c.clone().with_energy(1.0), c]);
        assert!(matches!(ds.require_labels(false), Err(Error::MissingLabels(_))));
    }
}
