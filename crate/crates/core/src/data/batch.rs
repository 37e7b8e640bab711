use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Conformation, Dataset};
use crate::error::{Error, Result};

/// Ragged concatenation of several molecules.
///
/// Atoms of molecule `m` occupy a contiguous range, so `atom_molecule` is
/// non-decreasing and `atom_counts[m]` atoms carry index `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniBatch {
    pub z: Vec<u32>,
    pub positions: Vec<[f64; 3]>,
    pub energies: Option<Vec<f64>>,
    pub forces: Option<Vec<[f64; 3]>>,
    pub atom_molecule: Arc<[usize]>,
    pub atom_counts: Vec<usize>,
}

impl MiniBatch {
    pub fn from_conformations<'a, I>(confs: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Conformation>,
    {
        let mut z = Vec::new();
        let mut positions = Vec::new();
        let mut energies = Some(Vec::new());
        let mut forces = Some(Vec::new());
        let mut atom_molecule = Vec::new();
        let mut atom_counts = Vec::new();
        for (m, conf) in confs.into_iter().enumerate() {
            conf.validate()?;
            z.extend_from_slice(&conf.z);
            positions.extend_from_slice(&conf.positions);
            atom_molecule.extend(std::iter::repeat_n(m, conf.n_atoms()));
            atom_counts.push(conf.n_atoms());
            match (&mut energies, conf.energy) {
                (Some(e), Some(v)) => e.push(v),
                _ => energies = None,
            }
            match (&mut forces, &conf.forces) {
                (Some(f), Some(v)) => f.extend_from_slice(v),
                _ => forces = None,
            }
        }
        if atom_counts.is_empty() {
            return Err(Error::InsufficientData("empty mini-batch".into()));
        }
        Ok(MiniBatch {
            z,
            positions,
            energies,
            forces,
            atom_molecule: atom_molecule.into(),
            atom_counts,
        })
    }

    /// Batch of one unlabelled molecule.
    pub fn single(z: &[u32], positions: &[[f64; 3]]) -> Result<Self> {
        let conf = Conformation {
            z: z.to_vec(),
            positions: positions.to_vec(),
            energy: None,
            forces: None,
            molecule_id: String::new(),
        };
        MiniBatch::from_conformations([&conf])
    }

    pub fn n_molecules(&self) -> usize {
        self.atom_counts.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.z.len()
    }

    /// Index of each molecule's first atom.
    pub fn offsets(&self) -> Vec<usize> {
        self.atom_counts
            .iter()
            .scan(0, |acc, &n| {
                let start = *acc;
                *acc += n;
                Some(start)
            })
            .collect()
    }
}

/// Visiting order of one epoch; `None` keeps dataset order.
pub fn epoch_order(n: usize, shuffle_seed: Option<u64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
}

/// One pass over a dataset in mini-batches; the last batch may be smaller.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

pub fn batch_iter(ds: &Dataset, batch_size: usize, shuffle_seed: Option<u64>) -> BatchIter<'_> {
    BatchIter {
        ds,
        order: epoch_order(ds.len(), shuffle_seed),
        batch_size: batch_size.max(1),
        cursor: 0,
    }
}

impl BatchIter<'_> {
    /// Conformation indices of the remaining batches.
    pub fn remaining_indices(&self) -> &[usize] {
        &self.order[self.cursor..]
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<MiniBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let idx = &self.order[self.cursor..end];
        self.cursor = end;
        Some(MiniBatch::from_conformations(
            idx.iter().map(|&i| &self.ds.conformations[i]),
        ))
    }
}
