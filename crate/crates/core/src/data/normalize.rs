use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Energy standardisation fitted on the training set.
///
/// Energies map to `(E − mean) / std`; forces, being derivatives, only divide by `std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer::identity()
    }
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer { mean: 0.0, std: 1.0 }
    }

    /// Population mean and standard deviation of the labelled energies.
    /// A zero spread is clamped to one.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InsufficientData(
                "cannot fit a normalizer on an empty set".into(),
            ));
        }
        train.require_labels(false)?;
        let energies: Vec<f64> = train.iter().filter_map(|c| c.energy).collect();
        Ok(Normalizer::from_energies(&energies))
    }

    pub fn from_energies(energies: &[f64]) -> Self {
        let n = energies.len() as f64;
        let mean = energies.iter().sum::<f64>() / n;
        let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        Normalizer {
            mean,
            std: if std > 0.0 && std.is_finite() { std } else { 1.0 },
        }
    }

    pub fn normalize_energy(&self, e: f64) -> f64 {
        (e - self.mean) / self.std
    }

    pub fn denormalize_energy(&self, e: f64) -> f64 {
        e * self.std + self.mean
    }

    pub fn normalize_force(&self, f: [f64; 3]) -> [f64; 3] {
        f.map(|x| x / self.std)
    }

    pub fn denormalize_force(&self, f: [f64; 3]) -> [f64; 3] {
        f.map(|x| x * self.std)
    }
}
