use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters. Defaults follow the published architecture:
/// 64 features, three interaction blocks and Gaussians every 0.1 Å from 0 to
/// 29.9 Å with γ = 10 Å⁻².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_features: usize,
    pub n_interactions: usize,
    /// First RBF center, Å.
    pub rbf_min: f64,
    /// Center spacing, Å.
    pub rbf_spacing: f64,
    pub rbf_count: usize,
    /// Gaussian width, Å⁻².
    pub rbf_gamma: f64,
    pub max_atomic_number: u32,
    /// Whether cfconv sums over `j = i` as well.
    pub include_self_pairs: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_features: 64,
            n_interactions: 3,
            rbf_min: 0.0,
            rbf_spacing: 0.1,
            rbf_count: 300,
            rbf_gamma: 10.0,
            max_atomic_number: 100,
            include_self_pairs: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_features < 1 {
            return fail("n_features must be at least 1");
        }
        if self.n_interactions < 1 {
            return fail("n_interactions must be at least 1");
        }
        if self.rbf_count < 2 {
            return fail("rbf_count must be at least 2");
        }
        if !(self.rbf_spacing > 0.0 && self.rbf_spacing.is_finite()) {
            return fail("rbf_spacing must be positive");
        }
        if !(self.rbf_gamma > 0.0 && self.rbf_gamma.is_finite()) {
            return fail("rbf_gamma must be positive");
        }
        if !self.rbf_min.is_finite() {
            return fail("rbf_min must be finite");
        }
        if self.max_atomic_number < 1 {
            return fail("max_atomic_number must be at least 1");
        }
        Ok(())
    }

    /// `μ_k = rbf_min + k·rbf_spacing` for `k = 0..rbf_count`.
    pub fn rbf_centers(&self) -> Vec<f64> {
        (0..self.rbf_count)
            .map(|k| self.rbf_min + k as f64 * self.rbf_spacing)
            .collect()
    }

    /// Hidden width of the output head.
    pub fn head_width(&self) -> usize {
        (self.n_features / 2).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_centers_span_zero_to_29_9() {
        let c = ModelConfig::default().rbf_centers();
        assert_eq!(c.len(), 300);
        assert_eq!(c[0], 0.0);
        assert!((c[299] - 29.9).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_rejected() {
        let ok = ModelConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ModelConfig {
                n_features: 0,
                ..ok.clone()
            },
            ModelConfig {
                n_interactions: 0,
                ..ok.clone()
            },
            ModelConfig {
                rbf_count: 1,
                ..ok.clone()
            },
            ModelConfig {
                rbf_spacing: 0.0,
                ..ok.clone()
            },
            ModelConfig {
                rbf_gamma: -1.0,
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }
}
