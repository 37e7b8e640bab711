use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Conformation, Dataset};
use crate::error::{Error, Result};

/// Morse pair potential `V(r) = D_e[(1 − e^{−a(r − r_e)})² − 1]`, minimum `−D_e` at `r_e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseParams {
    /// Well depth, kcal/mol.
    pub de: f64,
    /// Width parameter, 1/Å.
    pub a: f64,
    /// Equilibrium distance, Å.
    pub re: f64,
}

impl MorseParams {
    pub fn energy(&self, r: f64) -> f64 {
        let x = 1.0 - (-self.a * (r - self.re)).exp();
        self.de * (x * x - 1.0)
    }

    /// dV/dr.
    pub fn derivative(&self, r: f64) -> f64 {
        let e = (-self.a * (r - self.re)).exp();
        2.0 * self.de * self.a * (1.0 - e) * e
    }
}

/// Sum of pairwise Morse terms with exact analytic forces; stands in for
/// quantum-chemistry labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracle {
    pairs: BTreeMap<(u32, u32), MorseParams>,
    fallback: Option<MorseParams>,
}

impl SyntheticOracle {
    pub fn new() -> Self {
        SyntheticOracle::default()
    }

    /// Same parameters for every pair of species.
    pub fn uniform(params: MorseParams) -> Self {
        SyntheticOracle {
            pairs: BTreeMap::new(),
            fallback: Some(params),
        }
    }

    pub fn with_pair(mut self, z1: u32, z2: u32, params: MorseParams) -> Self {
        self.pairs.insert((z1.min(z2), z1.max(z2)), params);
        self
    }

    /// Bent triatomic (O–H bonds plus a weak H–H term) whose minimum sits close
    /// to [`SyntheticOracle::water_template`].
    pub fn water_like() -> Self {
        SyntheticOracle::new()
            .with_pair(
                8,
                1,
                MorseParams {
                    de: 110.0,
                    a: 2.2,
                    re: 0.96,
                },
            )
            .with_pair(
                1,
                1,
                MorseParams {
                    de: 10.0,
                    a: 1.5,
                    re: 1.52,
                },
            )
            .with_pair(
                8,
                8,
                MorseParams {
                    de: 120.0,
                    a: 2.6,
                    re: 1.21,
                },
            )
    }

    pub fn water_template() -> Conformation {
        let half = (104.5f64 / 2.0).to_radians();
        Conformation::new(
            vec![8, 1, 1],
            vec![
                [0.0, 0.0, 0.0],
                [0.96 * half.sin(), 0.96 * half.cos(), 0.0],
                [-0.96 * half.sin(), 0.96 * half.cos(), 0.0],
            ],
        )
        .expect("valid template")
        .with_molecule_id("H2O")
    }

    pub fn params(&self, z1: u32, z2: u32) -> Result<MorseParams> {
        self.pairs
            .get(&(z1.min(z2), z1.max(z2)))
            .copied()
            .or(self.fallback)
            .ok_or_else(|| Error::Config(format!("no Morse parameters for species pair ({z1}, {z2})")))
    }

    pub fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64> {
        Ok(self.energy_forces(z, r)?.0)
    }

    /// Total energy and `F_i = −∂E/∂r_i`.
    pub fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        if z.len() != r.len() {
            return Err(Error::shape("morse", &[z.len()], &[r.len(), 3]));
        }
        let mut energy = 0.0;
        let mut forces = vec![[0.0; 3]; z.len()];
        for i in 0..z.len() {
            for j in i + 1..z.len() {
                let p = self.params(z[i], z[j])?;
                let d = [r[i][0] - r[j][0], r[i][1] - r[j][1], r[i][2] - r[j][2]];
                let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                energy += p.energy(dist);
                if dist > 0.0 {
                    let scale = -p.derivative(dist) / dist;
                    for k in 0..3 {
                        forces[i][k] += scale * d[k];
                        forces[j][k] -= scale * d[k];
                    }
                }
            }
        }
        Ok((energy, forces))
    }

    /// Copy of `conf` with energy and forces replaced by exact oracle labels.
    pub fn label(&self, conf: &Conformation) -> Result<Conformation> {
        let (e, f) = self.energy_forces(&conf.z, &conf.positions)?;
        Ok(conf.clone().with_energy(e).with_forces(f))
    }
}

/// `n_frames` Gaussian perturbations of `template` (σ = `displacement_scale` Å
/// per coordinate), labelled exactly by `oracle`.
pub fn generate_synthetic(
    oracle: &SyntheticOracle,
    template: &Conformation,
    n_frames: usize,
    displacement_scale: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(displacement_scale >= 0.0 && displacement_scale.is_finite()) {
        return Err(Error::Config(format!(
            "displacement scale must be a non-negative number, got {displacement_scale}"
        )));
    }
    template.validate()?;
    let normal = Normal::new(0.0, displacement_scale).expect("validated scale");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conformations = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let mut conf = template.clone();
        for p in conf.positions.iter_mut().flatten() {
            *p += normal.sample(&mut rng);
        }
        conformations.push(oracle.label(&conf)?);
    }
    Ok(Dataset {
        conformations,
        source: Some(format!("synthetic:morse:{}", template.molecule_id)),
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diatomic_minimum() {
        let p = MorseParams {
            de: 50.0,
            a: 1.8,
            re: 1.1,
        };
        let oracle = SyntheticOracle::uniform(p);
        let (e, f) = oracle.energy_forces(&[6, 8], &[[0.0; 3], [1.1, 0.0, 0.0]]).unwrap();
        assert_eq!(e, -50.0);
        assert_eq!(f, vec![[0.0; 3]; 2]);
    }

    #[test]
    fn zero_displacement_gives_identical_copies() {
        let oracle = SyntheticOracle::water_like();
        let ds = generate_synthetic(&oracle, &SyntheticOracle::water_template(), 4, 0.0, 1).unwrap();
        assert_eq!(ds.len(), 4);
        assert!(ds.iter().all(|c| c == &ds.conformations[0]));
        assert!(generate_synthetic(&oracle, &SyntheticOracle::water_template(), 1, -1.0, 1).is_err());
    }

    #[test]
    fn forces_match_finite_differences() {
        let oracle = SyntheticOracle::water_like();
        let ds = generate_synthetic(&oracle, &SyntheticOracle::water_template(), 10, 0.05, 3).unwrap();
        let h = 1e-5;
        for conf in &ds {
            let forces = conf.forces.as_ref().unwrap();
            for a in 0..conf.n_atoms() {
                for k in 0..3 {
                    let mut rp = conf.positions.clone();
                    let mut rm = conf.positions.clone();
                    rp[a][k] += h;
                    rm[a][k] -= h;
                    let fd = -(oracle.energy(&conf.z, &rp).unwrap() - oracle.energy(&conf.z, &rm).unwrap()) / (2.0 * h);
                    assert!(
                        (fd - forces[a][k]).abs() < 1e-8 * forces[a][k].abs().max(1.0),
                        "{fd} vs {}",
                        forces[a][k]
                    );
                }
            }
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let oracle = SyntheticOracle::water_like();
        let t = SyntheticOracle::water_template();
        assert_eq!(
            generate_synthetic(&oracle, &t, 5, 0.1, 7).unwrap(),
            generate_synthetic(&oracle, &t, 5, 0.1, 7).unwrap()
        );
    }

    #[test]
    fn missing_pair_parameters() {
        let oracle = SyntheticOracle::new().with_pair(
            1,
            1,
            MorseParams {
                de: 1.0,
                a: 1.0,
                re: 1.0,
            },
        );
        assert!(oracle.energy(&[1, 6], &[[0.0; 3], [1.0, 0.0, 0.0]]).is_err());
    }
}
