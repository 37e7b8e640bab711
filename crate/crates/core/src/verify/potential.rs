use crate::data::SyntheticOracle;
use crate::error::{Error, Result};
use crate::model::SchNet;

/// Anything that maps a geometry to an energy and forces `F = −∂E/∂r`.
pub trait Potential {
    fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64>;

    fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)>;
}

impl Potential for SchNet {
    fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64> {
        self.predict_energy(z, r)
    }

    fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        self.predict_energy_forces(z, r)
    }
}

impl Potential for SyntheticOracle {
    fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64> {
        SyntheticOracle::energy(self, z, r)
    }

    fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        SyntheticOracle::energy_forces(self, z, r)
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64> {
        (**self).energy(z, r)
    }

    fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        (**self).energy_forces(z, r)
    }
}

fn same_len(z: &[u32], r: &[[f64; 3]]) -> Result<()> {
    if z.len() != r.len() {
        return Err(Error::shape("potential", &[z.len()], &[r.len(), 3]));
    }
    Ok(())
}

/// Every atom tethered to the origin: `E = ½k Σ‖r_i‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicWell {
    pub k: f64,
}

impl Potential for HarmonicWell {
    fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64> {
        Ok(self.energy_forces(z, r)?.0)
    }

    fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        same_len(z, r)?;
        let e = 0.5 * self.k * r.iter().flatten().map(|x| x * x).sum::<f64>();
        Ok((e, r.iter().map(|p| p.map(|x| -self.k * x)).collect()))
    }
}

/// Uniform external field: the same force on every atom, `E = −Σ f·r_i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantForce {
    pub force: [f64; 3],
}

impl Potential for ConstantForce {
    fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64> {
        same_len(z, r)?;
        Ok(-r
            .iter()
            .map(|p| (0..3).map(|k| self.force[k] * p[k]).sum::<f64>())
            .sum::<f64>())
    }

    fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        Ok((self.energy(z, r)?, vec![self.force; r.len()]))
    }
}

/// A swirl `F_i = ω ẑ × r_i` with zero energy. Not a gradient field, so it
/// does net work around closed loops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurlField {
    pub omega: f64,
}

impl Potential for CurlField {
    fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64> {
        same_len(z, r)?;
        Ok(0.0)
    }

    fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        same_len(z, r)?;
        Ok((
            0.0,
            r.iter().map(|p| [-self.omega * p[1], self.omega * p[0], 0.0]).collect(),
        ))
    }
}

/// A model that sees absolute coordinates: `E = E_inner + a Σ_i sin(w·r_i)`.
/// Breaks rotation and translation invariance while staying conservative.
#[derive(Clone, Debug)]
pub struct AbsoluteCoordinateModel<P> {
    pub inner: P,
    pub amplitude: f64,
    pub wave: [f64; 3],
}

impl<P: Potential> Potential for AbsoluteCoordinateModel<P> {
    fn energy(&self, z: &[u32], r: &[[f64; 3]]) -> Result<f64> {
        Ok(self.energy_forces(z, r)?.0)
    }

    fn energy_forces(&self, z: &[u32], r: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        let (mut e, mut f) = self.inner.energy_forces(z, r)?;
        for (p, fi) in r.iter().zip(&mut f) {
            let phase: f64 = (0..3).map(|k| self.wave[k] * p[k]).sum();
            e += self.amplitude * phase.sin();
            for k in 0..3 {
                fi[k] -= self.amplitude * phase.cos() * self.wave[k];
            }
        }
        Ok((e, f))
    }
}
