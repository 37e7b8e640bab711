use super::potential::Potential;
use crate::error::{Error, Result};

/// Microcanonical trajectory state in reduced units.
#[derive(Clone, Debug, PartialEq)]
pub struct MdState {
    pub z: Vec<u32>,
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    pub masses: Vec<f64>,
    pub dt: f64,
    pub step: u64,
    /// Forces at the current positions.
    pub forces: Vec<[f64; 3]>,
    /// Kinetic, potential and total energy at every recorded step, starting at step 0.
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
    pub total: Vec<f64>,
    /// Largest single-step displacement of any atom so far.
    pub max_displacement: f64,
    /// Positions every `record_every` steps, when non-zero.
    pub record_every: u64,
    pub trajectory: Vec<Vec<[f64; 3]>>,
}

fn kinetic(v: &[[f64; 3]], m: &[f64]) -> f64 {
    v.iter()
        .zip(m)
        .map(|(v, m)| 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
        .sum()
}

fn check_forces(f: &[[f64; 3]], step: u64) -> Result<()> {
    if f.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("forces at MD step {step}")));
    }
    Ok(())
}

impl MdState {
    /// Starts a trajectory with unit masses. Evaluates the initial forces and energies.
    pub fn new<P: Potential>(
        model: &P,
        z: Vec<u32>,
        positions: Vec<[f64; 3]>,
        velocities: Vec<[f64; 3]>,
        dt: f64,
    ) -> Result<Self> {
        let masses = vec![1.0; z.len()];
        Self::with_masses(model, z, positions, velocities, masses, dt)
    }

    pub fn with_masses<P: Potential>(
        model: &P,
        z: Vec<u32>,
        positions: Vec<[f64; 3]>,
        velocities: Vec<[f64; 3]>,
        masses: Vec<f64>,
        dt: f64,
    ) -> Result<Self> {
        let n = z.len();
        if positions.len() != n || velocities.len() != n || masses.len() != n {
            return Err(Error::shape(
                "md state",
                &[n],
                &[positions.len(), velocities.len(), masses.len()],
            ));
        }
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("timestep must be non-negative, got {dt}")));
        }
        if masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Config("masses must be positive".into()));
        }
        let (e, forces) = model.energy_forces(&z, &positions)?;
        check_forces(&forces, 0)?;
        let k = kinetic(&velocities, &masses);
        Ok(MdState {
            z,
            positions,
            velocities,
            masses,
            dt,
            step: 0,
            forces,
            kinetic: vec![k],
            potential: vec![e],
            total: vec![k + e],
            max_displacement: 0.0,
            record_every: 0,
            trajectory: Vec::new(),
        })
    }

    /// Records positions every `every` steps, including the current frame.
    pub fn recording(mut self, every: u64) -> Self {
        self.record_every = every;
        if every > 0 {
            self.trajectory.push(self.positions.clone());
        }
        self
    }

    /// `max_t |E_tot(t) − E_tot(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.total[0];
        self.total.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }

    pub fn initial_kinetic(&self) -> f64 {
        self.kinetic[0]
    }
}

/// Advances `state` by `n_steps` velocity-Verlet steps with `a = F/m`.
/// Aborts with the step index when forces become non-finite; `state` then
/// holds the last finite step.
pub fn velocity_verlet<P: Potential>(model: &P, state: &mut MdState, n_steps: u64) -> Result<()> {
    let dt = state.dt;
    for _ in 0..n_steps {
        let mut positions = state.positions.clone();
        let mut disp: f64 = 0.0;
        for ((r, v), (f, m)) in positions
            .iter_mut()
            .zip(&state.velocities)
            .zip(state.forces.iter().zip(&state.masses))
        {
            let mut d2 = 0.0;
            for k in 0..3 {
                let dx = v[k] * dt + 0.5 * (f[k] / m) * dt * dt;
                r[k] += dx;
                d2 += dx * dx;
            }
            disp = disp.max(d2.sqrt());
        }
        let (e, forces) = model.energy_forces(&state.z, &positions)?;
        check_forces(&forces, state.step + 1)?;
        for ((v, (f_old, f_new)), m) in state
            .velocities
            .iter_mut()
            .zip(state.forces.iter().zip(&forces))
            .zip(&state.masses)
        {
            for k in 0..3 {
                v[k] += 0.5 * (f_old[k] + f_new[k]) / m * dt;
            }
        }
        state.positions = positions;
        state.forces = forces;
        state.step += 1;
        state.max_displacement = state.max_displacement.max(disp);
        let k = kinetic(&state.velocities, &state.masses);
        state.kinetic.push(k);
        state.potential.push(e);
        state.total.push(k + e);
        if state.record_every > 0 && state.step.is_multiple_of(state.record_every) {
            state.trajectory.push(state.positions.clone());
        }
    }
    Ok(())
}
