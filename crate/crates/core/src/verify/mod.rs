//! Checks of the physical guarantees: symmetry, exact gradients, energy
//! conservation along paths and in molecular dynamics.

mod checks;
mod isometry;
mod md;
mod potential;
mod report;

pub use checks::{
    check_force_consistency, check_invariances, check_work_integral, force_error_scaling, force_fd_error, loop_work,
    work_residual, InvarianceTolerances, LoopSpec, LoopWork, PathSpec, Quadrature, WorkCheck,
};
pub use isometry::{
    apply, apply_all, determinant, orthogonality_error, random_molecules, translate, IsometrySampler, Mat3,
};
pub use md::{velocity_verlet, MdState};
pub use potential::{AbsoluteCoordinateModel, ConstantForce, CurlField, HarmonicWell, Potential};
pub use report::{CheckRow, Report};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Conformation;
use crate::error::Result;

/// Settings of [`verify_model`].
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random molecules for the invariance trials.
    pub n_molecules: usize,
    pub n_trials: usize,
    /// Conformations for the finite-difference force check.
    pub n_force_checks: usize,
    pub fd_step: f64,
    pub species: Vec<u32>,
    pub tolerances: InvarianceTolerances,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0,
            n_molecules: 100,
            n_trials: 100,
            n_force_checks: 20,
            fd_step: 1e-4,
            species: vec![1, 6, 7, 8],
            tolerances: InvarianceTolerances::default(),
        }
    }
}

/// Random displacement field with entries uniform in ±`scale`.
pub fn random_displacement(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-scale..=scale)))
        .collect()
}

/// Copy of `conf` moved by `d`.
pub fn displaced(conf: &Conformation, d: &[[f64; 3]]) -> Conformation {
    let mut out = conf.clone();
    for (p, d) in out.positions.iter_mut().zip(d) {
        for k in 0..3 {
            p[k] += d[k];
        }
    }
    out
}

/// The full harness: invariances, finite-difference forces with their
/// `O(h²)` convergence, work-integral convergence and closed-loop work.
pub fn verify_model<P: Potential>(model: &P, opts: &SuiteOptions) -> Result<Report> {
    let molecules = random_molecules(opts.seed, opts.n_molecules.max(1), 3, 8, &opts.species);
    let mut report = check_invariances(model, &molecules, opts.n_trials, opts.seed ^ 0x5EED, &opts.tolerances)?;

    for (i, m) in molecules.iter().take(opts.n_force_checks).enumerate() {
        report.record("force_fd", i, check_force_consistency(model, m, opts.fd_step)?, 1e-5);
    }
    if let Some(m) = molecules.first() {
        let (_, orders) = force_error_scaling(model, m, &[1e-2, 1e-3])?;
        report.record_at_least("force_fd_order", 0, orders[0], 1.8);

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xBA7);
        let end = displaced(m, &random_displacement(&mut rng, m.n_atoms(), 0.2));
        let path = PathSpec::new(m, &end)?;
        let w = check_work_integral(model, &path, 8, Quadrature::Midpoint)?;
        report.record_at_least("work_order", 0, w.order, 1.9);

        let u = random_displacement(&mut rng, m.n_atoms(), 1.0);
        let v = random_displacement(&mut rng, m.n_atoms(), 1.0);
        let spec = LoopSpec::new(m, u, v, 0.1)?;
        report.record("loop_work", 0, loop_work(model, &spec, 64)?.relative(), 1e-9);
    }
    Ok(report)
}
