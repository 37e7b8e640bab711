use super::isometry::{apply, apply_all, translate, IsometrySampler};
use super::potential::Potential;
use super::report::Report;
use crate::data::Conformation;
use crate::error::{Error, Result};

/// Tolerances of the invariance suite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvarianceTolerances {
    /// On `|ΔE| / (1 + |E|)` under rotations, reflections and translations.
    pub energy: f64,
    /// On `|ΔE| / (1 + |E|)` under atom permutations.
    pub permutation: f64,
    /// Max-norm of `F(QR) − Q F(R)` and of permuted-force mismatches.
    pub equivariance: f64,
    /// Max component of `Σ_i F_i`.
    pub net_force: f64,
    /// Largest translation, Å.
    pub max_translation: f64,
}

impl Default for InvarianceTolerances {
    fn default() -> Self {
        InvarianceTolerances {
            energy: 1e-8,
            permutation: 1e-10,
            equivariance: 1e-6,
            net_force: 1e-8,
            max_translation: 100.0,
        }
    }
}

fn max_abs_diff(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| (0..3).map(move |k| (x[k] - y[k]).abs()))
        .fold(0.0, f64::max)
}

/// Rotation, reflection, translation and permutation checks on `n_trials`
/// trials, cycling through `molecules`.
pub fn check_invariances<P: Potential>(
    model: &P,
    molecules: &[Conformation],
    n_trials: usize,
    seed: u64,
    tol: &InvarianceTolerances,
) -> Result<Report> {
    let mut report = Report::new();
    if n_trials == 0 {
        return Ok(report);
    }
    if molecules.is_empty() {
        return Err(Error::InsufficientData(
            "invariance checks need at least one molecule".into(),
        ));
    }
    let mut s = IsometrySampler::new(seed);
    for trial in 0..n_trials {
        let m = &molecules[trial % molecules.len()];
        let (z, r) = (&m.z, &m.positions);
        let (e, f) = model.energy_forces(z, r)?;
        let rel = |other: f64| (other - e).abs() / (1.0 + e.abs());

        for (name, q) in [("rotation", s.rotation()), ("reflection", s.reflection())] {
            let (eq, fq) = model.energy_forces(z, &apply_all(&q, r))?;
            report.record(&format!("{name}_energy"), trial, rel(eq), tol.energy);
            let rotated: Vec<[f64; 3]> = f.iter().map(|&v| apply(&q, v)).collect();
            report.record(
                &format!("{name}_force"),
                trial,
                max_abs_diff(&fq, &rotated),
                tol.equivariance,
            );
        }

        let t = s.translation(tol.max_translation);
        let (et, ft) = model.energy_forces(z, &translate(r, t))?;
        report.record("translation_energy", trial, rel(et), tol.energy);
        report.record("translation_force", trial, max_abs_diff(&ft, &f), tol.equivariance);

        let perm = s.permutation(z.len());
        let zp: Vec<u32> = perm.iter().map(|&p| z[p]).collect();
        let rp: Vec<[f64; 3]> = perm.iter().map(|&p| r[p]).collect();
        let (ep, fp) = model.energy_forces(&zp, &rp)?;
        let expect: Vec<[f64; 3]> = perm.iter().map(|&p| f[p]).collect();
        report.record("permutation_energy", trial, rel(ep), tol.permutation);
        report.record("permutation_force", trial, max_abs_diff(&fp, &expect), tol.equivariance);

        let net = (0..3)
            .map(|k| f.iter().map(|v| v[k]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        report.record("net_force", trial, net, tol.net_force);
    }
    Ok(report)
}

/// Largest deviation between analytic forces and central differences of the
/// energy with step `h`, relative to the largest force component.
/// A single atom has no forces and scores 0.
pub fn check_force_consistency<P: Potential>(model: &P, conf: &Conformation, h: f64) -> Result<f64> {
    let (abs, scale) = force_fd_error(model, conf, h)?;
    Ok(if scale == 0.0 { abs } else { abs / scale })
}

/// Absolute max-norm force error and the max-norm of the analytic forces.
pub fn force_fd_error<P: Potential>(model: &P, conf: &Conformation, h: f64) -> Result<(f64, f64)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (z, r) = (&conf.z, &conf.positions);
    let (_, f) = model.energy_forces(z, r)?;
    if z.len() == 1 {
        return Ok((0.0, 0.0));
    }
    let scale = f.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut worst: f64 = 0.0;
    for a in 0..z.len() {
        for k in 0..3 {
            let mut rp = r.clone();
            let mut rm = r.clone();
            rp[a][k] += h;
            rm[a][k] -= h;
            let fd = -(model.energy(z, &rp)? - model.energy(z, &rm)?) / (2.0 * h);
            worst = worst.max((fd - f[a][k]).abs());
        }
    }
    Ok((worst, scale))
}

/// Absolute finite-difference force errors for each step in `steps`, and the
/// convergence order fitted between consecutive steps.
pub fn force_error_scaling<P: Potential>(
    model: &P,
    conf: &Conformation,
    steps: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let errors = steps
        .iter()
        .map(|&h| force_fd_error(model, conf, h).map(|(e, _)| e))
        .collect::<Result<Vec<f64>>>()?;
    let orders = errors
        .windows(2)
        .zip(steps.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    Ok((errors, orders))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    Midpoint,
    Trapezoid,
}

/// Straight-line path in configuration space between two geometries of the same molecule.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub z: Vec<u32>,
    pub start: Vec<[f64; 3]>,
    pub end: Vec<[f64; 3]>,
}

impl PathSpec {
    pub fn new(start: &Conformation, end: &Conformation) -> Result<Self> {
        if start.z != end.z {
            return Err(Error::Config(
                "path endpoints must have identical atomic numbers".into(),
            ));
        }
        Ok(PathSpec {
            z: start.z.clone(),
            start: start.positions.clone(),
            end: end.positions.clone(),
        })
    }

    pub fn at(&self, t: f64) -> Vec<[f64; 3]> {
        self.start
            .iter()
            .zip(&self.end)
            .map(|(a, b)| std::array::from_fn(|k| a[k] + t * (b[k] - a[k])))
            .collect()
    }
}

fn dot(f: &[[f64; 3]], d: &[[f64; 3]]) -> f64 {
    f.iter()
        .zip(d)
        .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
        .sum()
}

/// Net `Σ F·Δr` and gross `Σ |F·Δr|` over `m` steps of a polyline visiting `point(0), …, point(m)`.
fn polyline_work<P: Potential>(
    model: &P,
    z: &[u32],
    m: usize,
    rule: Quadrature,
    point: impl Fn(usize) -> Vec<[f64; 3]>,
) -> Result<(f64, f64)> {
    let (mut work, mut gross) = (0.0, 0.0);
    let mut prev = point(0);
    let mut f_prev = match rule {
        Quadrature::Trapezoid => Some(model.energy_forces(z, &prev)?.1),
        Quadrature::Midpoint => None,
    };
    for k in 1..=m {
        let next = point(k);
        let step: Vec<[f64; 3]> = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| std::array::from_fn(|c| b[c] - a[c]))
            .collect();
        let w = match rule {
            Quadrature::Midpoint => {
                let mid: Vec<[f64; 3]> = prev
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| std::array::from_fn(|c| 0.5 * (a[c] + b[c])))
                    .collect();
                dot(&model.energy_forces(z, &mid)?.1, &step)
            }
            Quadrature::Trapezoid => {
                let f_next = model.energy_forces(z, &next)?.1;
                let w = 0.5 * (dot(f_prev.as_ref().expect("trapezoid keeps forces"), &step) + dot(&f_next, &step));
                f_prev = Some(f_next);
                w
            }
        };
        work += w;
        gross += w.abs();
        prev = next;
    }
    Ok((work, gross))
}

/// `|E(end) − E(start) + Σ_k F̂(r_k)·Δr_k|` with `m` quadrature steps.
pub fn work_residual<P: Potential>(model: &P, path: &PathSpec, m: usize, rule: Quadrature) -> Result<f64> {
    if m == 0 {
        return Err(Error::Config("work integral needs at least one step".into()));
    }
    let de = model.energy(&path.z, &path.end)? - model.energy(&path.z, &path.start)?;
    let (work, _) = polyline_work(model, &path.z, m, rule, |k| path.at(k as f64 / m as f64))?;
    Ok((de + work).abs())
}

/// Residuals with `m` and `2m` steps and the observed order `log₂(res(m)/res(2m))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkCheck {
    pub m: usize,
    pub residual_m: f64,
    pub residual_2m: f64,
    pub order: f64,
}

pub fn check_work_integral<P: Potential>(model: &P, path: &PathSpec, m: usize, rule: Quadrature) -> Result<WorkCheck> {
    let residual_m = work_residual(model, path, m, rule)?;
    let residual_2m = work_residual(model, path, 2 * m, rule)?;
    Ok(WorkCheck {
        m,
        residual_m,
        residual_2m,
        order: (residual_m / residual_2m).log2(),
    })
}

/// Closed circular loop `r(θ) = r₀ + ρ(cos θ·u + sin θ·v)` in configuration space,
/// with `u` and `v` orthonormalized displacement fields.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopSpec {
    pub z: Vec<u32>,
    pub center: Vec<[f64; 3]>,
    pub u: Vec<[f64; 3]>,
    pub v: Vec<[f64; 3]>,
    pub radius: f64,
}

impl LoopSpec {
    pub fn new(conf: &Conformation, u: Vec<[f64; 3]>, v: Vec<[f64; 3]>, radius: f64) -> Result<Self> {
        let n = conf.n_atoms();
        if u.len() != n || v.len() != n {
            return Err(Error::shape("loop directions", &[n, 3], &[u.len(), v.len()]));
        }
        let norm = |a: &[[f64; 3]]| dot(a, a).sqrt();
        let nu = norm(&u);
        let u: Vec<[f64; 3]> = u.iter().map(|p| p.map(|x| x / nu)).collect();
        let proj = dot(&v, &u);
        let v: Vec<[f64; 3]> = v
            .iter()
            .zip(&u)
            .map(|(a, b)| std::array::from_fn(|k| a[k] - proj * b[k]))
            .collect();
        let nv = norm(&v);
        if !(nu > 0.0 && nv > 1e-12 * nu) {
            return Err(Error::Config("loop directions must be linearly independent".into()));
        }
        let v = v.iter().map(|p| p.map(|x| x / nv)).collect();
        Ok(LoopSpec {
            z: conf.z.clone(),
            center: conf.positions.clone(),
            u,
            v,
            radius,
        })
    }

    pub fn at(&self, theta: f64) -> Vec<[f64; 3]> {
        let (c, s) = (self.radius * theta.cos(), self.radius * theta.sin());
        (0..self.center.len())
            .map(|a| std::array::from_fn(|k| self.center[a][k] + c * self.u[a][k] + s * self.v[a][k]))
            .collect()
    }
}

/// Work done around a closed loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopWork {
    /// `Σ F·Δr`; zero in the limit for any gradient field.
    pub net: f64,
    /// `Σ |F·Δr|`, the scale against which `net` is judged.
    pub gross: f64,
}

impl LoopWork {
    /// `|net| / gross`, 0 when no work is done at all.
    pub fn relative(&self) -> f64 {
        if self.gross == 0.0 {
            0.0
        } else {
            self.net.abs() / self.gross
        }
    }
}

/// Work around the loop discretized as an `m`-gon with midpoint quadrature.
///
/// For a smooth gradient field the integrand is periodic, so the net work
/// falls to rounding level very quickly as `m` grows.
pub fn loop_work<P: Potential>(model: &P, spec: &LoopSpec, m: usize) -> Result<LoopWork> {
    if m < 3 {
        return Err(Error::Config("a closed loop needs at least three segments".into()));
    }
    let tau = std::f64::consts::TAU;
    // the first and last vertex are the same point, evaluated identically
    let (net, gross) = polyline_work(model, &spec.z, m, Quadrature::Midpoint, |k| {
        spec.at(if k == m { 0.0 } else { tau * k as f64 / m as f64 })
    })?;
    Ok(LoopWork { net, gross })
}
