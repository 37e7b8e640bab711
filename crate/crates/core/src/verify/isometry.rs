use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Conformation;

pub type Mat3 = [[f64; 3]; 3];

/// Seeded source of random rigid motions and atom permutations.
#[derive(Clone, Debug)]
pub struct IsometrySampler {
    rng: ChaCha8Rng,
}

impl IsometrySampler {
    pub fn new(seed: u64) -> Self {
        IsometrySampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Proper rotation, uniform over SO(3): a normalized Gaussian quaternion.
    pub fn rotation(&mut self) -> Mat3 {
        let mut q: [f64; 4] = std::array::from_fn(|_| self.rng.sample(StandardNormal));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.iter_mut().for_each(|x| *x /= n);
        let [w, x, y, z] = q;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Improper orthogonal matrix (determinant −1): a rotation followed by a mirror.
    pub fn reflection(&mut self) -> Mat3 {
        let mut q = self.rotation();
        q[0] = q[0].map(|x| -x);
        q
    }

    /// Translation with norm at most `max_norm`, uniform in the ball.
    pub fn translation(&mut self, max_norm: f64) -> [f64; 3] {
        loop {
            let t: [f64; 3] = std::array::from_fn(|_| self.rng.random_range(-1.0..=1.0));
            if t.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
                return t.map(|x| x * max_norm);
            }
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.rng);
        p
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

pub fn apply(q: &Mat3, v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|a| q[a][0] * v[0] + q[a][1] * v[1] + q[a][2] * v[2])
}

pub fn apply_all(q: &Mat3, r: &[[f64; 3]]) -> Vec<[f64; 3]> {
    r.iter().map(|&p| apply(q, p)).collect()
}

pub fn translate(r: &[[f64; 3]], t: [f64; 3]) -> Vec<[f64; 3]> {
    r.iter().map(|p| std::array::from_fn(|k| p[k] + t[k])).collect()
}

pub fn determinant(q: &Mat3) -> f64 {
    q[0][0] * (q[1][1] * q[2][2] - q[1][2] * q[2][1]) - q[0][1] * (q[1][0] * q[2][2] - q[1][2] * q[2][0])
        + q[0][2] * (q[1][0] * q[2][1] - q[1][1] * q[2][0])
}

/// `‖QᵀQ − I‖∞`.
pub fn orthogonality_error(q: &Mat3) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let dot: f64 = (0..3).map(|k| q[k][a] * q[k][b]).sum();
            worst = worst.max((dot - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

/// Random molecules of `min_atoms..=max_atoms` atoms drawn from `species`,
/// atoms at least 0.8 Å apart inside a cube that grows with the atom count.
pub fn random_molecules(
    seed: u64,
    count: usize,
    min_atoms: usize,
    max_atoms: usize,
    species: &[u32],
) -> Vec<Conformation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(min_atoms..=max_atoms);
            let half = 0.6 * (n as f64).cbrt() + 0.6;
            let mut r: Vec<[f64; 3]> = Vec::with_capacity(n);
            while r.len() < n {
                let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-half..half));
                let clear = r
                    .iter()
                    .all(|q| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>() >= 0.64);
                if clear {
                    r.push(p);
                }
            }
            let z = (0..n).map(|_| species[rng.random_range(0..species.len())]).collect();
            Conformation::new(z, r).expect("valid random molecule")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_matrices_are_orthogonal() {
        let mut s = IsometrySampler::new(1);
        for _ in 0..200 {
            let q = s.rotation();
            assert!(orthogonality_error(&q) < 1e-12);
            assert!((determinant(&q) - 1.0).abs() < 1e-12);
            let m = s.reflection();
            assert!(orthogonality_error(&m) < 1e-12);
            assert!((determinant(&m) + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotations_spread_over_the_sphere() {
        // a uniformly random rotation sends ẑ to a uniform point on the sphere: E[z'] = 0, E[z'²] = 1/3
        let mut s = IsometrySampler::new(2);
        let n = 20_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let z = apply(&s.rotation(), [0.0, 0.0, 1.0])[2];
            m1 += z;
            m2 += z * z;
        }
        assert!((m1 / n as f64).abs() < 0.02);
        assert!((m2 / n as f64 - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn translations_and_permutations() {
        let mut s = IsometrySampler::new(3);
        for _ in 0..100 {
            let t = s.translation(100.0);
            assert!(t.iter().map(|x| x * x).sum::<f64>().sqrt() <= 100.0);
            let mut p = s.permutation(7);
            p.sort_unstable();
            assert_eq!(p, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn random_molecules_respect_bounds() {
        let mols = random_molecules(4, 50, 3, 8, &[1, 6, 8]);
        assert_eq!(mols.len(), 50);
        for m in &mols {
            assert!((3..=8).contains(&m.n_atoms()));
            assert!(m.z.iter().all(|z| [1, 6, 8].contains(z)));
        }
        assert_eq!(mols, random_molecules(4, 50, 3, 8, &[1, 6, 8]));
    }
}
