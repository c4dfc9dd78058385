//! Gauss–Hermite rules and deterministic low-discrepancy point sets.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

/// Gauss–Hermite rule for the standard normal weight `exp(-z^2/2)/sqrt(2 pi)`:
/// `E[g(Z)] ~ sum_i w_i g(z_i)`, weights summing to one. Built by the
/// Golub–Welsch eigen-decomposition of the probabilists' Hermite Jacobi matrix.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Hermite order must be at least 1");
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    /// Tensor-product nodes in `dim` dimensions as (point, weight) pairs.
    pub fn tensor(&self, dim: usize) -> Vec<(Vec<f64>, f64)> {
        let n = self.nodes.len();
        let total = n.pow(dim as u32);
        (0..total)
            .map(|mut idx| {
                let mut point = Vec::with_capacity(dim);
                let mut w = 1.0;
                for _ in 0..dim {
                    let i = idx % n;
                    idx /= n;
                    point.push(self.nodes[i]);
                    w *= self.weights[i];
                }
                (point, w)
            })
            .collect()
    }
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= candidate).all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// `n` points of the Halton sequence in `[0,1)^dim`, starting at index 1.
pub fn halton(n: usize, dim: usize) -> Vec<Vec<f64>> {
    let primes = first_primes(dim);
    (1..=n as u64)
        .map(|i| primes.iter().map(|&b| radical_inverse(i, b)).collect())
        .collect()
}

/// Quasi-uniform points strictly inside the open ball `B(center, radius)`.
///
/// Halton point `(h_1..h_d, h_{d+1})` maps to direction `Phi^{-1}(h_1..h_d)`
/// normalised and radius `radius * h_{d+1}^{1/d}`, which is uniform in the
/// ball for uniform inputs. All Halton coordinates lie in (0,1), so every
/// point is interior.
pub fn ball_points(center: &[f64], radius: f64, n: usize) -> Vec<Vec<f64>> {
    let dim = center.len();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    halton(n, dim + 1)
        .into_iter()
        .filter_map(|h| {
            let dir: Vec<f64> = h[..dim].iter().map(|&u| normal.inverse_cdf(u.max(1e-300))).collect();
            let norm = dir.iter().map(|z| z * z).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return None;
            }
            let r = radius * h[dim].powf(1.0 / dim as f64);
            Some(center.iter().zip(&dir).map(|(c, z)| c + r * z / norm).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let gh = GaussHermite::new(16);
        let moment = |k: i32| -> f64 { gh.nodes.iter().zip(&gh.weights).map(|(z, w)| w * z.powi(k)).sum() };
        assert!((moment(0) - 1.0).abs() < 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert!((moment(2) - 1.0).abs() < 1e-12);
        assert!((moment(4) - 3.0).abs() < 1e-11);
        assert!((moment(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn halton_first_values() {
        let h = halton(3, 2);
        assert_eq!(h[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(h[1], vec![0.25, 2.0 / 3.0]);
        assert_eq!(h[2], vec![0.75, 1.0 / 9.0]);
    }

    #[test]
    fn ball_points_are_interior_and_spread() {
        let c = [1.0, -2.0, 0.5];
        let pts = ball_points(&c, 0.5, 2000);
        assert!(pts.len() > 1990);
        let mut mean = [0.0; 3];
        for p in &pts {
            let d: f64 = p.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d < 0.5);
            for i in 0..3 {
                mean[i] += (p[i] - c[i]) / pts.len() as f64;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.02));
    }
}
