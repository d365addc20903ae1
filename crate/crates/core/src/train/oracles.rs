//! Reference solutions and random sources for the training tasks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Uniform grid of `n` points on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Zero-mean Gaussian random field sampler on a fixed sensor grid with
/// covariance `exp(-(x - x')^2 / (2 l^2))`.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    pub sensors: Vec<f64>,
    pub length_scale: f64,
    pub jitter: f64,
    chol: DMatrix<f64>,
}

impl GrfSampler {
    /// Factorizes the kernel matrix, raising the jitter until it succeeds.
    pub fn new(sensors: Vec<f64>, length_scale: f64) -> Result<Self> {
        let n = sensors.len();
        let k = DMatrix::from_fn(n, n, |i, j| rbf(sensors[i], sensors[j], length_scale));
        let mut jitter = 1e-10;
        while jitter < 1e-2 {
            let m = &k + DMatrix::identity(n, n) * jitter;
            if let Some(c) = m.cholesky() {
                return Ok(Self {
                    sensors,
                    length_scale,
                    jitter,
                    chol: c.l(),
                });
            }
            jitter *= 10.0;
        }
        Err(Error::Factorization(jitter))
    }

    /// Default sensor grid: 51 points on `[-1, 1]`, unit length scale.
    pub fn standard() -> Result<Self> {
        Self::new(linspace(-1.0, 1.0, 51), 1.0)
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let n = self.sensors.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        (&self.chol * z).iter().copied().collect()
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        rbf(self.sensors[i], self.sensors[j], self.length_scale)
    }
}

fn rbf(x: f64, y: f64, l: f64) -> f64 {
    (-(x - y) * (x - y) / (2.0 * l * l)).exp()
}

/// One GRF source draw on `n_sensors` points of `[-1, 1]`, deterministic
/// per seed.
pub fn sample_grf_source(n_sensors: usize, seed: u64) -> Result<Vec<f64>> {
    let s = GrfSampler::new(linspace(-1.0, 1.0, n_sensors), 1.0)?;
    Ok(s.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Solves `-u'' = g` on a uniform grid with `u = 0` at both ends by the
/// second-order central scheme. `g` includes the boundary nodes.
pub fn poisson_solve_oracle(g: &[f64], a: f64, b: f64) -> Result<Vec<f64>> {
    let n = g.len();
    if n < 3 {
        return Err(Error::invalid("grid", "need at least 3 points"));
    }
    let h = (b - a) / (n - 1) as f64;
    let m = n - 2;
    // (-u[i-1] + 2u[i] - u[i+1]) / h^2 = g[i]; Thomas algorithm
    let mut c_prime = vec![0.0; m];
    let mut d_prime = vec![0.0; m];
    for i in 0..m {
        let rhs = g[i + 1] * h * h;
        let (sub, diag, sup) = (-1.0, 2.0, -1.0);
        if i == 0 {
            c_prime[0] = sup / diag;
            d_prime[0] = rhs / diag;
        } else {
            let denom = diag - sub * c_prime[i - 1];
            c_prime[i] = sup / denom;
            d_prime[i] = (rhs - sub * d_prime[i - 1]) / denom;
        }
    }
    let mut u = vec![0.0; n];
    for i in (0..m).rev() {
        u[i + 1] = d_prime[i] - if i + 1 < m { c_prime[i] * u[i + 2] } else { 0.0 };
    }
    Ok(u)
}

/// Gauss–Hermite nodes and weights for `int exp(-z^2) f(z) dz`, ascending.
///
/// Eigenvalues of the symmetric Jacobi matrix of the Hermite recurrence;
/// weights from the first eigenvector components.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut x, mut w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    // enforce the exact mirror symmetry the rule has in exact arithmetic
    for k in 0..n / 2 {
        let (a, b) = (0.5 * (x[n - 1 - k] - x[k]), 0.5 * (w[k] + w[n - 1 - k]));
        x[k] = -a;
        x[n - 1 - k] = a;
        w[k] = b;
        w[n - 1 - k] = b;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Viscous Burgers `u_t + u u_x = nu u_xx` with `u(0, x) = -sin(pi x)`,
/// evaluated through the Cole–Hopf transform and Gauss–Hermite quadrature.
#[derive(Debug, Clone)]
pub struct BurgersReference {
    pub nu: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl BurgersReference {
    pub fn new(nu: f64, n_nodes: usize) -> Self {
        let (nodes, weights) = gauss_hermite(n_nodes);
        Self { nu, nodes, weights }
    }

    /// `nu = 0.01 / pi`, 256 nodes.
    pub fn standard() -> Self {
        Self::new(0.01 / PI, 256)
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return -(PI * x).sin();
        }
        let spread = (4.0 * self.nu * t).sqrt();
        let inv = 1.0 / (2.0 * PI * self.nu);
        // exponents of f(x - eta) = exp(-cos(pi (x - eta)) / (2 pi nu))
        let expo: Vec<f64> = self
            .nodes
            .iter()
            .map(|&z| -(PI * (x - spread * z)).cos() * inv)
            .collect();
        let top = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for ((&z, &w), &e) in self.nodes.iter().zip(&self.weights).zip(&expo) {
            let f = w * (e - top).exp();
            num += f * (PI * (x - spread * z)).sin();
            den += f;
        }
        -num / den
    }
}

/// `burgers_reference(x, t, nu)` with 256 quadrature nodes.
pub fn burgers_reference(x: f64, t: f64, nu: f64) -> f64 {
    BurgersReference::new(nu, 256).eval(x, t)
}
