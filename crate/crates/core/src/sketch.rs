//! Seeded Gaussian sketch matrices and the concentration checks behind them.
//!
//! Every random quantity in the crate is drawn from a ChaCha20 stream keyed by
//! `(seed, stream)` and mapped to a standard normal through the inverse CDF,
//! so sketches are bit-reproducible across runs and platforms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const RNG_ALGORITHM: &str = "chacha20";
pub const NORMAL_METHOD: &str = "inverse-cdf";

/// Identification string written into trace headers.
pub fn rng_id() -> String {
    format!("{RNG_ALGORITHM}/{NORMAL_METHOD}")
}

/// Deterministic source of uniforms and standard normals.
pub struct GaussianStream {
    rng: ChaCha20Rng,
    normal: Normal,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            normal: Normal::standard(),
        }
    }

    /// Uniform on the open interval (0, 1), 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.normal())
    }

    /// Column-major fill, so column `j` uses draws `j*rows .. (j+1)*rows`.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let data: Vec<f64> = (0..rows * cols).map(|_| self.normal()).collect();
        DMatrix::from_vec(rows, cols, data)
    }

    /// Uniformly distributed unit vector.
    pub fn unit_vector(&mut self, n: usize) -> DVector<f64> {
        loop {
            let v = self.normal_vector(n);
            let norm = v.norm();
            if norm > 0.0 {
                return v / norm;
            }
        }
    }
}

/// One Gaussian sketch `Q_k ∈ R^{n×d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sketch {
    pub matrix: DMatrix<f64>,
    pub seed: u64,
    pub iteration: u64,
}

impl Sketch {
    /// Samples `Q_k` with i.i.d. N(0,1) entries; a pure function of `(n, d, seed, k)`.
    pub fn sample(n: usize, d: usize, seed: u64, k: u64) -> Result<Self> {
        if d == 0 || d > n {
            return Err(Error::InvalidConfig(format!(
                "sketch size d={d} must satisfy 1 <= d <= n={n}"
            )));
        }
        let matrix = GaussianStream::new(seed, k).normal_matrix(n, d);
        Ok(Self {
            matrix,
            seed,
            iteration: k,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn size(&self) -> usize {
        self.matrix.ncols()
    }

    /// `Qᵀ u`.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(u)
    }

    /// `Q v`.
    pub fn lift(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    /// `‖Q‖²_op = λ_max(QᵀQ)`.
    pub fn op_norm_sq(&self) -> f64 {
        let gram = self.matrix.tr_mul(&self.matrix);
        SymmetricEigen::new(gram).eigenvalues.max()
    }
}

/// Empirical surrogates for the vector-norm and operator-norm concentration bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationReport {
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub eps_jl: f64,
    /// Fraction of trials with `(1−ε) ≤ ‖Qᵀx‖²/d ≤ (1+ε)` for a fixed unit `x`.
    pub frac_vector_norm_ok: f64,
    /// `max_t ‖Q_t Q_tᵀ‖_op / n`; doubles as the empirical operator-norm constant.
    pub max_op_norm_ratio: f64,
}

pub fn concentration_stats(n: usize, d: usize, trials: usize, eps_jl: f64, seed: u64) -> Result<ConcentrationReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    if !(eps_jl > 0.0 && eps_jl < 1.0) {
        return Err(Error::InvalidConfig(format!("eps must lie in (0,1), got {eps_jl}")));
    }
    if d == 0 || d > n {
        return Err(Error::InvalidConfig(format!("need 1 <= d <= n, got d={d}, n={n}")));
    }
    let x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let per_trial: Vec<(bool, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let q = Sketch::sample(n, d, seed, t).expect("dimensions validated above");
            let ratio = q.project(&x).norm_squared() / d as f64;
            let ok = (1.0 - eps_jl) <= ratio && ratio <= (1.0 + eps_jl);
            (ok, q.op_norm_sq() / n as f64)
        })
        .collect();
    let ok = per_trial.iter().filter(|(ok, _)| *ok).count();
    let max_ratio = per_trial.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    Ok(ConcentrationReport {
        n,
        d,
        trials,
        eps_jl,
        frac_vector_norm_ok: ok as f64 / trials as f64,
        max_op_norm_ratio: max_ratio,
    })
}

/// Frobenius distance between the sample mean of `QQᵀ/d` over `trials` sketches and `I`.
pub fn isotropy_deviation(n: usize, d: usize, trials: usize, seed: u64) -> Result<f64> {
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for t in 0..trials as u64 {
        let q = Sketch::sample(n, d, seed, t)?;
        acc += &q.matrix * q.matrix.transpose();
    }
    acc /= (trials * d) as f64;
    Ok((acc - DMatrix::<f64>::identity(n, n)).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_is_deterministic() {
        let a = Sketch::sample(3, 2, 1, 0).unwrap();
        let b = Sketch::sample(3, 2, 1, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.matrix.shape(), (3, 2));
    }

    #[test]
    fn iterations_give_different_matrices() {
        let a = Sketch::sample(3, 2, 1, 0).unwrap();
        let b = Sketch::sample(3, 2, 1, 1).unwrap();
        assert_ne!(a.matrix, b.matrix);
        let c = Sketch::sample(3, 2, 2, 0).unwrap();
        assert_ne!(a.matrix, c.matrix);
    }

    #[test]
    fn rejects_oversized_sketch() {
        assert!(matches!(Sketch::sample(3, 4, 0, 0), Err(Error::InvalidConfig(_))));
        assert!(matches!(Sketch::sample(3, 0, 0, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn entry_mean_within_clt_bound() {
        let (n, d) = (1000, 100);
        let q = Sketch::sample(n, d, 5, 0).unwrap();
        let mean = q.matrix.sum() / (n * d) as f64;
        // standard error of the mean is 1/sqrt(nd); allow four of them
        assert!(mean.abs() < 4.0 / ((n * d) as f64).sqrt(), "mean {mean}");
        let var = q.matrix.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n * d) as f64;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn uniform_stays_in_open_interval() {
        let mut s = GaussianStream::new(0, 0);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn concentration_preconditions() {
        assert!(concentration_stats(10, 2, 0, 0.5, 0).is_err());
        assert!(concentration_stats(10, 2, 5, 1.0, 0).is_err());
        assert!(concentration_stats(10, 2, 5, 0.0, 0).is_err());
        assert!(concentration_stats(10, 11, 5, 0.5, 0).is_err());
    }

    #[test]
    fn concentration_small_case_is_sane() {
        let r = concentration_stats(200, 50, 50, 0.5, 3).unwrap();
        assert!(r.frac_vector_norm_ok > 0.9);
        let edge = (1.0 + (50.0f64 / 200.0).sqrt()).powi(2);
        assert!(r.max_op_norm_ratio < edge * 1.3 && r.max_op_norm_ratio > 1.0);
    }

    #[test]
    fn isotropy_improves_with_trials() {
        let few = isotropy_deviation(20, 5, 50, 11).unwrap();
        let many = isotropy_deviation(20, 5, 800, 11).unwrap();
        // 1/sqrt(T) trend: 16x more trials, roughly 4x smaller deviation
        let ratio = few / many;
        assert!(ratio > 2.5 && ratio < 6.5, "ratio {ratio}");
    }
}
