use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{construction_check, STREAM_DATA, STREAM_START};
use crate::error::{Error, Result};
use crate::oracle::{ClassTag, Objective, Problem};
use crate::sketch::GaussianStream;

/// `f(x) = log Σᵢ exp(aᵢᵀx + bᵢ)` with rows `aᵢ` of `A`.
#[derive(Clone, Debug)]
pub struct LogSumExp {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LogSumExp {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() || a.nrows() == 0 {
            return Err(Error::InvalidConfig("log-sum-exp needs matching, non-empty A and b".into()));
        }
        Ok(Self { a, b })
    }

    /// `max ‖aᵢ‖²`, which dominates the Hessian spectrum.
    pub fn lipschitz(&self) -> f64 {
        self.a.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max)
    }

    /// Softmax weights `pᵢ` and the log-partition value at `x`.
    fn softmax(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        let mut z = &self.a * x + &self.b;
        let top = z.max();
        z.apply(|v| *v = (*v - top).exp());
        let total = z.sum();
        (z / total, top + total.ln())
    }
}

impl Objective for LogSumExp {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.softmax(x).1
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let (p, _) = self.softmax(x);
        Some(self.a.tr_mul(&p))
    }

    /// `Aᵀ(diag(p) − ppᵀ)A v`.
    fn hessian_vector_product(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        let (p, _) = self.softmax(x);
        let av = &self.a * v;
        let mean = p.dot(&av);
        let w = p.zip_map(&av, |pi, ai| pi * (ai - mean));
        Some(self.a.tr_mul(&w))
    }

    fn provides_gradient(&self) -> bool {
        true
    }

    fn provides_hvp(&self) -> bool {
        true
    }
}

/// Convex but not strongly convex log-sum-exp in `n` dimensions.
///
/// The `2⌈n/2⌉` rows come in mirrored pairs `±aᵢ` with `aᵢ ~ N(0, I/n)`, which
/// keeps `f` bounded below; the rows span only about half of `Rⁿ`, so the
/// minimizer set is an affine subspace. `f*` is solved on first request.
pub fn make_logsumexp(n: usize, seed: u64) -> Result<Problem> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("log-sum-exp needs n >= 2, got {n}")));
    }
    let half = n.div_ceil(2);
    let mut rng = GaussianStream::new(seed, STREAM_DATA);
    let base = rng.normal_matrix(half, n) / (n as f64).sqrt();
    let mut a = DMatrix::zeros(2 * half, n);
    for i in 0..half {
        a.set_row(2 * i, &base.row(i));
        a.set_row(2 * i + 1, &(-base.row(i)));
    }
    let b = rng.normal_vector(2 * half);
    let objective = LogSumExp::new(a, b)?;
    let l = objective.lipschitz();
    let x0 = GaussianStream::new(seed, STREAM_START).normal_vector(n) * 3.0;
    let problem = Problem::new(format!("logsumexp(n={n})"), Arc::new(objective), x0)
        .with_lipschitz(l)
        .with_solved_optimum()
        .with_tags(&[ClassTag::Convex]);
    construction_check(&problem, 3.0, seed)?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{fd_gradient, hessian_from_hvp, max_lipschitz_ratio, random_point};

    #[test]
    fn zero_rows_give_constant() {
        let b = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let obj = LogSumExp::new(DMatrix::zeros(3, 4), b.clone()).unwrap();
        let want = b.iter().map(|v| v.exp()).sum::<f64>().ln();
        for s in 0..3 {
            let x = random_point(4, 2.0, s);
            assert!((obj.value(&x) - want).abs() < 1e-14);
            assert_eq!(obj.gradient(&x).unwrap(), DVector::zeros(4));
        }
    }

    #[test]
    fn gradient_is_convex_combination_of_rows() {
        let p = make_logsumexp(6, 2).unwrap();
        let obj = LogSumExp::new(
            GaussianStream::new(2, 0).normal_matrix(6, 6),
            DVector::zeros(6),
        )
        .unwrap();
        let x = random_point(6, 1.0, 1);
        let (w, _) = obj.softmax(&x);
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!((w.sum() - 1.0).abs() < 1e-14);
        assert!((obj.gradient(&x).unwrap() - obj.a.tr_mul(&w)).norm() < 1e-14);
        let g = p.gradient(&x).unwrap();
        assert!((&g - fd_gradient(&p, &x, 1e-5)).amax() < 1e-8);
    }

    #[test]
    fn hvp_matches_fd_of_gradient() {
        let p = make_logsumexp(8, 5).unwrap();
        let x = random_point(8, 1.0, 3);
        let h = hessian_from_hvp(&p, &x);
        let eps = 1e-6;
        for j in 0..8 {
            let mut e = DVector::zeros(8);
            e[j] = eps;
            let col = (p.gradient(&(&x + &e)).unwrap() - p.gradient(&(&x - &e)).unwrap()) / (2.0 * eps);
            assert!((h.column(j) - col).amax() < 1e-7);
        }
        assert!((&h - h.transpose()).amax() < 1e-14);
    }

    #[test]
    fn bounded_below_and_lipschitz() {
        let p = make_logsumexp(10, 1).unwrap();
        let l = p.lipschitz_grad().unwrap();
        assert!(max_lipschitz_ratio(&p, 100, 3.0, 4) <= l);
        let far = random_point(10, 1e3, 9);
        assert!(p.objective().value(&far).is_finite());
    }

    #[test]
    fn rejects_tiny_dimension() {
        assert!(make_logsumexp(1, 0).is_err());
    }
}
