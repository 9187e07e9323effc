use std::sync::Arc;

use nalgebra::DVector;

use super::{construction_check, STREAM_DATA, STREAM_START};
use crate::error::{Error, Result};
use crate::oracle::{ClassTag, Objective, Problem};
use crate::sketch::GaussianStream;

/// `f(x) = ½ xᵀ U Λ Uᵀ x` with `U` a product of Householder reflections.
///
/// Evaluation, gradient and Hessian-vector products all cost `O(n)`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    eigenvalues: DVector<f64>,
    reflectors: Vec<DVector<f64>>,
}

fn reflect(u: &DVector<f64>, x: &mut DVector<f64>) {
    let c = 2.0 * u.dot(x);
    x.axpy(-c, u, 1.0);
}

impl Quadratic {
    /// Axis-aligned quadratic with the given Hessian diagonal.
    pub fn diagonal(eigenvalues: Vec<f64>) -> Self {
        Self {
            eigenvalues: DVector::from_vec(eigenvalues),
            reflectors: Vec::new(),
        }
    }

    /// Quadratic with eigenvalues `eigenvalues` in the basis `H_1 ⋯ H_r`, where
    /// `H_i = I − 2uᵢuᵢᵀ`; the reflector vectors are normalized here.
    pub fn rotated(eigenvalues: Vec<f64>, reflectors: Vec<DVector<f64>>) -> Self {
        let reflectors = reflectors.into_iter().map(|u| u.normalize()).collect();
        Self {
            eigenvalues: DVector::from_vec(eigenvalues),
            reflectors,
        }
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `Uᵀ x`.
    fn to_eigenbasis(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut w = x.clone();
        for u in &self.reflectors {
            reflect(u, &mut w);
        }
        w
    }

    /// `U z`.
    fn to_standard_basis(&self, mut z: DVector<f64>) -> DVector<f64> {
        for u in self.reflectors.iter().rev() {
            reflect(u, &mut z);
        }
        z
    }

    fn apply_hessian(&self, v: &DVector<f64>) -> DVector<f64> {
        let w = self.to_eigenbasis(v).component_mul(&self.eigenvalues);
        self.to_standard_basis(w)
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let w = self.to_eigenbasis(x);
        0.5 * w
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(wi, li)| li * wi * wi)
            .sum::<f64>()
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.apply_hessian(x))
    }

    fn hessian_vector_product(&self, _x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.apply_hessian(v))
    }

    fn provides_gradient(&self) -> bool {
        true
    }

    fn provides_hvp(&self) -> bool {
        true
    }
}

/// Strongly convex quadratic with spectrum log-uniformly spaced over `[1, κ]`.
///
/// `L = κ`, `σ = 1`, `f* = 0`. For `κ = 1` the objective is exactly `½‖x‖²`.
pub fn make_quadratic(n: usize, kappa: f64, seed: u64) -> Result<Problem> {
    if n == 0 {
        return Err(Error::InvalidConfig("quadratic needs n >= 1".into()));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidConfig(format!("condition number must be >= 1, got {kappa}")));
    }
    if n == 1 && kappa > 1.0 {
        return Err(Error::InvalidConfig("a 1-D quadratic cannot have kappa > 1".into()));
    }
    let eigenvalues: Vec<f64> = (0..n)
        .map(|i| if n == 1 { 1.0 } else { kappa.powf(i as f64 / (n - 1) as f64) })
        .collect();
    let objective = if kappa == 1.0 {
        Quadratic::diagonal(eigenvalues)
    } else {
        let mut rng = GaussianStream::new(seed, STREAM_DATA);
        let reflectors = (0..2).map(|_| rng.unit_vector(n)).collect();
        Quadratic::rotated(eigenvalues, reflectors)
    };
    let x0 = GaussianStream::new(seed, STREAM_START).normal_vector(n);
    let problem = Problem::new(format!("quadratic(n={n},kappa={kappa})"), Arc::new(objective), x0)
        .with_lipschitz(kappa)
        .with_pl_constant(1.0)
        .with_optimum(0.0)
        .with_tags(&[ClassTag::Convex, ClassTag::StronglyConvexPl]);
    construction_check(&problem, 1.0 / (n as f64).sqrt(), seed)?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::testing::{fd_gradient, hessian_from_hvp, max_lipschitz_ratio, random_point};

    #[test]
    fn kappa_one_is_half_norm_squared() {
        let p = make_quadratic(3, 1.0, 0).unwrap();
        assert_eq!(p.lipschitz_grad(), Some(1.0));
        let x = DVector::from_vec(vec![1.0, -2.0, 2.0]);
        assert_eq!(p.objective().value(&x), 4.5);
        assert_eq!(p.gradient(&x).unwrap(), x);
    }

    #[test]
    fn gradient_is_a_x_and_matches_fd() {
        let p = make_quadratic(12, 50.0, 4).unwrap();
        let x = random_point(12, 1.0, 1);
        let g = p.gradient(&x).unwrap();
        let fd = fd_gradient(&p, &x, 1e-3);
        assert!((&g - fd).norm() < 1e-8 * (1.0 + g.norm()));
        let a = hessian_from_hvp(&p, &x);
        assert!((&a * &x - g).norm() < 1e-10);
    }

    #[test]
    fn hvp_independent_of_point() {
        let p = make_quadratic(8, 10.0, 2).unwrap();
        let v = random_point(8, 1.0, 3);
        let h1 = p.hvp(&random_point(8, 1.0, 4), &v).unwrap();
        let h2 = p.hvp(&random_point(8, 5.0, 5), &v).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn spectrum_and_constants() {
        let p = make_quadratic(20, 100.0, 9).unwrap();
        let h = hessian_from_hvp(&p, &DVector::zeros(20));
        let eig = nalgebra::SymmetricEigen::new((&h + h.transpose()) * 0.5).eigenvalues;
        assert!((eig.max() - 100.0).abs() < 1e-9);
        assert!((eig.min() - 1.0).abs() < 1e-9);
        assert_eq!(p.optimum_value(), Some(0.0));
        assert_eq!(p.pl_constant(), Some(1.0));
        assert!(max_lipschitz_ratio(&p, 100, 1.0, 0) <= 100.0 * (1.0 + 1e-12));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_quadratic(5, 0.5, 0).is_err());
        assert!(make_quadratic(0, 1.0, 0).is_err());
        assert!(make_quadratic(5, f64::NAN, 0).is_err());
    }
}
