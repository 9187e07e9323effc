use std::sync::Arc;

use nalgebra::DVector;

use super::construction_check;
use crate::error::{Error, Result};
use crate::oracle::{ClassTag, Objective, Problem};

/// Chained Rosenbrock `Σ b(x_{i+1} − x_i²)² + (a − x_i)²`.
#[derive(Clone, Debug)]
pub struct Rosenbrock {
    n: usize,
    a: f64,
    b: f64,
}

impl Rosenbrock {
    pub fn new(n: usize, a: f64, b: f64) -> Self {
        Self { n, a, b }
    }
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        (0..self.n - 1)
            .map(|i| {
                let r = x[i + 1] - x[i] * x[i];
                let s = self.a - x[i];
                self.b * r * r + s * s
            })
            .sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let mut g = DVector::zeros(self.n);
        for i in 0..self.n - 1 {
            let r = x[i + 1] - x[i] * x[i];
            g[i] += -4.0 * self.b * x[i] * r - 2.0 * (self.a - x[i]);
            g[i + 1] += 2.0 * self.b * r;
        }
        Some(g)
    }

    fn hessian_vector_product(&self, x: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        let mut hv = DVector::zeros(self.n);
        for i in 0..self.n - 1 {
            let hii = 2.0 - 4.0 * self.b * x[i + 1] + 12.0 * self.b * x[i] * x[i];
            let hij = -4.0 * self.b * x[i];
            let hjj = 2.0 * self.b;
            hv[i] += hii * v[i] + hij * v[i + 1];
            hv[i + 1] += hij * v[i] + hjj * v[i + 1];
        }
        Some(hv)
    }

    fn provides_gradient(&self) -> bool {
        true
    }

    fn provides_hvp(&self) -> bool {
        true
    }
}

/// Chained Rosenbrock with `a = 1`, `b = 100`, started from `(−1.2, 1, −1.2, 1, …)`.
pub fn make_rosenbrock(n: usize) -> Result<Problem> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("Rosenbrock needs n >= 2, got {n}")));
    }
    let x0 = DVector::from_fn(n, |i, _| if i % 2 == 0 { -1.2 } else { 1.0 });
    let problem = Problem::new(format!("rosenbrock(n={n})"), Arc::new(Rosenbrock::new(n, 1.0, 100.0)), x0)
        .with_optimum(0.0)
        .with_tags(&[ClassTag::Nonconvex]);
    construction_check(&problem, 0.5, n as u64)?;
    Ok(problem)
}
