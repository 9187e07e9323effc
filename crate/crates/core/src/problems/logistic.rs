use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{construction_check, STREAM_DATA};
use crate::error::{Error, Result};
use crate::oracle::{ClassTag, Objective, Problem};
use crate::sketch::GaussianStream;

/// `f(w) = (1/N) Σ log(1 + exp(−yᵢ xᵢᵀw)) + λ‖w‖²` with labels `yᵢ ∈ {−1, 1}`.
#[derive(Clone, Debug)]
pub struct LogisticL2 {
    design: DMatrix<f64>,
    labels: DVector<f64>,
    lambda: f64,
}

/// `log(1 + eᵗ)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticL2 {
    pub fn new(design: DMatrix<f64>, labels: DVector<f64>, lambda: f64) -> Result<Self> {
        if design.nrows() != labels.len() || design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::InvalidConfig("design and labels must be non-empty and agree in length".into()));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { design, labels, lambda })
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    fn samples(&self) -> f64 {
        self.design.nrows() as f64
    }

    /// `‖X‖²_op/(4N) + 2λ`, an upper bound on the Hessian spectrum.
    pub fn lipschitz(&self) -> f64 {
        let x = &self.design;
        let gram = if x.nrows() >= x.ncols() {
            x.tr_mul(x)
        } else {
            x * x.transpose()
        };
        let op_sq = SymmetricEigen::new(gram).eigenvalues.max().max(0.0);
        // a hair of slack on top of the eigensolver's rounding
        op_sq * (1.0 + 1e-12) / (4.0 * self.samples()) + 2.0 * self.lambda
    }
}

impl Objective for LogisticL2 {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let z = &self.design * w;
        let loss: f64 = z
            .iter()
            .zip(self.labels.iter())
            .map(|(zi, yi)| softplus(-yi * zi))
            .sum();
        loss / self.samples() + self.lambda * w.norm_squared()
    }

    fn gradient(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        let z = &self.design * w;
        let r = DVector::from_fn(z.len(), |i, _| {
            let yi = self.labels[i];
            -yi * sigmoid(-yi * z[i]) / self.samples()
        });
        let mut g = self.design.tr_mul(&r);
        g.axpy(2.0 * self.lambda, w, 1.0);
        Some(g)
    }

    fn hessian_vector_product(&self, w: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        let z = &self.design * w;
        let xv = &self.design * v;
        let r = DVector::from_fn(z.len(), |i, _| {
            let s = sigmoid(z[i]);
            s * (1.0 - s) * xv[i] / self.samples()
        });
        let mut hv = self.design.tr_mul(&r);
        hv.axpy(2.0 * self.lambda, v, 1.0);
        Some(hv)
    }

    fn provides_gradient(&self) -> bool {
        true
    }

    fn provides_hvp(&self) -> bool {
        true
    }
}

/// Synthetic logistic regression: Gaussian design, labels from a planted
/// linear model with unit label noise, started at `w = 0`.
///
/// `f*` has no closed form and is solved on first request.
pub fn make_logistic_l2(samples: usize, features: usize, lambda: f64, seed: u64) -> Result<Problem> {
    if samples == 0 || features == 0 {
        return Err(Error::InvalidConfig("logistic regression needs samples >= 1 and features >= 1".into()));
    }
    let mut rng = GaussianStream::new(seed, STREAM_DATA);
    let design = rng.normal_matrix(samples, features);
    let planted = rng.normal_vector(features) / (features as f64).sqrt();
    let scores = &design * &planted;
    let labels = DVector::from_fn(samples, |i, _| if scores[i] + rng.normal() >= 0.0 { 1.0 } else { -1.0 });
    let objective = LogisticL2::new(design, labels, lambda)?;
    let l = objective.lipschitz();
    let mut tags = vec![ClassTag::Convex];
    if lambda > 0.0 {
        tags.push(ClassTag::StronglyConvexPl);
    }
    let mut problem = Problem::new(
        format!("logistic_l2(samples={samples},features={features},lambda={lambda})"),
        Arc::new(objective),
        DVector::zeros(features),
    )
    .with_lipschitz(l)
    .with_solved_optimum()
    .with_tags(&tags);
    if lambda > 0.0 {
        problem = problem.with_pl_constant(2.0 * lambda);
    }
    construction_check(&problem, 1.0 / (features as f64).sqrt(), seed)?;
    Ok(problem)
}
