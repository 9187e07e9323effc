//! Desk-scale test problems with analytic gradients and Hessian-vector products.

mod logistic;
mod logsumexp;
mod quadratic;
mod rosenbrock;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::oracle::Problem;
use crate::sketch::GaussianStream;

pub use logistic::{make_logistic_l2, LogisticL2};
pub use logsumexp::{make_logsumexp, LogSumExp};
pub use quadratic::{make_quadratic, Quadratic};
pub use rosenbrock::{make_rosenbrock, Rosenbrock};

// Stream ids reserved for problem data; sketches use small iteration indices.
pub(crate) const STREAM_DATA: u64 = u64::MAX - 1;
pub(crate) const STREAM_START: u64 = u64::MAX - 2;
pub(crate) const STREAM_CHECK: u64 = u64::MAX - 3;

/// Serializable description of a problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        n: usize,
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default)]
        seed: u64,
    },
    Rosenbrock {
        n: usize,
    },
    LogisticL2 {
        samples: usize,
        features: usize,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        seed: u64,
    },
    Logsumexp {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_kappa() -> f64 {
    100.0
}

fn default_lambda() -> f64 {
    1e-4
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Quadratic {
            n: 500,
            kappa: default_kappa(),
            seed: 0,
        }
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        match *self {
            ProblemSpec::Quadratic { n, kappa, seed } => make_quadratic(n, kappa, seed),
            ProblemSpec::Rosenbrock { n } => make_rosenbrock(n),
            ProblemSpec::LogisticL2 {
                samples,
                features,
                lambda,
                seed,
            } => make_logistic_l2(samples, features, lambda, seed),
            ProblemSpec::Logsumexp { n, seed } => make_logsumexp(n, seed),
        }
    }
}

/// Gradient check run by every constructor: three random points, three
/// random unit directions each, central differences with `ε = 1e-6`.
pub(crate) fn construction_check(problem: &Problem, scale: f64, seed: u64) -> Result<()> {
    let n = problem.dim();
    let mut rng = GaussianStream::new(seed, STREAM_CHECK);
    let points: Vec<DVector<f64>> = (0..3).map(|_| rng.normal_vector(n) * scale).collect();
    let dirs: Vec<DVector<f64>> = (0..3).map(|_| rng.unit_vector(n)).collect();
    problem.check_gradient(&points, &dirs, 1e-6, 1e-4)
}
