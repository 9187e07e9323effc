//! Objective-function contract and sketched-gradient computation.
//!
//! A [`Problem`] wraps an [`Objective`] together with the metadata the
//! optimizers and acceptance checks rely on (gradient Lipschitz constant,
//! optimal value, starting point). An [`Oracle`] is the metered view of a
//! problem used inside one optimizer run: every objective evaluation goes
//! through it and is counted.
//!
//! Sketched gradients `Mᵀ∇f(x)` for a tall matrix `M` (a Gaussian sketch or
//! the subspace basis) are computed either exactly, from the analytic
//! gradient, or by central differences along the columns of `M`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A smooth objective `f: Rⁿ → R`.
///
/// Implementations must be pure: the same point always yields the same value,
/// and evaluation at distinct points may happen concurrently.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    /// Analytic gradient, if the objective provides one.
    fn gradient(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    /// Hessian-vector product `∇²f(x) v`, if available.
    fn hessian_vector_product(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn provides_gradient(&self) -> bool {
        false
    }

    fn provides_hvp(&self) -> bool {
        false
    }
}

/// Structural class of a problem, used to pick which rate model applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Convex,
    StronglyConvexPl,
    Nonconvex,
}

enum Optimum {
    Unknown,
    Known(f64),
    /// Computed on first request by a high-accuracy Newton solve, then cached.
    Solved(OnceLock<f64>),
}

/// An objective plus the metadata attached to it.
#[derive(Clone)]
pub struct Problem {
    name: String,
    objective: Arc<dyn Objective>,
    initial_point: DVector<f64>,
    lipschitz_grad: Option<f64>,
    pl_constant: Option<f64>,
    optimum: Arc<Optimum>,
    tags: Vec<ClassTag>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("lipschitz_grad", &self.lipschitz_grad)
            .field("tags", &self.tags)
            .finish()
    }
}

impl Problem {
    pub fn new(name: impl Into<String>, objective: Arc<dyn Objective>, initial_point: DVector<f64>) -> Self {
        Self {
            name: name.into(),
            objective,
            initial_point,
            lipschitz_grad: None,
            pl_constant: None,
            optimum: Arc::new(Optimum::Unknown),
            tags: Vec::new(),
        }
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz_grad = Some(l);
        self
    }

    pub fn with_pl_constant(mut self, sigma: f64) -> Self {
        self.pl_constant = Some(sigma);
        self
    }

    pub fn with_optimum(mut self, fstar: f64) -> Self {
        self.optimum = Arc::new(Optimum::Known(fstar));
        self
    }

    /// Marks the optimal value as computable by [`crate::baselines::solve_optimum`].
    pub fn with_solved_optimum(mut self) -> Self {
        self.optimum = Arc::new(Optimum::Solved(OnceLock::new()));
        self
    }

    pub fn with_tags(mut self, tags: &[ClassTag]) -> Self {
        self.tags = tags.to_vec();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub fn initial_point(&self) -> &DVector<f64> {
        &self.initial_point
    }

    pub fn lipschitz_grad(&self) -> Option<f64> {
        self.lipschitz_grad
    }

    pub fn pl_constant(&self) -> Option<f64> {
        self.pl_constant
    }

    pub fn tags(&self) -> &[ClassTag] {
        &self.tags
    }

    pub fn has_gradient(&self) -> bool {
        self.objective.provides_gradient()
    }

    pub fn has_hvp(&self) -> bool {
        self.objective.provides_hvp()
    }

    /// Optimal value `f*`, solving for it on first use when it has no closed form.
    ///
    /// Returns `None` when the value is unknown or the solve failed.
    pub fn optimum_value(&self) -> Option<f64> {
        match self.optimum.as_ref() {
            Optimum::Unknown => None,
            Optimum::Known(v) => Some(*v),
            Optimum::Solved(cell) => {
                let v = *cell.get_or_init(|| crate::baselines::solve_optimum(self).unwrap_or(f64::NAN));
                v.is_finite().then_some(v)
            }
        }
    }

    /// Plain (unmetered) gradient, failing when the problem has none.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.has_gradient() {
            return Err(Error::CapabilityMissing("an exact gradient"));
        }
        self.objective
            .gradient(x)
            .ok_or(Error::CapabilityMissing("an exact gradient"))
    }

    pub fn hvp(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.has_hvp() {
            return Err(Error::CapabilityMissing("Hessian-vector products"));
        }
        self.objective
            .hessian_vector_product(x, v)
            .ok_or(Error::CapabilityMissing("Hessian-vector products"))
    }

    /// Compares the analytic gradient with central differences along a few
    /// directions at each of the given points.
    ///
    /// Fails with [`Error::NumericalError`] when any directional derivative
    /// disagrees by more than `tol`.
    pub fn check_gradient(
        &self,
        points: &[DVector<f64>],
        directions: &[DVector<f64>],
        eps: f64,
        tol: f64,
    ) -> Result<()> {
        for x in points {
            let g = self.gradient(x)?;
            for v in directions {
                let fp = self.objective.value(&(x + v * eps));
                let fm = self.objective.value(&(x - v * eps));
                let fd = (fp - fm) / (2.0 * eps);
                let exact = g.dot(v);
                if !((fd - exact).abs() <= tol) {
                    return Err(Error::NumericalError(format!(
                        "{}: gradient check failed (fd {fd}, analytic {exact})",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How a sketched gradient was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    #[default]
    Exact,
    FiniteDifference,
}

impl fmt::Display for GradMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradMode::Exact => "exact",
            GradMode::FiniteDifference => "finite_difference",
        })
    }
}

/// `Mᵀ∇f(x)` for some tall matrix `M`, with the evaluation cost it incurred.
#[derive(Clone, Debug, PartialEq)]
pub struct SketchGradient {
    pub values: DVector<f64>,
    pub eval_count: u64,
    pub mode: GradMode,
}

/// Metered access to one problem.
#[derive(Debug)]
pub struct Oracle<'p> {
    problem: &'p Problem,
    evals: u64,
    parallel: bool,
}

impl<'p> Oracle<'p> {
    pub fn new(problem: &'p Problem) -> Self {
        Self {
            problem,
            evals: 0,
            parallel: false,
        }
    }

    /// Fan the finite-difference evaluations out over the rayon pool.
    pub fn with_parallel_fd(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    /// Number of objective evaluations performed so far.
    pub fn evals(&self) -> u64 {
        self.evals
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        let n = self.problem.dim();
        if x.len() != n {
            return Err(Error::InvalidConfig(format!(
                "point has length {}, problem dimension is {n}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::overflow(x));
        }
        Ok(())
    }

    fn check_matrix(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.nrows() != self.problem.dim() {
            return Err(Error::InvalidConfig(format!(
                "sketch matrix has {} rows, problem dimension is {}",
                m.nrows(),
                self.problem.dim()
            )));
        }
        Ok(())
    }

    /// `f(x)`, counted as one evaluation.
    pub fn eval(&mut self, x: &DVector<f64>) -> Result<f64> {
        self.check_point(x)?;
        self.evals += 1;
        let v = self.problem.objective().value(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::overflow(x))
        }
    }

    /// Full analytic gradient; costs no objective evaluations.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let g = self.problem.gradient(x)?;
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(Error::overflow(x))
        }
    }

    /// `Mᵀ∇f(x)` from the analytic gradient.
    pub fn sketch_grad_exact(&self, x: &DVector<f64>, m: &DMatrix<f64>) -> Result<SketchGradient> {
        self.check_matrix(m)?;
        let g = self.gradient(x)?;
        Ok(SketchGradient {
            values: m.tr_mul(&g),
            eval_count: 0,
            mode: GradMode::Exact,
        })
    }

    /// Central differences `(f(x+εMeᵢ) − f(x−εMeᵢ)) / 2ε` for every column of `M`.
    pub fn sketch_grad_fd(&mut self, x: &DVector<f64>, m: &DMatrix<f64>, eps: f64) -> Result<SketchGradient> {
        if !(eps > 0.0) {
            return Err(Error::InvalidConfig(format!("finite-difference step must be > 0, got {eps}")));
        }
        self.check_point(x)?;
        self.check_matrix(m)?;
        let objective = self.problem.objective();
        let component = |i: usize| -> Result<f64> {
            let col = m.column(i);
            let plus = x + col * eps;
            let fp = objective.value(&plus);
            if !fp.is_finite() {
                return Err(Error::overflow(&plus));
            }
            let minus = x - col * eps;
            let fm = objective.value(&minus);
            if !fm.is_finite() {
                return Err(Error::overflow(&minus));
            }
            Ok((fp - fm) / (2.0 * eps))
        };
        let cols = m.ncols();
        let values: Vec<f64> = if self.parallel {
            (0..cols).into_par_iter().map(component).collect::<Result<_>>()?
        } else {
            (0..cols).map(component).collect::<Result<_>>()?
        };
        let eval_count = 2 * cols as u64;
        self.evals += eval_count;
        Ok(SketchGradient {
            values: DVector::from_vec(values),
            eval_count,
            mode: GradMode::FiniteDifference,
        })
    }

    /// Dispatches to the exact or finite-difference route.
    pub fn sketch_grad(
        &mut self,
        mode: GradMode,
        x: &DVector<f64>,
        m: &DMatrix<f64>,
        eps: f64,
    ) -> Result<SketchGradient> {
        match mode {
            GradMode::Exact => self.sketch_grad_exact(x, m),
            GradMode::FiniteDifference => self.sketch_grad_fd(x, m, eps),
        }
    }
}
