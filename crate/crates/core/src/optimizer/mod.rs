//! Subspace quasi-Newton iterations with sketched gradients.
//!
//! Each iteration samples a Gaussian sketch `Q_k`, folds the lifted sketched
//! gradient `Q_kQ_kᵀ∇f(x_k)` into the history basis `P_k`, takes a quasi-Newton
//! step inside the span of `P_k` with an Armijo backtracking search, and
//! updates the `m×m` inverse-Hessian approximation from the subspace
//! curvature pair. Gradients are either exact or central differences.

mod armijo;
mod trace;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use armijo::{armijo, step_size_floor, LineSearchResult};
pub use trace::{config_pairs, StopReason, Trace, TraceRow, COLUMNS};

use crate::error::{Error, Result};
use crate::hessian::{CurvatureDecision, CurvaturePair, InverseHessian};
use crate::oracle::{GradMode, Oracle, Problem};
use crate::sketch::Sketch;
use crate::subspace::Basis;

/// Finite-difference step as a function of the iteration index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsSchedule {
    #[default]
    Constant,
    /// `ε_k = ε/(k+1)`.
    InvK,
    /// `ε_k = ε/(k+1)²`.
    InvK2,
}

impl EpsSchedule {
    pub fn at(self, eps: f64, k: u64) -> f64 {
        let k1 = (k + 1) as f64;
        match self {
            EpsSchedule::Constant => eps,
            EpsSchedule::InvK => eps / k1,
            EpsSchedule::InvK2 => eps / (k1 * k1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Subspace size (even).
    pub m: usize,
    /// Sketch size.
    pub d: usize,
    pub m1: f64,
    pub m2: f64,
    pub beta: f64,
    pub c: f64,
    pub eps_fd: f64,
    pub eps_schedule: EpsSchedule,
    pub eps_curv: f64,
    pub max_iters: u64,
    pub max_evals: Option<u64>,
    pub max_wall_s: Option<f64>,
    pub max_ls_iters: usize,
    pub grad_mode: GradMode,
    pub seed: u64,
    /// Stop once the subspace gradient norm drops below this.
    pub stop_tol: f64,
    pub parallel_fd: bool,
    /// Skip the eigenvalue clamp after BFGS updates.
    pub relaxed_clamp: bool,
    /// Log `‖∇f(x_k)‖` when an analytic gradient exists.
    pub record_true_grad: bool,
    pub record_wall_time: bool,
    /// Pins `P_k` to this matrix for every iteration. Test hook.
    #[serde(skip)]
    pub fixed_basis: Option<DMatrix<f64>>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            m: 10,
            d: 20,
            m1: 0.01,
            m2: 1000.0,
            beta: 0.8,
            c: 0.3,
            eps_fd: 1e-4,
            eps_schedule: EpsSchedule::Constant,
            eps_curv: 1e-12,
            max_iters: 500,
            max_evals: None,
            max_wall_s: None,
            max_ls_iters: 60,
            grad_mode: GradMode::Exact,
            seed: 0,
            stop_tol: 0.0,
            parallel_fd: false,
            relaxed_clamp: false,
            record_true_grad: true,
            record_wall_time: true,
            fixed_basis: None,
        }
    }
}

impl Config {
    pub fn method_name(&self) -> &'static str {
        match self.grad_mode {
            GradMode::Exact => "sqn-exact",
            GradMode::FiniteDifference => "sqn-fd",
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m < 2 || !self.m.is_multiple_of(2) || self.m > n {
            return bad(format!("m={} must be even with 2 <= m <= n={n}", self.m));
        }
        if self.d == 0 || self.d > n {
            return bad(format!("d={} must satisfy 1 <= d <= n={n}", self.d));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta={} must lie in (0,1)", self.beta));
        }
        let c_max = match self.grad_mode {
            GradMode::Exact => 1.0,
            GradMode::FiniteDifference => 0.5,
        };
        if !(self.c > 0.0 && self.c < c_max) {
            return bad(format!("c={} must lie in (0,{c_max}) in {} mode", self.c, self.grad_mode));
        }
        if !(self.m1 > 0.0 && self.m2 >= self.m1 && self.m2.is_finite()) {
            return bad(format!("need 0 < m1 <= m2, got m1={}, m2={}", self.m1, self.m2));
        }
        if self.grad_mode == GradMode::FiniteDifference && !(self.eps_fd > 0.0) {
            return bad(format!("eps_fd={} must be > 0", self.eps_fd));
        }
        if self.max_ls_iters == 0 {
            return bad("max_ls_iters must be >= 1".into());
        }
        if let Some(p) = &self.fixed_basis {
            if p.shape() != (n, self.m) {
                return bad(format!("fixed basis must be {n}x{}, got {:?}", self.m, p.shape()));
            }
        }
        Ok(())
    }
}

/// Mutable state of one run.
#[derive(Clone, Debug)]
pub struct IterateState {
    pub x: DVector<f64>,
    pub f_x: f64,
    /// `None` until the first iteration builds `P_0`.
    pub basis: Option<Basis>,
    pub h: InverseHessian,
    pub k: u64,
    pub cumulative_evals: u64,
    pub seed: u64,
    grad: Option<DVector<f64>>,
}

impl IterateState {
    pub fn initial(oracle: &mut Oracle<'_>, config: &Config) -> Result<Self> {
        let problem = oracle.problem();
        config.validate(problem.dim())?;
        let x = problem.initial_point().clone();
        let f_x = oracle.eval(&x)?;
        Ok(Self {
            x,
            f_x,
            basis: config.fixed_basis.clone().map(Basis::fixed),
            h: InverseHessian::new(config.m, config.m1, config.m2)?,
            k: 0,
            cumulative_evals: oracle.evals(),
            seed: config.seed,
            grad: None,
        })
    }

    /// Analytic `∇f(x_k)`, cached until `x` moves.
    fn exact_gradient(&mut self, oracle: &Oracle<'_>) -> Result<&DVector<f64>> {
        if self.grad.is_none() {
            self.grad = Some(oracle.gradient(&self.x)?);
        }
        Ok(self.grad.as_ref().expect("filled above"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    /// No Armijo step found; `x` and `H` unchanged.
    LineSearchExhausted,
    /// The subspace slope was not negative; `x` and `H` unchanged.
    NonDescent,
    /// The subspace gradient fell below `stop_tol`; nothing else was done.
    Converged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub k: u64,
    pub outcome: StepOutcome,
    /// Accepted step, or 0 when the iteration was skipped.
    pub alpha: f64,
    pub ls_count: usize,
    /// `‖P_kᵀ∇f(x_k)‖` (or its finite-difference estimate).
    pub sketch_grad_norm: f64,
    /// Objective evaluations spent in this iteration.
    pub evals: u64,
    pub curvature: Option<CurvatureDecision>,
}

/// One iteration with exact sketched gradients.
pub fn step_exact(oracle: &mut Oracle<'_>, state: &mut IterateState, config: &Config) -> Result<StepReport> {
    step(oracle, state, config, GradMode::Exact)
}

/// One iteration with central-difference sketched gradients.
pub fn step_fd(oracle: &mut Oracle<'_>, state: &mut IterateState, config: &Config) -> Result<StepReport> {
    step(oracle, state, config, GradMode::FiniteDifference)
}

fn step(oracle: &mut Oracle<'_>, state: &mut IterateState, config: &Config, mode: GradMode) -> Result<StepReport> {
    let n = state.x.len();
    let k = state.k;
    let evals_before = oracle.evals();
    let eps = config.eps_schedule.at(config.eps_fd, k);

    if mode == GradMode::Exact {
        state.exact_gradient(oracle)?;
    }
    let q = Sketch::sample(n, config.d, config.seed, k)?;
    let gq = match mode {
        GradMode::Exact => q.project(state.grad.as_ref().expect("cached above")),
        GradMode::FiniteDifference => oracle.sketch_grad_fd(&state.x, &q.matrix, eps)?.values,
    };
    let lifted = q.lift(&gq);
    drop(q);
    match state.basis.as_mut() {
        None => state.basis = Some(Basis::init(&state.x, &lifted, config.m)?),
        Some(b) => b.push_pair(&state.x, &lifted),
    }
    let basis = state.basis.as_ref().expect("set above");

    let gp = match mode {
        GradMode::Exact => basis.apply_transpose(state.grad.as_ref().expect("cached above"))?,
        GradMode::FiniteDifference => oracle.sketch_grad_fd(&state.x, basis.matrix(), eps)?.values,
    };
    let gp_norm = gp.norm();
    let mut report = StepReport {
        k,
        outcome: StepOutcome::Converged,
        alpha: 0.0,
        ls_count: 0,
        sketch_grad_norm: gp_norm,
        evals: 0,
        curvature: None,
    };
    let finish = |mut report: StepReport, state: &mut IterateState, oracle: &Oracle<'_>| {
        report.evals = oracle.evals() - evals_before;
        state.cumulative_evals = oracle.evals();
        report
    };
    if gp_norm < config.stop_tol {
        return Ok(finish(report, state, oracle));
    }
    state.k += 1;

    let dir = -state.h.apply(&gp);
    let slope = gp.dot(&dir);
    let pdir = basis.apply(&dir)?;
    let x = &state.x;
    let search = armijo(
        state.f_x,
        slope,
        |alpha| oracle.eval(&(x + &pdir * alpha)),
        config.beta,
        config.c,
        config.max_ls_iters,
    );
    let ls = match search {
        Ok(ls) => ls,
        Err(Error::NonDescent { .. }) => {
            report.outcome = StepOutcome::NonDescent;
            return Ok(finish(report, state, oracle));
        }
        Err(Error::LineSearchExhausted { ls_count }) => {
            report.outcome = StepOutcome::LineSearchExhausted;
            report.ls_count = ls_count;
            return Ok(finish(report, state, oracle));
        }
        Err(e) => return Err(e),
    };

    let x_new = &state.x + &pdir * ls.alpha;
    let gp_new = match mode {
        GradMode::Exact => {
            let g = oracle.gradient(&x_new)?;
            let v = basis.apply_transpose(&g)?;
            state.grad = Some(g);
            v
        }
        GradMode::FiniteDifference => oracle.sketch_grad_fd(&x_new, basis.matrix(), eps)?.values,
    };
    let pair = CurvaturePair {
        s: dir * ls.alpha,
        y: gp_new - &gp,
    };
    report.curvature = Some(state.h.update(&pair, config.eps_curv, config.relaxed_clamp)?);
    state.x = x_new;
    state.f_x = ls.value;
    report.outcome = StepOutcome::Accepted;
    report.alpha = ls.alpha;
    report.ls_count = ls.ls_count;
    Ok(finish(report, state, oracle))
}

/// What an observer sees after every iteration.
pub struct IterationEvent<'a> {
    pub report: &'a StepReport,
    pub state: &'a IterateState,
}

pub fn run(problem: &Problem, config: &Config) -> Result<Trace> {
    run_with_observer(problem, config, &mut |_| {})
}

/// Runs until a budget or the stopping tolerance fires.
///
/// Invalid configurations are returned as errors. Numerical failures during
/// the run end it early: the partial trace comes back with
/// [`StopReason::NumericalAbort`].
pub fn run_with_observer(
    problem: &Problem,
    config: &Config,
    observer: &mut dyn FnMut(&IterationEvent<'_>),
) -> Result<Trace> {
    config.validate(problem.dim())?;
    if config.grad_mode == GradMode::Exact && !problem.has_gradient() {
        return Err(Error::CapabilityMissing("an exact gradient"));
    }
    let mut header = vec![("method".to_string(), config.method_name().to_string())];
    header.extend(config_pairs(config));
    let mut trace = Trace::new(header, config.seed);
    let start = Instant::now();
    let clock = || if config.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };

    let mut oracle = Oracle::new(problem).with_parallel_fd(config.parallel_fd);
    let mut state = match IterateState::initial(&mut oracle, config) {
        Ok(s) => s,
        Err(e @ Error::NumericalOverflow { .. }) => {
            trace.stop = StopReason::NumericalAbort(e.to_string());
            return Ok(trace);
        }
        Err(e) => return Err(e),
    };
    let true_grad = |state: &mut IterateState, oracle: &Oracle<'_>| -> f64 {
        if !config.record_true_grad || !problem.has_gradient() {
            return f64::NAN;
        }
        match config.grad_mode {
            GradMode::Exact => state.exact_gradient(oracle).map(|g| g.norm()).unwrap_or(f64::NAN),
            GradMode::FiniteDifference => problem.gradient(&state.x).map(|g| g.norm()).unwrap_or(f64::NAN),
        }
    };
    let g0 = true_grad(&mut state, &oracle);
    trace.rows.push(TraceRow {
        iter: 0,
        wall_time_s: clock(),
        f: state.f_x,
        sketch_grad_norm: f64::NAN,
        true_grad_norm: g0,
        alpha: f64::NAN,
        ls_count: 0,
        cum_evals: state.cumulative_evals,
        rank: f64::NAN,
    });

    loop {
        if config.max_evals.is_some_and(|cap| state.cumulative_evals >= cap) {
            trace.stop = StopReason::MaxEvals;
            break;
        }
        if state.k >= config.max_iters {
            trace.stop = StopReason::MaxIters;
            break;
        }
        if config.max_wall_s.is_some_and(|cap| start.elapsed().as_secs_f64() >= cap) {
            trace.stop = StopReason::MaxWallTime;
            break;
        }
        let report = match step(&mut oracle, &mut state, config, config.grad_mode) {
            Ok(r) => r,
            Err(e) if matches!(e, Error::InvalidConfig(_) | Error::CapabilityMissing(_)) => return Err(e),
            Err(e) => {
                trace.stop = StopReason::NumericalAbort(e.to_string());
                break;
            }
        };
        observer(&IterationEvent {
            report: &report,
            state: &state,
        });
        if report.outcome == StepOutcome::Converged {
            trace.stop = StopReason::Converged;
            break;
        }
        let g = true_grad(&mut state, &oracle);
        trace.rows.push(TraceRow {
            iter: state.k,
            wall_time_s: clock(),
            f: state.f_x,
            sketch_grad_norm: report.sketch_grad_norm,
            true_grad_norm: g,
            alpha: report.alpha,
            ls_count: report.ls_count as u64,
            cum_evals: state.cumulative_evals,
            rank: state.basis.as_ref().map_or(f64::NAN, |b| b.rank() as f64),
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic, make_rosenbrock, Quadratic};
    use std::sync::Arc;

    fn half_norm_sq(x0: Vec<f64>) -> Problem {
        let n = x0.len();
        Problem::new("half", Arc::new(Quadratic::diagonal(vec![1.0; n])), DVector::from_vec(x0))
            .with_lipschitz(1.0)
            .with_optimum(0.0)
    }

    #[test]
    fn identity_basis_solves_identity_quadratic_in_one_step() {
        let p = half_norm_sq(vec![3.0, -4.0]);
        let config = Config {
            m: 2,
            d: 2,
            fixed_basis: Some(DMatrix::identity(2, 2)),
            ..Config::default()
        };
        let mut oracle = Oracle::new(&p);
        let mut state = IterateState::initial(&mut oracle, &config).unwrap();
        let r = step_exact(&mut oracle, &mut state, &config).unwrap();
        assert_eq!(r.outcome, StepOutcome::Accepted);
        assert_eq!(r.alpha, 1.0);
        assert_eq!(state.x, DVector::zeros(2));
        assert_eq!(state.f_x, 0.0);
    }

    #[test]
    fn max_iters_zero_gives_initial_row() {
        let p = make_quadratic(20, 10.0, 1).unwrap();
        let t = run(&p, &Config { max_iters: 0, m: 4, d: 4, ..Config::default() }).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.stop, StopReason::MaxIters);
        assert_eq!(t.rows[0].cum_evals, 1);
    }

    #[test]
    fn stop_tol_terminates_on_toy() {
        let p = half_norm_sq((0..12).map(|i| i as f64 - 5.5).collect());
        let config = Config { m: 4, d: 4, stop_tol: 1e-8, max_iters: 5000, ..Config::default() };
        let t = run(&p, &config).unwrap();
        assert_eq!(t.stop, StopReason::Converged);
        assert!(t.last().unwrap().f < 1e-12);
    }

    #[test]
    fn recoverable_outcomes_advance_k_only() {
        // a quadratic cannot fail with exact gradients, so force exhaustion
        let p = make_quadratic(10, 10.0, 2).unwrap();
        let config = Config { m: 4, d: 3, max_ls_iters: 1, m1: 900.0, m2: 1000.0, ..Config::default() };
        let mut oracle = Oracle::new(&p);
        let mut state = IterateState::initial(&mut oracle, &config).unwrap();
        let (x0, h0) = (state.x.clone(), state.h.clone());
        let r = step_exact(&mut oracle, &mut state, &config).unwrap();
        assert_eq!(r.outcome, StepOutcome::LineSearchExhausted);
        assert_eq!((state.k, &state.x, &state.h), (1, &x0, &h0));
        assert!(state.basis.is_some());
    }

    #[test]
    fn fd_mode_rejects_large_c() {
        let p = make_rosenbrock(4).unwrap();
        let config = Config { m: 2, d: 2, c: 0.6, grad_mode: GradMode::FiniteDifference, ..Config::default() };
        assert!(matches!(run(&p, &config), Err(Error::InvalidConfig(_))));
        assert!(run(&p, &Config { grad_mode: GradMode::Exact, ..config }).is_ok());
    }

    #[test]
    fn eps_schedules() {
        assert_eq!(EpsSchedule::Constant.at(0.1, 9), 0.1);
        assert_eq!(EpsSchedule::InvK.at(1.0, 3), 0.25);
        assert_eq!(EpsSchedule::InvK2.at(1.0, 3), 0.0625);
    }

    #[test]
    fn config_header_starts_with_method() {
        let p = make_quadratic(10, 1.0, 0).unwrap();
        let t = run(&p, &Config { m: 2, d: 2, max_iters: 1, ..Config::default() }).unwrap();
        assert_eq!(t.config[0], ("method".to_string(), "sqn-exact".to_string()));
        assert!(t.config.iter().any(|(k, v)| k == "grad_mode" && v == "exact"));
        assert!(t.config.iter().any(|(k, v)| k == "beta" && v == "0.8"));
    }
}
