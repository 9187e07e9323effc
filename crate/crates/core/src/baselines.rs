//! Reference optimizers sharing the Armijo search and the trace schema:
//! steepest descent, Nesterov acceleration with function-value restart,
//! random-subspace gradient descent and a subspace Newton method built from
//! Hessian-vector products.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{armijo, config_pairs, StepOutcome, StopReason, Trace, TraceRow};
use crate::oracle::{Oracle, Problem};
use crate::sketch::Sketch;
use crate::subspace::Basis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    #[default]
    Gd,
    Agd,
    Rsgd,
    Lmn,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Gd => "gd",
            BaselineMethod::Agd => "agd",
            BaselineMethod::Rsgd => "rsgd",
            BaselineMethod::Lmn => "lmn",
        }
    }

    /// Whether repeating a failed step could give a different result.
    fn is_randomized(self) -> bool {
        self == BaselineMethod::Rsgd
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub beta: f64,
    pub c: f64,
    /// Sketch size for rsgd.
    pub d: usize,
    /// Subspace size for lmn.
    pub m: usize,
    /// Eigenvalue floor of the lmn subspace Hessian.
    pub hessian_floor: f64,
    pub max_iters: u64,
    pub max_evals: Option<u64>,
    pub max_wall_s: Option<f64>,
    pub max_ls_iters: usize,
    pub seed: u64,
    /// Stop once `‖∇f(x_k)‖` drops below this.
    pub stop_tol: f64,
    pub record_wall_time: bool,
    /// rsgd only: replace `QQᵀ/d` by the identity. Test hook.
    #[serde(skip)]
    pub identity_sketch: bool,
    /// lmn only: pin `P_k` to this matrix. Test hook.
    #[serde(skip)]
    pub fixed_basis: Option<DMatrix<f64>>,
}

/// Momentum schedule and restart rule of agd, recorded in its trace header.
pub const AGD_SCHEDULE: &str = "nesterov(j-1)/(j+2)+function_restart";

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: BaselineMethod::Gd,
            beta: 0.8,
            c: 0.3,
            d: 20,
            m: 10,
            hessian_floor: 1e-8,
            max_iters: 500,
            max_evals: None,
            max_wall_s: None,
            max_ls_iters: 60,
            seed: 0,
            stop_tol: 0.0,
            record_wall_time: true,
            identity_sketch: false,
            fixed_basis: None,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let n = problem.dim();
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.beta > 0.0 && self.beta < 1.0 && self.c > 0.0 && self.c < 1.0) {
            return bad(format!("beta={} and c={} must lie in (0,1)", self.beta, self.c));
        }
        if self.max_ls_iters == 0 {
            return bad("max_ls_iters must be >= 1".into());
        }
        if !problem.has_gradient() {
            return Err(Error::CapabilityMissing("an exact gradient"));
        }
        match self.method {
            BaselineMethod::Rsgd if !self.identity_sketch && (self.d == 0 || self.d > n) => {
                bad(format!("rsgd needs 1 <= d <= n={n}, got {}", self.d))
            }
            BaselineMethod::Lmn => {
                if !problem.has_hvp() {
                    return Err(Error::CapabilityMissing("Hessian-vector products"));
                }
                if !(self.hessian_floor > 0.0) {
                    return bad(format!("hessian_floor must be > 0, got {}", self.hessian_floor));
                }
                match &self.fixed_basis {
                    Some(p) if p.nrows() != n || p.ncols() == 0 => bad(format!("fixed basis must have {n} rows")),
                    Some(_) => Ok(()),
                    None if self.m < 2 || !self.m.is_multiple_of(2) || self.m > n => {
                        bad(format!("lmn needs even m with 2 <= m <= n={n}, got {}", self.m))
                    }
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineState {
    pub x: DVector<f64>,
    pub f_x: f64,
    pub k: u64,
    /// Previous iterate (agd momentum).
    pub x_prev: DVector<f64>,
    /// Steps since the last agd restart, starting at 1.
    pub momentum_index: u64,
    pub restarts: u64,
    pub basis: Option<Basis>,
}

impl BaselineState {
    pub fn initial(oracle: &mut Oracle<'_>, config: &BaselineConfig) -> Result<Self> {
        let x = oracle.problem().initial_point().clone();
        let f_x = oracle.eval(&x)?;
        Ok(Self {
            x_prev: x.clone(),
            x,
            f_x,
            k: 0,
            momentum_index: 1,
            restarts: 0,
            basis: config.fixed_basis.clone().map(Basis::fixed),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineStep {
    pub outcome: StepOutcome,
    pub alpha: f64,
    pub ls_count: usize,
    /// Norm of the (possibly sketched or projected) gradient that set the direction.
    pub direction_grad_norm: f64,
    pub restarted: bool,
    /// Floored subspace Hessian used by lmn.
    pub subspace_hessian: Option<DMatrix<f64>>,
}

impl BaselineStep {
    fn skipped(outcome: StepOutcome, norm: f64) -> Self {
        Self {
            outcome,
            alpha: 0.0,
            ls_count: 0,
            direction_grad_norm: norm,
            restarted: false,
            subspace_hessian: None,
        }
    }
}

/// Armijo search from `(x, f0)` along `dir`, returning the new point on success.
fn search(
    oracle: &mut Oracle<'_>,
    x: &DVector<f64>,
    f0: f64,
    dir: &DVector<f64>,
    slope: f64,
    config: &BaselineConfig,
) -> Result<(DVector<f64>, f64, f64, usize)> {
    let ls = armijo(f0, slope, |a| oracle.eval(&(x + dir * a)), config.beta, config.c, config.max_ls_iters)?;
    Ok((x + dir * ls.alpha, ls.value, ls.alpha, ls.ls_count))
}

/// Applies an Armijo step along `dir` from the current iterate, mapping
/// recoverable failures to skipped outcomes.
fn descend(
    oracle: &mut Oracle<'_>,
    state: &mut BaselineState,
    dir: &DVector<f64>,
    slope: f64,
    norm: f64,
    config: &BaselineConfig,
) -> Result<BaselineStep> {
    match search(oracle, &state.x, state.f_x, dir, slope, config) {
        Ok((x_new, f_new, alpha, ls_count)) => {
            state.x_prev = std::mem::replace(&mut state.x, x_new);
            state.f_x = f_new;
            Ok(BaselineStep {
                outcome: StepOutcome::Accepted,
                alpha,
                ls_count,
                direction_grad_norm: norm,
                restarted: false,
                subspace_hessian: None,
            })
        }
        Err(Error::NonDescent { .. }) => Ok(BaselineStep::skipped(StepOutcome::NonDescent, norm)),
        Err(Error::LineSearchExhausted { ls_count }) => Ok(BaselineStep {
            ls_count,
            ..BaselineStep::skipped(StepOutcome::LineSearchExhausted, norm)
        }),
        Err(e) => Err(e),
    }
}

/// `x ← x − α∇f(x)`.
pub fn gd_step(oracle: &mut Oracle<'_>, state: &mut BaselineState, config: &BaselineConfig) -> Result<BaselineStep> {
    let g = oracle.gradient(&state.x)?;
    let dir = -&g;
    let slope = g.dot(&dir);
    descend(oracle, state, &dir, slope, dir.norm(), config)
}

/// Nesterov step from the extrapolated point `x_k + (j−1)/(j+2)·(x_k − x_{k−1})`.
///
/// When the candidate would increase `f`, the momentum is reset and a plain
/// gradient step is taken from `x_k` instead.
pub fn agd_step(oracle: &mut Oracle<'_>, state: &mut BaselineState, config: &BaselineConfig) -> Result<BaselineStep> {
    let j = state.momentum_index as f64;
    let weight = (j - 1.0) / (j + 2.0);
    if weight > 0.0 {
        let y = &state.x + (&state.x - &state.x_prev) * weight;
        let candidate = oracle.eval(&y).and_then(|f_y| {
            let g = oracle.gradient(&y)?;
            let dir = -&g;
            let slope = g.dot(&dir);
            search(oracle, &y, f_y, &dir, slope, config).map(|r| (r, g.norm()))
        });
        match candidate {
            Ok(((x_new, f_new, alpha, ls_count), norm)) if f_new <= state.f_x => {
                state.x_prev = std::mem::replace(&mut state.x, x_new);
                state.f_x = f_new;
                state.momentum_index += 1;
                return Ok(BaselineStep {
                    outcome: StepOutcome::Accepted,
                    alpha,
                    ls_count,
                    direction_grad_norm: norm,
                    restarted: false,
                    subspace_hessian: None,
                });
            }
            Ok(_) => {}
            Err(e) if e.is_recoverable() || matches!(e, Error::NumericalOverflow { .. }) => {}
            Err(e) => return Err(e),
        }
        state.restarts += 1;
        state.momentum_index = 1;
        let mut step = gd_step(oracle, state, config)?;
        step.restarted = true;
        if step.outcome == StepOutcome::Accepted {
            state.momentum_index = 2;
        }
        return Ok(step);
    }
    let step = gd_step(oracle, state, config)?;
    if step.outcome == StepOutcome::Accepted {
        state.momentum_index += 1;
    }
    Ok(step)
}

/// Step along `−Q_kQ_kᵀ∇f(x)/d` with a fresh Gaussian sketch.
pub fn rsgd_step(oracle: &mut Oracle<'_>, state: &mut BaselineState, config: &BaselineConfig) -> Result<BaselineStep> {
    let g = oracle.gradient(&state.x)?;
    let dir = if config.identity_sketch {
        -&g
    } else {
        let q = Sketch::sample(g.len(), config.d, config.seed, state.k)?;
        -q.lift(&q.project(&g)) / config.d as f64
    };
    let slope = g.dot(&dir);
    descend(oracle, state, &dir, slope, dir.norm(), config)
}

/// `P ᵀ∇²f(x) P` from one Hessian-vector product per column, symmetrized.
pub fn subspace_hessian(problem: &Problem, x: &DVector<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut hp = DMatrix::zeros(p.nrows(), p.ncols());
    for (j, col) in p.column_iter().enumerate() {
        hp.set_column(j, &problem.hvp(x, &col.into_owned())?);
    }
    let b = p.tr_mul(&hp);
    Ok((&b + b.transpose()) * 0.5)
}

/// Raises every eigenvalue below `floor` to `floor`.
pub fn floor_eigenvalues(b: &DMatrix<f64>, floor: f64) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalError("non-finite subspace Hessian".into()));
    }
    let mut eig = SymmetricEigen::try_new(b.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalError("subspace Hessian eigendecomposition failed".into()))?;
    eig.eigenvalues.apply(|l| *l = l.max(floor));
    Ok(eig)
}

/// `x ← x − α P B̃⁻¹ Pᵀ∇f(x)`, with `B̃ = PᵀHP` floored at `hessian_floor`.
pub fn lmn_step(oracle: &mut Oracle<'_>, state: &mut BaselineState, config: &BaselineConfig) -> Result<BaselineStep> {
    let g = oracle.gradient(&state.x)?;
    match state.basis.as_mut() {
        None => state.basis = Some(Basis::init(&state.x, &g, config.m)?),
        Some(b) => b.push_pair(&state.x, &g),
    }
    let p = state.basis.as_ref().expect("set above").matrix().clone();
    let gp = p.tr_mul(&g);
    let b = subspace_hessian(oracle.problem(), &state.x, &p)?;
    let eig = floor_eigenvalues(&b, config.hessian_floor)?;
    let v = &eig.eigenvectors;
    let coeffs = v.tr_mul(&gp).component_div(&eig.eigenvalues);
    let dir_sub = -(v * coeffs);
    let slope = gp.dot(&dir_sub);
    let dir = &p * dir_sub;
    let mut step = descend(oracle, state, &dir, slope, gp.norm(), config)?;
    step.subspace_hessian = Some(eig.recompose());
    Ok(step)
}

pub fn step(oracle: &mut Oracle<'_>, state: &mut BaselineState, config: &BaselineConfig) -> Result<BaselineStep> {
    match config.method {
        BaselineMethod::Gd => gd_step(oracle, state, config),
        BaselineMethod::Agd => agd_step(oracle, state, config),
        BaselineMethod::Rsgd => rsgd_step(oracle, state, config),
        BaselineMethod::Lmn => lmn_step(oracle, state, config),
    }
}

/// Runs a baseline under the same budgets and trace schema as the optimizer.
pub fn run(problem: &Problem, config: &BaselineConfig) -> Result<Trace> {
    config.validate(problem)?;
    let mut header = vec![("method".to_string(), config.method.name().to_string())];
    let mut pairs = config_pairs(config);
    pairs.retain(|(k, _)| k != "method");
    if config.method == BaselineMethod::Agd {
        pairs.insert(0, ("agd_schedule".to_string(), AGD_SCHEDULE.to_string()));
    }
    header.extend(pairs);
    let mut trace = Trace::new(header, config.seed);
    let start = Instant::now();
    let clock = || if config.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
    let grad_norm = |x: &DVector<f64>| problem.gradient(x).map(|g| g.norm()).unwrap_or(f64::NAN);

    let mut oracle = Oracle::new(problem);
    let mut state = match BaselineState::initial(&mut oracle, config) {
        Ok(s) => s,
        Err(e @ Error::NumericalOverflow { .. }) => {
            trace.stop = StopReason::NumericalAbort(e.to_string());
            return Ok(trace);
        }
        Err(e) => return Err(e),
    };
    let mut g_norm = grad_norm(&state.x);
    trace.rows.push(TraceRow {
        iter: 0,
        wall_time_s: clock(),
        f: state.f_x,
        sketch_grad_norm: f64::NAN,
        true_grad_norm: g_norm,
        alpha: f64::NAN,
        ls_count: 0,
        cum_evals: oracle.evals(),
        rank: f64::NAN,
    });
    loop {
        if config.max_evals.is_some_and(|cap| oracle.evals() >= cap) {
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
        if g_norm < config.stop_tol {
            trace.stop = StopReason::Converged;
            break;
        }
        let report = match step(&mut oracle, &mut state, config) {
            Ok(r) => r,
            Err(e @ (Error::InvalidConfig(_) | Error::CapabilityMissing(_))) => return Err(e),
            Err(e) => {
                trace.stop = StopReason::NumericalAbort(e.to_string());
                break;
            }
        };
        state.k += 1;
        if report.outcome != StepOutcome::Accepted && !config.method.is_randomized() {
            trace.stop = StopReason::Stalled;
            break;
        }
        g_norm = grad_norm(&state.x);
        trace.rows.push(TraceRow {
            iter: state.k,
            wall_time_s: clock(),
            f: state.f_x,
            sketch_grad_norm: report.direction_grad_norm,
            true_grad_norm: g_norm,
            alpha: report.alpha,
            ls_count: report.ls_count as u64,
            cum_evals: oracle.evals(),
            rank: state.basis.as_ref().map_or(f64::NAN, |b| b.rank() as f64),
        });
    }
    Ok(trace)
}

/// High-accuracy optimal value: full-space Newton (lmn with `P = I`) until
/// `‖∇f‖ ≤ 1e-12` or no further decrease is possible.
pub fn solve_optimum(problem: &Problem) -> Result<f64> {
    let n = problem.dim();
    if n > 4096 {
        return Err(Error::InvalidConfig(format!("optimum solve is limited to n <= 4096, got {n}")));
    }
    let config = BaselineConfig {
        method: BaselineMethod::Lmn,
        hessian_floor: 1e-10,
        max_iters: 200,
        max_ls_iters: 100,
        stop_tol: 1e-12,
        record_wall_time: false,
        fixed_basis: Some(DMatrix::identity(n, n)),
        ..BaselineConfig::default()
    };
    let trace = run(problem, &config)?;
    if let StopReason::NumericalAbort(msg) = &trace.stop {
        return Err(Error::NumericalError(msg.clone()));
    }
    trace
        .rows
        .iter()
        .map(|r| r.f)
        .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.min(f))))
        .ok_or_else(|| Error::NumericalError("empty optimum trace".into()))
}
