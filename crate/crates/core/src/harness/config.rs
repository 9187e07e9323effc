use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineMethod};
use crate::error::{Error, Result};
use crate::optimizer::{Config, EpsSchedule};
use crate::oracle::GradMode;
use crate::problems::ProblemSpec;

/// Every method the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "sqn-exact")]
    SqnExact,
    #[serde(rename = "sqn-fd")]
    SqnFd,
    #[serde(rename = "gd")]
    Gd,
    #[serde(rename = "agd")]
    Agd,
    #[serde(rename = "rsgd")]
    Rsgd,
    #[serde(rename = "lmn")]
    Lmn,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SqnExact,
        Method::SqnFd,
        Method::Gd,
        Method::Agd,
        Method::Rsgd,
        Method::Lmn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SqnExact => "sqn-exact",
            Method::SqnFd => "sqn-fd",
            Method::Gd => "gd",
            Method::Agd => "agd",
            Method::Rsgd => "rsgd",
            Method::Lmn => "lmn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    fn baseline(self) -> Option<BaselineMethod> {
        match self {
            Method::Gd => Some(BaselineMethod::Gd),
            Method::Agd => Some(BaselineMethod::Agd),
            Method::Rsgd => Some(BaselineMethod::Rsgd),
            Method::Lmn => Some(BaselineMethod::Lmn),
            Method::SqnExact | Method::SqnFd => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Concurrent runs; 0 uses every available core.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            methods: vec![Method::SqnExact],
            seeds: (0..10).collect(),
            workers: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub max_iters: Option<u64>,
    pub max_evals: Option<u64>,
    pub max_wall_s: Option<f64>,
}

/// Optimizer parameters shared by `sqn-exact` and `sqn-fd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqnSection {
    pub m: usize,
    pub d: usize,
    pub m1: f64,
    pub m2: f64,
    pub beta: f64,
    pub c: f64,
    pub eps_fd: f64,
    pub eps_schedule: EpsSchedule,
    pub eps_curv: f64,
    pub max_ls_iters: usize,
    pub stop_tol: f64,
    pub parallel_fd: bool,
    pub relaxed_clamp: bool,
    pub record_true_grad: bool,
}

impl Default for SqnSection {
    fn default() -> Self {
        let c = Config::default();
        Self {
            m: c.m,
            d: c.d,
            m1: c.m1,
            m2: c.m2,
            beta: c.beta,
            c: c.c,
            eps_fd: c.eps_fd,
            eps_schedule: c.eps_schedule,
            eps_curv: c.eps_curv,
            max_ls_iters: c.max_ls_iters,
            stop_tol: c.stop_tol,
            parallel_fd: c.parallel_fd,
            relaxed_clamp: c.relaxed_clamp,
            record_true_grad: c.record_true_grad,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub beta: f64,
    pub c: f64,
    pub d: usize,
    pub m: usize,
    pub hessian_floor: f64,
    pub max_ls_iters: usize,
    pub stop_tol: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let b = BaselineConfig::default();
        Self {
            beta: b.beta,
            c: b.c,
            d: b.d,
            m: b.m,
            hessian_floor: b.hessian_floor,
            max_ls_iters: b.max_ls_iters,
            stop_tol: b.stop_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub plot: bool,
    /// Record wall-clock time in traces; turn off for byte-identical reruns.
    pub wall_time: bool,
    /// Number of fixed-width bins in the time-aligned summary.
    pub time_bins: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("subqn-out"),
            plot: true,
            wall_time: true,
            time_bins: 50,
        }
    }
}

/// A whole experiment: one problem, several methods, several seeds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub run: RunSection,
    pub budget: BudgetSection,
    pub sqn: SqnSection,
    pub baseline: BaselineSection,
    pub output: OutputSection,
}

/// The per-run configuration of one method.
#[derive(Clone, Debug, PartialEq)]
pub enum MethodConfig {
    Sqn(Config),
    Baseline(BaselineConfig),
}

/// Evaluation budget applied when the config sets no budget at all.
pub const DEFAULT_MAX_EVALS: u64 = 20_000;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.methods.is_empty() {
            return Err(Error::InvalidConfig("run.methods must name at least one method".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::InvalidConfig("run.seeds must list at least one seed".into()));
        }
        Ok(())
    }

    fn max_evals(&self) -> Option<u64> {
        match (self.budget.max_iters, self.budget.max_evals, self.budget.max_wall_s) {
            (None, None, None) => Some(DEFAULT_MAX_EVALS),
            (_, evals, _) => evals,
        }
    }

    // Every accepted step costs at least one evaluation, so an eval budget
    // doubles as an iteration cap that only degenerate zero-cost loops reach.
    fn max_iters(&self) -> u64 {
        match (self.budget.max_iters, self.max_evals()) {
            (Some(k), _) => k,
            (None, Some(evals)) => evals,
            (None, None) => u64::MAX,
        }
    }

    pub fn method_config(&self, method: Method, seed: u64) -> MethodConfig {
        let max_iters = self.max_iters();
        let max_evals = self.max_evals();
        match method.baseline() {
            None => {
                let s = &self.sqn;
                MethodConfig::Sqn(Config {
                    m: s.m,
                    d: s.d,
                    m1: s.m1,
                    m2: s.m2,
                    beta: s.beta,
                    c: s.c,
                    eps_fd: s.eps_fd,
                    eps_schedule: s.eps_schedule,
                    eps_curv: s.eps_curv,
                    max_iters,
                    max_evals,
                    max_wall_s: self.budget.max_wall_s,
                    max_ls_iters: s.max_ls_iters,
                    grad_mode: if method == Method::SqnFd { GradMode::FiniteDifference } else { GradMode::Exact },
                    seed,
                    stop_tol: s.stop_tol,
                    parallel_fd: s.parallel_fd,
                    relaxed_clamp: s.relaxed_clamp,
                    record_true_grad: s.record_true_grad,
                    record_wall_time: self.output.wall_time,
                    fixed_basis: None,
                })
            }
            Some(b) => {
                let s = &self.baseline;
                MethodConfig::Baseline(BaselineConfig {
                    method: b,
                    beta: s.beta,
                    c: s.c,
                    d: s.d,
                    m: s.m,
                    hessian_floor: s.hessian_floor,
                    max_iters,
                    max_evals,
                    max_wall_s: self.budget.max_wall_s,
                    max_ls_iters: s.max_ls_iters,
                    seed,
                    stop_tol: s.stop_tol,
                    record_wall_time: self.output.wall_time,
                    identity_sketch: false,
                    fixed_basis: None,
                })
            }
        }
    }

    /// Every key with its default, one `dotted.key = value` line each.
    pub fn defaults_text() -> String {
        let value = toml::Value::try_from(Self::default()).expect("defaults serialize");
        let mut lines = Vec::new();
        flat_lines("", &value, &mut lines);
        lines.push(format!("# budget.max_evals = {DEFAULT_MAX_EVALS} when no budget is set"));
        lines.push("# budget.max_iters = <unset>, capped at budget.max_evals when that is set".to_string());
        lines.push("# budget.max_wall_s = <unset>".to_string());
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

fn flat_lines(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flat_lines(&key, v, out);
            }
        }
        other => out.push(format!("{prefix} = {other}")),
    }
}
