//! Experiment runner: batches of (method, seed) runs on one problem, trace
//! files, seed-averaged summaries, rate fits and plots.

mod config;
mod plot;
mod rates;
mod summary;

use std::path::{Path, PathBuf};

pub use config::{
    BaselineSection, BudgetSection, ExperimentConfig, DEFAULT_MAX_EVALS, Method, MethodConfig, OutputSection, RunSection, SqnSection,
};
pub use plot::{emit_plots, line_chart};
pub use rates::{fit_rate, warmup_end, RateFit, RateModel};
pub use summary::{by_iteration, by_time, Axis, MethodCurve, Summary, METRICS};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optimizer::{StopReason, Trace};
use crate::oracle::Problem;

/// Outcome of one (method, seed) run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    /// `Err` holds the message of a run that could not start.
    pub result: std::result::Result<Trace, String>,
    pub trace_path: Option<PathBuf>,
}

impl RunRecord {
    pub fn stop(&self) -> Option<&StopReason> {
        self.result.as_ref().ok().map(|t| &t.stop)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub runs: Vec<RunRecord>,
    pub fstar: Option<f64>,
    pub summary_iter: Summary,
    pub summary_time: Summary,
    pub files: Vec<PathBuf>,
}

impl ExperimentReport {
    /// Whether any run ended in a numerical failure.
    pub fn has_numerical_abort(&self) -> bool {
        self.runs
            .iter()
            .any(|r| matches!(r.stop(), Some(StopReason::NumericalAbort(_))))
    }
}

/// Runs a single method on a problem with the given per-run configuration.
pub fn run_method(problem: &Problem, config: &MethodConfig) -> Result<Trace> {
    match config {
        MethodConfig::Sqn(c) => crate::optimizer::run(problem, c),
        MethodConfig::Baseline(c) => crate::baselines::run(problem, c),
    }
}

fn trace_name(method: Method, seed: u64) -> String {
    format!("{method}_seed{seed}.csv")
}

/// Runs every (method, seed) pair, then writes traces, summaries and plots
/// under `output.dir`. Every method's settings are validated before any run
/// starts; a run that fails later is recorded in `runs.csv` and the
/// remaining runs proceed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let problem = config.problem.build()?;
    for &method in &config.run.methods {
        match config.method_config(method, config.run.seeds[0]) {
            MethodConfig::Sqn(c) => c.validate(problem.dim()),
            MethodConfig::Baseline(c) => c.validate(&problem),
        }
        .map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{method}: {msg}")),
            other => other,
        })?;
    }
    let out = &config.output.dir;
    let trace_dir = out.join("traces");
    std::fs::create_dir_all(&trace_dir)?;

    let jobs: Vec<(Method, u64)> = config
        .run
        .methods
        .iter()
        .flat_map(|&m| config.run.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let execute = |&(method, seed): &(Method, u64)| -> Result<RunRecord> {
        let result = run_method(&problem, &config.method_config(method, seed)).map_err(|e| e.to_string());
        let trace_path = match &result {
            Ok(trace) => {
                let path = trace_dir.join(trace_name(method, seed));
                trace.save(&path)?;
                Some(path)
            }
            Err(_) => None,
        };
        Ok(RunRecord {
            method,
            seed,
            result,
            trace_path,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<RunRecord> = pool.install(|| jobs.par_iter().map(execute).collect::<Result<_>>())?;

    let fstar = problem.optimum_value();
    let mut methods: Vec<Method> = Vec::new();
    for &m in &config.run.methods {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let groups: Vec<(String, Vec<&Trace>)> = methods
        .iter()
        .map(|&m| {
            let traces = runs
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| r.result.as_ref().ok())
                .collect();
            (m.name().to_string(), traces)
        })
        .collect();
    let summary_iter = by_iteration(&groups, fstar);
    let summary_time = by_time(&groups, config.output.time_bins, fstar);

    let mut files: Vec<PathBuf> = runs.iter().filter_map(|r| r.trace_path.clone()).collect();
    let iter_path = out.join("summary_iter.csv");
    summary_iter.save(&iter_path)?;
    let time_path = out.join("summary_time.csv");
    summary_time.save(&time_path)?;
    let runs_path = out.join("runs.csv");
    write_runs(&runs, &runs_path)?;
    files.extend([iter_path, time_path, runs_path]);
    if config.output.plot {
        let plot_dir = out.join("plots");
        files.extend(emit_plots(&summary_iter, &plot_dir)?);
        files.extend(emit_plots(&summary_time, &plot_dir)?);
    }
    Ok(ExperimentReport {
        runs,
        fstar,
        summary_iter,
        summary_time,
        files,
    })
}

fn write_runs(runs: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["method", "seed", "stop", "rows", "final_f", "cum_evals", "trace", "error"])
        .map_err(err)?;
    for r in runs {
        let (stop, rows, final_f, evals, error) = match &r.result {
            Ok(t) => {
                let last = t.last();
                (
                    t.stop.to_string(),
                    t.rows.len().to_string(),
                    last.map_or(f64::NAN, |l| l.f).to_string(),
                    last.map_or(0, |l| l.cum_evals).to_string(),
                    String::new(),
                )
            }
            Err(msg) => ("error".into(), "0".into(), "NaN".into(), "0".into(), msg.clone()),
        };
        let trace = r
            .trace_path
            .as_ref()
            .and_then(|p| p.file_name())
            .map(|n| format!("traces/{}", n.to_string_lossy()))
            .unwrap_or_default();
        w.write_record([r.method.name().to_string(), r.seed.to_string(), stop, rows, final_f, evals, trace, error])
            .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean of one trace column across traces, aligned by iteration with the last
/// value of shorter traces carried forward.
pub fn mean_curve(traces: &[Trace], column: usize) -> Vec<f64> {
    let groups = vec![(String::new(), traces.iter().collect::<Vec<_>>())];
    by_iteration(&groups, None)
        .curves
        .into_iter()
        .next()
        .map(|c| c.mean[column].clone())
        .unwrap_or_default()
}
