use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizer::{Trace, TraceRow};

/// The quantities averaged across seeds.
pub const METRICS: [&str; 3] = ["f", "true_grad_norm", "sketch_grad_norm"];

fn metric(row: &TraceRow, i: usize) -> f64 {
    match i {
        0 => row.f,
        1 => row.true_grad_norm,
        _ => row.sketch_grad_norm,
    }
}

/// How curves from different seeds are lined up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Iteration,
    Time,
}

impl Axis {
    pub fn column(self) -> &'static str {
        match self {
            Axis::Iteration => "iter",
            Axis::Time => "time_s",
        }
    }
}

/// Mean and population standard deviation of each metric at each grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodCurve {
    pub method: String,
    pub x: Vec<f64>,
    pub seeds: Vec<usize>,
    /// `mean[metric][point]`.
    pub mean: [Vec<f64>; 3],
    pub std: [Vec<f64>; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub axis: Axis,
    pub fstar: Option<f64>,
    pub curves: Vec<MethodCurve>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    // shifting by the first value keeps identical inputs exact (std = 0)
    let shift = values.first().copied().filter(|v| v.is_finite()).unwrap_or(0.0);
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Row `k` of a trace, or its last row when the run stopped earlier.
fn at_iter(trace: &Trace, k: usize) -> &TraceRow {
    &trace.rows[k.min(trace.rows.len() - 1)]
}

/// Last row recorded no later than `t`, or the first row.
fn at_time(trace: &Trace, t: f64) -> &TraceRow {
    let idx = trace.rows.partition_point(|r| r.wall_time_s <= t);
    &trace.rows[idx.saturating_sub(1)]
}

fn aggregate<'a>(method: &str, traces: &[&'a Trace], x: Vec<f64>, pick: impl Fn(&'a Trace, usize) -> &'a TraceRow) -> MethodCurve {
    let mut mean: [Vec<f64>; 3] = Default::default();
    let mut std: [Vec<f64>; 3] = Default::default();
    for p in 0..x.len() {
        for m in 0..METRICS.len() {
            let vals: Vec<f64> = traces.iter().map(|t| metric(pick(t, p), m)).collect();
            let (mu, sd) = mean_std(&vals);
            mean[m].push(mu);
            std[m].push(sd);
        }
    }
    MethodCurve {
        method: method.to_string(),
        seeds: vec![traces.len(); x.len()],
        x,
        mean,
        std,
    }
}

/// Aligns traces by iteration index, carrying a finished run's last row forward.
pub fn by_iteration(groups: &[(String, Vec<&Trace>)], fstar: Option<f64>) -> Summary {
    let curves = groups
        .iter()
        .filter_map(|(method, traces)| {
            let traces: Vec<&Trace> = traces.iter().copied().filter(|t| !t.rows.is_empty()).collect();
            let len = traces.iter().map(|t| t.rows.len()).max()?;
            let x = (0..len).map(|k| k as f64).collect();
            Some(aggregate(method, &traces, x, |t, k| at_iter(t, k)))
        })
        .collect();
    Summary {
        axis: Axis::Iteration,
        fstar,
        curves,
    }
}

/// Aligns traces on `bins + 1` evenly spaced times from 0 to the longest run.
pub fn by_time(groups: &[(String, Vec<&Trace>)], bins: usize, fstar: Option<f64>) -> Summary {
    let horizon = groups
        .iter()
        .flat_map(|(_, ts)| ts.iter().filter_map(|t| t.last().map(|r| r.wall_time_s)))
        .fold(0.0, f64::max);
    let bins = bins.max(1);
    let grid: Vec<f64> = (0..=bins).map(|j| horizon * j as f64 / bins as f64).collect();
    let curves = groups
        .iter()
        .filter_map(|(method, traces)| {
            let traces: Vec<&Trace> = traces.iter().copied().filter(|t| !t.rows.is_empty()).collect();
            if traces.is_empty() {
                return None;
            }
            let g = grid.clone();
            Some(aggregate(method, &traces, grid.clone(), move |t, p| at_time(t, g[p])))
        })
        .collect();
    Summary {
        axis: Axis::Time,
        fstar,
        curves,
    }
}

impl Summary {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if let Some(f) = self.fstar {
            writeln!(out, "# fstar: {f}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method".to_string(), self.axis.column().to_string(), "seeds".to_string()];
        for m in METRICS {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
        for c in &self.curves {
            for p in 0..c.x.len() {
                let mut rec = vec![c.method.clone(), c.x[p].to_string(), c.seeds[p].to_string()];
                for m in 0..METRICS.len() {
                    rec.push(c.mean[m][p].to_string());
                    rec.push(c.std[m][p].to_string());
                }
                w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut fstar = None;
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# fstar:") {
                fstar = Some(rest.trim().parse().map_err(|e| Error::Parse(format!("bad fstar: {e}")))?);
            } else if !line.starts_with('#') {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let axis = match headers.get(1) {
            Some("iter") => Axis::Iteration,
            Some("time_s") => Axis::Time,
            other => return Err(Error::Parse(format!("not a summary file (second column {other:?})"))),
        };
        if headers.len() != 3 + 2 * METRICS.len() {
            return Err(Error::Parse(format!("summary has {} columns", headers.len())));
        }
        let mut curves: Vec<MethodCurve> = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| Error::Parse(format!("column {i}: {e}")));
            let method = rec[0].to_string();
            if curves.last().is_none_or(|c| c.method != method) {
                curves.push(MethodCurve {
                    method: method.clone(),
                    x: Vec::new(),
                    seeds: Vec::new(),
                    mean: Default::default(),
                    std: Default::default(),
                });
            }
            let c = curves.last_mut().expect("pushed above");
            c.x.push(num(1)?);
            c.seeds.push(rec[2].parse().map_err(|e| Error::Parse(format!("seeds column: {e}")))?);
            for m in 0..METRICS.len() {
                c.mean[m].push(num(3 + 2 * m)?);
                c.std[m].push(num(4 + 2 * m)?);
            }
        }
        Ok(Self { axis, fstar, curves })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
