use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 9] = [
    "iter",
    "wall_time_s",
    "f",
    "sketch_grad_norm",
    "true_grad_norm_or_nan",
    "alpha",
    "ls_count",
    "cum_evals",
    "rank_Pk",
];

/// One trace row. Row `k ≥ 1` describes the iterate `x_k` together with the
/// step (`alpha`, `ls_count`, `sketch_grad_norm`) that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: u64,
    pub wall_time_s: f64,
    pub f: f64,
    pub sketch_grad_norm: f64,
    pub true_grad_norm: f64,
    pub alpha: f64,
    pub ls_count: u64,
    pub cum_evals: u64,
    pub rank: f64,
}

/// Why a run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    MaxIters,
    MaxEvals,
    MaxWallTime,
    Converged,
    /// A deterministic method could not make progress.
    Stalled,
    NumericalAbort(String),
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::MaxIters => f.write_str("max_iters"),
            StopReason::MaxEvals => f.write_str("max_evals"),
            StopReason::MaxWallTime => f.write_str("max_wall_time"),
            StopReason::Converged => f.write_str("converged"),
            StopReason::Stalled => f.write_str("stalled"),
            StopReason::NumericalAbort(msg) => write!(f, "numerical_abort: {msg}"),
        }
    }
}

/// Per-iteration record of one run plus its identifying header.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    /// `key=value` pairs written on the `# config:` line, in order.
    pub config: Vec<(String, String)>,
    pub rng: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
}

impl Trace {
    pub fn new(config: Vec<(String, String)>, seed: u64) -> Self {
        Self {
            config,
            rng: crate::sketch::rng_id(),
            seed,
            rows: Vec::new(),
            stop: StopReason::MaxIters,
        }
    }

    pub fn f_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.f).collect()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Whether `f` never increases from one row to the next.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].f <= w[0].f)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cfg: Vec<String> = self.config.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "# config: {}", cfg.join(" "))?;
        writeln!(out, "# rng: {}", self.rng)?;
        writeln!(out, "# seed: {}", self.seed)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                r.wall_time_s.to_string(),
                r.f.to_string(),
                r.sketch_grad_norm.to_string(),
                r.true_grad_norm.to_string(),
                r.alpha.to_string(),
                r.ls_count.to_string(),
                r.cum_evals.to_string(),
                r.rank.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses a trace written by [`Trace::write_csv`]. The stop reason is not
    /// part of the file and comes back as [`StopReason::MaxIters`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut config = Vec::new();
        let mut rng = String::new();
        let mut seed = 0;
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# config:") {
                config = rest
                    .split_whitespace()
                    .filter_map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
                    .collect();
            } else if let Some(rest) = line.strip_prefix("# rng:") {
                rng = rest.trim().to_string();
            } else if let Some(rest) = line.strip_prefix("# seed:") {
                seed = rest.trim().parse().map_err(|e| Error::Parse(format!("bad seed line: {e}")))?;
            } else if !line.starts_with('#') {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let headers = reader.headers().map_err(csv_err)?.clone();
        if headers.iter().ne(COLUMNS) {
            return Err(Error::Parse(format!("unexpected trace columns: {headers:?}")));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_err)?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::Parse(format!("column {}: {e}", COLUMNS[i])))
            };
            let int = |i: usize| -> Result<u64> {
                rec[i].parse::<u64>().map_err(|e| Error::Parse(format!("column {}: {e}", COLUMNS[i])))
            };
            rows.push(TraceRow {
                iter: int(0)?,
                wall_time_s: num(1)?,
                f: num(2)?,
                sketch_grad_norm: num(3)?,
                true_grad_norm: num(4)?,
                alpha: num(5)?,
                ls_count: int(6)?,
                cum_evals: int(7)?,
                rank: num(8)?,
            });
        }
        Ok(Self {
            config,
            rng,
            seed,
            rows,
            stop: StopReason::MaxIters,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Flattens a serializable config into sorted `key=value` pairs.
pub fn config_pairs<T: serde::Serialize>(config: &T) -> Vec<(String, String)> {
    let value = toml::Value::try_from(config).unwrap_or(toml::Value::Table(Default::default()));
    let mut out = Vec::new();
    flatten("", &value, &mut out);
    out.sort();
    out
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        toml::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        toml::Value::Float(f) => out.push((prefix.to_string(), f.to_string())),
        other => out.push((prefix.to_string(), other.to_string().replace(' ', ""))),
    }
}
