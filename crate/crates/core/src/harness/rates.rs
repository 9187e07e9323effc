use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convergence-rate model fitted in a log-transformed domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `min_{j≤k} y_j ≈ C·k^s`, fitted in log-log; theory gives `s = −1/2`.
    InvSqrtK,
    /// `y_k − f* ≈ C·k^s`, fitted in log-log; theory gives `s = −1`.
    InvK,
    /// `y_k − f* ≈ C·ρ^k`, fitted in log-linear.
    Geometric,
}

impl RateModel {
    pub fn name(self) -> &'static str {
        match self {
            RateModel::InvSqrtK => "inv_sqrt_k",
            RateModel::InvK => "inv_k",
            RateModel::Geometric => "geometric",
        }
    }
}

impl fmt::Display for RateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inv_sqrt_k" => Ok(RateModel::InvSqrtK),
            "inv_k" => Ok(RateModel::InvK),
            "geometric" => Ok(RateModel::Geometric),
            other => Err(Error::InvalidConfig(format!(
                "unknown rate model {other:?} (expected inv_sqrt_k, inv_k or geometric)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    /// `C` in the model.
    pub constant: f64,
    /// Log-log slope `s`, or `log ρ` for the geometric model.
    pub slope: f64,
    /// `ρ = e^slope` for the geometric model, NaN otherwise.
    pub factor: f64,
    /// Root-mean-square residual in natural-log units.
    pub residual: f64,
    /// Iterations actually used, inclusive.
    pub window: (usize, usize),
    pub points: usize,
}

impl fmt::Display for RateFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "model={} constant={} slope={} factor={} residual={} window={}..{} points={}",
            self.model, self.constant, self.slope, self.factor, self.residual, self.window.0, self.window.1, self.points
        )
    }
}

/// Ordinary least squares `y ≈ a + b·x`; returns `(a, b, rms residual)`.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (a, b, (rss / n).sqrt())
}

/// First iteration a fit may use: the basis needs `m/2` pushes before every
/// initial column has been replaced.
pub fn warmup_end(m: usize) -> usize {
    (m / 2).max(1)
}

/// Fits `model` to `curve[k]` (indexed by iteration) over `window = (from, to)`.
///
/// For `inv_k` and `geometric` the curve holds function values and `fstar`
/// is subtracted; for `inv_sqrt_k` it holds gradient norms and `fstar` is
/// ignored. Once the excess reaches zero (to machine precision) the fit uses
/// only the prefix before that iteration.
pub fn fit_rate(curve: &[f64], fstar: f64, model: RateModel, window: (usize, usize)) -> Result<RateFit> {
    let (from, to) = window;
    let from = from.max(1);
    let to = to.min(curve.len().saturating_sub(1));
    if from > to {
        return Err(Error::InvalidConfig(format!("empty fit window {from}..{to} for a curve of {} points", curve.len())));
    }
    let floor = match model {
        RateModel::InvSqrtK => 0.0,
        _ => fstar,
    };
    let hit_tol = 4.0 * f64::EPSILON * floor.abs().max(1.0);
    let mut running_min = f64::INFINITY;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &v) in curve.iter().enumerate().take(to + 1) {
        if !v.is_finite() {
            if k >= from {
                return Err(Error::NumericalError(format!("non-finite value at iteration {k}")));
            }
            continue;
        }
        if model != RateModel::InvSqrtK && v < fstar - 1e-9 {
            return Err(Error::NumericalError(format!(
                "curve value {v} at iteration {k} lies below f* = {fstar}"
            )));
        }
        running_min = running_min.min(v);
        let y = match model {
            RateModel::InvSqrtK => running_min,
            _ => v - fstar,
        };
        if y <= hit_tol {
            break;
        }
        if k >= from {
            xs.push(match model {
                RateModel::Geometric => k as f64,
                _ => (k as f64).ln(),
            });
            ys.push(y.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::NumericalError(format!(
            "only {} usable points in window {from}..{to}",
            xs.len()
        )));
    }
    let (a, b, residual) = least_squares(&xs, &ys);
    let last = from + xs.len() - 1;
    Ok(RateFit {
        model,
        constant: a.exp(),
        slope: b,
        factor: if model == RateModel::Geometric { b.exp() } else { f64::NAN },
        residual,
        window: (from, last),
        points: xs.len(),
    })
}
