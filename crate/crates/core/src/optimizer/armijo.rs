use crate::error::{Error, Result};

/// Accepted step of a backtracking search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    /// Number of trial evaluations of `phi`, including the accepted one.
    pub ls_count: usize,
    /// `phi(alpha)`.
    pub value: f64,
}

/// Backtracking Armijo search over `α ∈ {1, β, β², …}`.
///
/// Accepts the first `α` with `phi(α) ≤ f0 + c·α·slope`. A trial point whose
/// value overflows counts as a rejection. Fails with
/// [`Error::LineSearchExhausted`] after `max_ls` rejected trials, and with
/// [`Error::NonDescent`] when `slope` is not negative.
pub fn armijo<F>(f0: f64, slope: f64, mut phi: F, beta: f64, c: f64, max_ls: usize) -> Result<LineSearchResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(slope < 0.0) {
        return Err(Error::NonDescent { slope });
    }
    if !(beta > 0.0 && beta < 1.0 && c > 0.0 && c < 1.0) {
        return Err(Error::InvalidConfig(format!("need beta, c in (0,1), got beta={beta}, c={c}")));
    }
    for i in 0..max_ls {
        let alpha = beta.powi(i as i32);
        let value = match phi(alpha) {
            Ok(v) => v,
            Err(Error::NumericalOverflow { .. }) => continue,
            Err(e) => return Err(e),
        };
        if value <= f0 + c * alpha * slope {
            return Ok(LineSearchResult {
                alpha,
                ls_count: i + 1,
                value,
            });
        }
    }
    Err(Error::LineSearchExhausted { ls_count: max_ls })
}

/// `min(1, 2β·factor/(m·M2·L))`: the guaranteed lower bound on accepted steps,
/// where `factor = 1 − c` for exact sketched gradients and `1 − 2c` for
/// finite differences.
pub fn step_size_floor(beta: f64, factor: f64, m: usize, m2: f64, l: f64) -> f64 {
    (2.0 * beta * factor / (m as f64 * m2 * l)).min(1.0)
}
