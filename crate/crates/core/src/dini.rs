//! Upper right Dini derivative estimates and a constructive search for a
//! point where a nonnegative function outgrows `C θ`.
//!
//! For a nonnegative continuous `θ` on `[0, T)` with `θ(0) = 0` that is not
//! identically zero, and any `C > 0`, some `t ∈ (0, T)` has `θ(t) > 0` and
//! `θ̇⁺(t) > C θ(t)`; otherwise `e^{−Ct} θ(t)` could never leave zero.
//! [`find_lemma_point`] scans a grid for such a point.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A nonnegative function sampled on `[0, T)`.
#[derive(Clone)]
pub struct SampledFunction {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub horizon: f64,
}

impl fmt::Debug for SampledFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledFunction")
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl SampledFunction {
    pub fn new<F>(horizon: f64, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        assert!(horizon > 0.0, "horizon must be positive");
        Self {
            f: Arc::new(f),
            horizon,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

/// Geometric step sequence `start, start·ratio, …` down to `stop` (inclusive
/// when hit within rounding).
pub fn geometric_steps(start: f64, stop: f64, ratio: f64) -> Vec<f64> {
    assert!(start > 0.0 && stop > 0.0 && ratio > 0.0 && ratio < 1.0);
    let mut h = start;
    let mut out = Vec::new();
    while h >= stop * (1.0 - 1e-12) {
        out.push(h);
        h *= ratio;
    }
    out
}

/// Default steps: from `1e-2·T` down to `1e-7·T`, halving.
pub fn default_steps(horizon: f64) -> Vec<f64> {
    geometric_steps(1e-2 * horizon, 1e-7 * horizon, 0.5)
}

fn validate_steps(h_grid: &[f64], horizon: f64) -> Result<()> {
    if h_grid.is_empty() {
        return Err(Error::InvalidSteps("empty step grid".into()));
    }
    if h_grid.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::InvalidSteps("steps must be positive".into()));
    }
    if h_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSteps("steps must be strictly decreasing".into()));
    }
    let min = h_grid[h_grid.len() - 1];
    if min < 1e-9 * horizon * (1.0 - 1e-12) {
        return Err(Error::InvalidSteps(format!(
            "smallest step {min:e} is below 1e-9·T"
        )));
    }
    Ok(())
}

/// Estimate of `θ̇⁺(t) = limsup_{h→0+} (θ(t+h) − θ(t)) / h` as the largest
/// forward difference quotient over `h_grid`.
pub fn dini_upper(theta: &SampledFunction, t: f64, h_grid: &[f64]) -> Result<f64> {
    validate_steps(h_grid, theta.horizon)?;
    let reach = t + h_grid[0];
    if t < 0.0 || reach >= theta.horizon {
        return Err(Error::HorizonExceeded {
            reach,
            horizon: theta.horizon,
        });
    }
    Ok(quotient_max(theta, t, h_grid))
}

fn quotient_max(theta: &SampledFunction, t: f64, h_grid: &[f64]) -> f64 {
    let base = theta.eval(t);
    h_grid
        .iter()
        .map(|&h| (theta.eval(t + h) - base) / h)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Grid point with `θ(t_C) > 0` and estimated `θ̇⁺(t_C) > C θ(t_C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaPoint {
    pub t: f64,
    pub theta: f64,
    pub dini: f64,
}

/// Scan `t_k = k T / grid_points` for `k = 1, …, grid_points − 1` and return
/// the first point satisfying the strict inequality. Steps that would reach
/// past the horizon are dropped near `T`.
pub fn find_lemma_point(
    theta: &SampledFunction,
    c: f64,
    grid_points: usize,
    h_grid: &[f64],
) -> Result<LemmaPoint> {
    if !(c > 0.0) {
        return Err(Error::PreconditionViolated(format!("C = {c} is not positive")));
    }
    validate_steps(h_grid, theta.horizon)?;
    let horizon = theta.horizon;
    let theta0 = theta.eval(0.0);
    if theta0 != 0.0 {
        return Err(Error::PreconditionViolated(format!("θ(0) = {theta0}, expected 0")));
    }
    let ts: Vec<f64> = (1..grid_points)
        .map(|k| k as f64 * horizon / grid_points as f64)
        .collect();
    let values: Vec<f64> = ts.iter().map(|&t| theta.eval(t)).collect();
    if let Some(i) = values.iter().position(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::PreconditionViolated(format!(
            "θ({}) = {} is not a nonnegative number",
            ts[i], values[i]
        )));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::PreconditionViolated(
            "θ vanishes identically on the grid".into(),
        ));
    }

    let mut max_gap = f64::NEG_INFINITY;
    for (&t, &value) in ts.iter().zip(&values) {
        if value <= 0.0 {
            continue;
        }
        let start = h_grid.partition_point(|&h| t + h >= horizon);
        let steps = &h_grid[start..];
        if steps.is_empty() {
            continue;
        }
        let dini = quotient_max(theta, t, steps);
        let gap = dini - c * value;
        if gap > 0.0 {
            return Ok(LemmaPoint {
                t,
                theta: value,
                dini,
            });
        }
        max_gap = max_gap.max(gap);
    }
    Err(Error::NotFound { max_gap })
}
