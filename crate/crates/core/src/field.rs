//! Discretized sections and the geometric context diagnostics need from a
//! solver grid.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Grid values of a section at one instant, stored node-major with `m`
/// components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub values: Vec<f64>,
    m: usize,
}

impl FieldState {
    pub fn new(t: f64, values: Vec<f64>, m: usize) -> Self {
        assert!(m > 0 && values.len() % m == 0);
        Self { t, values, m }
    }

    pub fn zeros(t: f64, nodes: usize, m: usize) -> Self {
        Self::new(t, vec![0.0; nodes * m], m)
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.m
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// What the diagnostics need to know about the grid a field lives on.
pub trait FieldGeometry {
    fn node_count(&self) -> usize;

    fn position(&self, node: usize) -> Vec<f64>;

    fn is_boundary(&self, node: usize) -> bool;

    /// Outward normal derivative `∇_ν f` at a boundary node, by a one-sided
    /// second-order difference.
    fn normal_derivative(&self, state: &FieldState, node: usize) -> Result<Vec<f64>>;
}

/// A time-dependent vector-valued function of position, evaluated in place.
/// Used for drift fields, boundary data and initial sections.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    f: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl VectorField {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { dim, f: Arc::new(f) }
    }

    pub fn constant(value: Vec<f64>) -> Self {
        Self::new(value.len(), move |_, _, out| out.copy_from_slice(&value))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, x, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TimeStep {
    #[default]
    Auto,
    Fixed(f64),
}
