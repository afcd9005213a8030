//! Sampled certification of the tangency condition `⟨λ, φ(t, x, ω)⟩ ≤ 0`
//! for boundary points `ω ∈ ∂W` and supporting vectors `λ ∈ S_ω W`.
//!
//! For boxes and polytopes every supporting vector at `ω` is a unit
//! nonnegative combination of the active constraint normals, so checking
//! each active normal individually covers the whole normal cone.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::convex::{ConvexSet, ACTIVITY_TOL};
use crate::error::{Error, Result};
use crate::vecmath::{dist, dot, normalized};

type ReactionFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// A reaction term `φ(t, x, v)` mapping `R^m` to `R^m`, evaluated in place.
#[derive(Clone)]
pub struct ReactionTerm {
    dim: usize,
    f: Arc<ReactionFn>,
    /// Optional compact box `U` used for Lipschitz estimation.
    pub lipschitz_probe_box: Option<(Vec<f64>, Vec<f64>)>,
}

impl fmt::Debug for ReactionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactionTerm")
            .field("dim", &self.dim)
            .field("lipschitz_probe_box", &self.lipschitz_probe_box)
            .finish_non_exhaustive()
    }
}

impl ReactionTerm {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            dim,
            f: Arc::new(f),
            lipschitz_probe_box: None,
        }
    }

    /// `φ ≡ 0`.
    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_, _, _, out| out.fill(0.0))
    }

    /// `φ(v) = rate · v`.
    pub fn linear(dim: usize, rate: f64) -> Self {
        Self::new(dim, move |_, _, v, out| {
            for (o, x) in out.iter_mut().zip(v) {
                *o = rate * x;
            }
        })
    }

    /// Componentwise logistic growth `φ_i(v) = r v_i (1 − v_i)`.
    pub fn logistic(dim: usize, rate: f64) -> Self {
        Self::new(dim, move |_, _, v, out| {
            for (o, x) in out.iter_mut().zip(v) {
                *o = rate * x * (1.0 - x);
            }
        })
    }

    /// FitzHugh–Nagumo kinetics `(u − u³/3 − w + I, ε (u + a − b w))`.
    pub fn fitzhugh_nagumo(a: f64, b: f64, eps: f64, current: f64) -> Self {
        Self::new(2, move |_, _, v, out| {
            let (u, w) = (v[0], v[1]);
            out[0] = u - u * u * u / 3.0 - w + current;
            out[1] = eps * (u + a - b * w);
        })
    }

    pub fn with_probe_box(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        self.lipschitz_probe_box = Some((lo, hi));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval_into(&self, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) {
        (self.f)(t, x, v, out)
    }

    pub fn eval(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, x, v, &mut out);
        out
    }

    /// Evaluation that maps non-finite output to [`Error::EvalFailure`].
    pub fn try_eval(&self, t: f64, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let out = self.eval(t, x, v);
        if out.iter().all(|y| y.is_finite()) {
            Ok(out)
        } else {
            Err(Error::EvalFailure {
                t,
                x: x.to_vec(),
                v: v.to_vec(),
            })
        }
    }

    /// Empirical Lipschitz constant `max ‖φ(v₁) − φ(v₂)‖ / ‖v₁ − v₂‖` over
    /// random pairs in `probe` at the given `(t, x)`. A sanity check, not a
    /// bound.
    pub fn estimate_lipschitz<R: Rng + ?Sized>(
        &self,
        probe: (&[f64], &[f64]),
        t: f64,
        x: &[f64],
        pairs: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let (lo, hi) = probe;
        let draw = |rng: &mut R| -> Vec<f64> {
            lo.iter()
                .zip(hi)
                .map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l })
                .collect()
        };
        let mut best: f64 = 0.0;
        for _ in 0..pairs {
            let a = draw(rng);
            let b = draw(rng);
            let d = dist(&a, &b);
            if d == 0.0 {
                continue;
            }
            let fa = self.try_eval(t, x, &a)?;
            let fb = self.try_eval(t, x, &b)?;
            best = best.max(dist(&fa, &fb) / d);
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::EvalFailure {
                t,
                x: x.to_vec(),
                v: lo.to_vec(),
            })
        }
    }
}

/// Where the worst tangency margin was observed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub omega: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangencyReport {
    pub certified: bool,
    pub worst_margin: f64,
    pub worst_witness: Option<Witness>,
    pub samples_checked: usize,
    /// Boundary points per face per dimension (or random point count above
    /// three dimensions) used for the check.
    pub boundary_density: usize,
    pub boundary_points: usize,
    pub margin_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangencyConfig {
    pub boundary_density: usize,
    pub random_points: usize,
    pub margin_tol: f64,
    pub seed: u64,
}

impl Default for TangencyConfig {
    fn default() -> Self {
        Self {
            boundary_density: 32,
            random_points: 10_000,
            margin_tol: 1e-9,
            seed: 0,
        }
    }
}

/// Check `⟨λ, φ(t, x, ω)⟩ ≤ margin_tol` over sampled boundary points of `set`,
/// each supporting-vector generator there, and every `(t, x)` sample.
pub fn check_tangency(
    phi: &ReactionTerm,
    set: &ConvexSet,
    t_samples: &[f64],
    x_samples: &[Vec<f64>],
    config: &TangencyConfig,
) -> Result<TangencyReport> {
    if t_samples.is_empty() || x_samples.is_empty() {
        return Err(Error::PreconditionViolated(
            "tangency check needs nonempty time and space samples".into(),
        ));
    }
    if phi.dim() != set.dim() {
        return Err(Error::PreconditionViolated(format!(
            "reaction term acts on R^{} but the set lives in R^{}",
            phi.dim(),
            set.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let boundary = set.boundary_samples(config.boundary_density, config.random_points, &mut rng);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = boundary
        .iter()
        .map(|omega| {
            let cone = set.normal_cone(omega, ACTIVITY_TOL)?;
            Ok(cone
                .generators
                .into_iter()
                .map(|g| (omega.clone(), g))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    // (margin, t index, x index, pair index) per sample, reduced in order.
    let per_point: Vec<Result<(f64, usize, usize, usize)>> = pairs
        .par_iter()
        .enumerate()
        .map(|(pi, (omega, lambda))| {
            let mut best = (f64::NEG_INFINITY, 0, 0, pi);
            for (ti, &t) in t_samples.iter().enumerate() {
                for (xi, x) in x_samples.iter().enumerate() {
                    let f = phi.try_eval(t, x, omega)?;
                    let m = dot(lambda, &f);
                    if m > best.0 {
                        best = (m, ti, xi, pi);
                    }
                }
            }
            Ok(best)
        })
        .collect();

    let mut worst: Option<(f64, usize, usize, usize)> = None;
    for r in per_point {
        let r = r?;
        if worst.map_or(true, |w| r.0 > w.0) {
            worst = Some(r);
        }
    }
    let samples_checked = pairs.len() * t_samples.len() * x_samples.len();
    let (worst_margin, worst_witness) = match worst {
        Some((m, ti, xi, pi)) => (
            m,
            Some(Witness {
                t: t_samples[ti],
                x: x_samples[xi].clone(),
                omega: pairs[pi].0.clone(),
                lambda: pairs[pi].1.clone(),
            }),
        ),
        None => (f64::NEG_INFINITY, None),
    };
    Ok(TangencyReport {
        certified: worst_margin <= config.margin_tol,
        worst_margin,
        worst_witness,
        samples_checked,
        boundary_density: if set.dim() <= 3 {
            config.boundary_density
        } else {
            config.random_points
        },
        boundary_points: boundary.len(),
        margin_tol: config.margin_tol,
    })
}

/// One sampled trajectory value `f(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub value: Vec<f64>,
}

/// The weakened hypothesis evaluated a posteriori: the largest
/// `⟨λ(f)/‖λ(f)‖, φ(t, x, ω(f))⟩` over trajectory values outside the set.
/// `None` means no value lay outside and the check is vacuous.
pub fn tangency_margin_along_trajectory(
    phi: &ReactionTerm,
    set: &ConvexSet,
    trajectory: &[TrajectoryPoint],
) -> Result<Option<f64>> {
    let mut worst: Option<f64> = None;
    for p in trajectory {
        let proj = set.project(&p.value);
        if proj.dist <= 0.0 {
            continue;
        }
        let Some(dir) = normalized(&proj.lambda) else {
            continue;
        };
        let f = phi.try_eval(p.t, &p.x, &proj.omega)?;
        let m = dot(&dir, &f);
        worst = Some(worst.map_or(m, |w: f64| w.max(m)));
    }
    Ok(worst)
}
