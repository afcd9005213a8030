//! Explicit finite-difference solver for the reaction-diffusion-drift system
//!
//! ```text
//! ∂_t f_i = Σ_j ∂²_j f_i + Σ_j ζ_j(t, x) ∂_j f_i + φ_i(t, x, f)
//! ```
//!
//! on an interval or rectangle, with Dirichlet, zero-Neumann or oblique
//! boundary data, or on a periodic domain without boundary. Space is
//! discretized with second-order central stencils on a node-centred grid
//! (ghost nodes carry flux conditions); time with RK4 or forward Euler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::convex::ConvexSet;
use crate::diagnostics::{DiagnosticRecord, InvarianceVerdict, Monitor};
use crate::error::{Error, Result};
use crate::field::{FieldGeometry, FieldState, Integrator, TimeStep, VectorField};
use crate::tangency::ReactionTerm;
use crate::vecmath::{dot, norm, sub};

/// Values beyond this magnitude abort a run.
pub const OVERFLOW_GUARD: f64 = 1e12;
const OBLIQUE_TOL: f64 = 1e-9;

/// Interval or rectangle with a uniform grid of `cells[j]` cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    extent: Vec<(f64, f64)>,
    cells: Vec<usize>,
    periodic: bool,
}

impl Domain {
    pub fn new(extent: Vec<(f64, f64)>, cells: Vec<usize>, periodic: bool) -> Result<Self> {
        if extent.is_empty() || extent.len() > 2 || extent.len() != cells.len() {
            return Err(Error::InvalidScenario(format!(
                "domain needs 1 or 2 axes with matching cell counts, got {} and {}",
                extent.len(),
                cells.len()
            )));
        }
        for (&(a, b), &n) in extent.iter().zip(&cells) {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidScenario(format!("axis [{a}, {b}] is empty")));
            }
            if n < 8 {
                return Err(Error::InvalidScenario(format!(
                    "{n} cells per axis, at least 8 required"
                )));
            }
        }
        Ok(Self {
            extent,
            cells,
            periodic,
        })
    }

    pub fn interval(a: f64, b: f64, cells: usize) -> Result<Self> {
        Self::new(vec![(a, b)], vec![cells], false)
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), cells: (usize, usize)) -> Result<Self> {
        Self::new(vec![x, y], vec![cells.0, cells.1], false)
    }

    pub fn periodic(mut self) -> Self {
        self.periodic = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.extent.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn extent(&self) -> &[(f64, f64)] {
        &self.extent
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (a, b) = self.extent[axis];
        (b - a) / self.cells[axis] as f64
    }

    /// Nodes along an axis: `N + 1` with endpoints, `N` when periodic.
    pub fn axis_nodes(&self, axis: usize) -> usize {
        if self.periodic {
            self.cells[axis]
        } else {
            self.cells[axis] + 1
        }
    }

    /// Node index from per-axis indices, in lexicographic order.
    #[inline]
    pub fn index(&self, idx: [usize; 2]) -> usize {
        if self.dim() == 1 {
            idx[0]
        } else {
            idx[0] * self.axis_nodes(1) + idx[1]
        }
    }

    #[inline]
    pub fn coords(&self, node: usize) -> [usize; 2] {
        if self.dim() == 1 {
            [node, 0]
        } else {
            let ny = self.axis_nodes(1);
            [node / ny, node % ny]
        }
    }

    fn axis_position(&self, axis: usize, i: usize) -> f64 {
        self.extent[axis].0 + i as f64 * self.spacing(axis)
    }

    /// Outward directions at a node: `(axis, +1 | −1)` for every face it
    /// lies on.
    fn faces(&self, node: usize) -> Vec<(usize, f64)> {
        if self.periodic {
            return Vec::new();
        }
        let c = self.coords(node);
        let mut out = Vec::new();
        for k in 0..self.dim() {
            if c[k] == 0 {
                out.push((k, -1.0));
            } else if c[k] == self.cells[k] {
                out.push((k, 1.0));
            }
        }
        out
    }

    fn face_slot(&self, node: usize, axis: usize) -> usize {
        if self.dim() == 1 {
            0
        } else {
            self.coords(node)[1 - axis]
        }
    }
}

impl FieldGeometry for Domain {
    fn node_count(&self) -> usize {
        (0..self.dim()).map(|k| self.axis_nodes(k)).product()
    }

    fn position(&self, node: usize) -> Vec<f64> {
        let c = self.coords(node);
        (0..self.dim()).map(|k| self.axis_position(k, c[k])).collect()
    }

    fn is_boundary(&self, node: usize) -> bool {
        !self.faces(node).is_empty()
    }

    /// One-sided `(3 f₀ − 4 f₁ + f₂) / 2h` along each face normal; at a
    /// rectangle corner the normal is the normalized diagonal.
    fn normal_derivative(&self, state: &FieldState, node: usize) -> Result<Vec<f64>> {
        let faces = self.faces(node);
        if faces.is_empty() {
            return Err(Error::InteriorPoint(node));
        }
        let m = state.components();
        let mut out = vec![0.0; m];
        let c = self.coords(node);
        for &(axis, side) in &faces {
            let step = |d: usize| {
                let mut cc = c;
                if side < 0.0 {
                    cc[axis] += d;
                } else {
                    cc[axis] -= d;
                }
                self.index(cc)
            };
            let (f0, f1, f2) = (state.node(node), state.node(step(1)), state.node(step(2)));
            let h = self.spacing(axis);
            for k in 0..m {
                out[k] += (3.0 * f0[k] - 4.0 * f1[k] + f2[k]) / (2.0 * h);
            }
        }
        if faces.len() > 1 {
            let s = 1.0 / (faces.len() as f64).sqrt();
            out.iter_mut().for_each(|v| *v *= s);
        }
        Ok(out)
    }
}

/// Oblique flux data: `∂_ν f = h(t, x, f)` with `⟨λ̄(f), h⟩ = 0` whenever
/// `f ∉ W`. Without `lambda_bar` the deviation `λ(f)` is used.
#[derive(Debug, Clone)]
pub struct ObliqueData {
    pub flux: ReactionTerm,
    pub lambda_bar: Option<ReactionTerm>,
}

#[derive(Debug, Clone)]
pub enum BoundaryCondition {
    /// Boundary nodes follow `g(t, x)`.
    Dirichlet(VectorField),
    /// `∂_ν f = 0`.
    NeumannZero,
    Oblique(ObliqueData),
}

/// Ghost values outside each face: `faces[axis][side]` holds one vector per
/// face node (side 0 = low end, 1 = high end).
#[derive(Debug, Clone, PartialEq)]
pub struct GhostLayer {
    m: usize,
    faces: Vec<[Vec<f64>; 2]>,
}

impl GhostLayer {
    pub fn new(domain: &Domain, m: usize) -> Self {
        let faces = (0..domain.dim())
            .map(|k| {
                let len = if domain.dim() == 1 {
                    1
                } else {
                    domain.axis_nodes(1 - k)
                };
                [vec![0.0; len * m], vec![0.0; len * m]]
            })
            .collect();
        Self { m, faces }
    }

    pub fn get(&self, axis: usize, side: usize, slot: usize) -> &[f64] {
        &self.faces[axis][side][slot * self.m..(slot + 1) * self.m]
    }

    fn get_mut(&mut self, axis: usize, side: usize, slot: usize) -> &mut [f64] {
        &mut self.faces[axis][side][slot * self.m..(slot + 1) * self.m]
    }
}

/// Fill ghost nodes (and overwrite Dirichlet boundary nodes) for the state's
/// time. Zero-Neumann ghosts mirror the first interior neighbour; oblique
/// ghosts are `neighbour + 2h·h(t, x, f)`, so the central difference across
/// the boundary node reproduces the prescribed normal derivative.
pub fn apply_boundary(
    state: &mut FieldState,
    domain: &Domain,
    bc: &BoundaryCondition,
    set: &ConvexSet,
    ghosts: &mut GhostLayer,
) -> Result<()> {
    if domain.is_periodic() {
        return Ok(());
    }
    let m = state.components();
    let t = state.t;
    let mut flux = vec![0.0; m];
    for node in 0..domain.node_count() {
        let faces = domain.faces(node);
        if faces.is_empty() {
            continue;
        }
        let x = domain.position(node);
        if let BoundaryCondition::Dirichlet(g) = bc {
            g.eval_into(t, &x, state.node_mut(node));
        }
        if let BoundaryCondition::Oblique(data) = bc {
            let f = state.node(node).to_vec();
            data.flux.eval_into(t, &x, &f, &mut flux);
            check_oblique(set, data, &x, &f, &flux)?;
        }
        let c = domain.coords(node);
        for (axis, side) in faces {
            let mut inner = c;
            if side < 0.0 {
                inner[axis] += 1;
            } else {
                inner[axis] -= 1;
            }
            let inner = domain.index(inner);
            let h = domain.spacing(axis);
            let slot = domain.face_slot(node, axis);
            let s = usize::from(side > 0.0);
            let neighbour = state.node(inner).to_vec();
            let ghost = ghosts.get_mut(axis, s, slot);
            match bc {
                BoundaryCondition::Oblique(_) => {
                    for k in 0..m {
                        ghost[k] = neighbour[k] + 2.0 * h * flux[k];
                    }
                }
                _ => ghost.copy_from_slice(&neighbour),
            }
        }
    }
    Ok(())
}

fn check_oblique(
    set: &ConvexSet,
    data: &ObliqueData,
    x: &[f64],
    f: &[f64],
    flux: &[f64],
) -> Result<()> {
    let proj = set.project(f);
    if proj.dist <= 0.0 {
        return Ok(());
    }
    let lambda_bar = match &data.lambda_bar {
        Some(lb) => {
            let v = lb.eval(0.0, x, f);
            let mismatch = norm(&sub(&v, &proj.lambda));
            if mismatch > OBLIQUE_TOL * (1.0 + proj.dist) {
                return Err(Error::ObliqueViolation {
                    x: x.to_vec(),
                    detail: format!("λ̄(f) differs from λ(f) by {mismatch:e}"),
                });
            }
            v
        }
        None => proj.lambda,
    };
    let inner = dot(&lambda_bar, flux);
    if inner.abs() > OBLIQUE_TOL * (1.0 + norm(&lambda_bar) * norm(flux)) {
        return Err(Error::ObliqueViolation {
            x: x.to_vec(),
            detail: format!("⟨λ̄(f), h⟩ = {inner:e}"),
        });
    }
    Ok(())
}

/// Full problem description for the flat solver.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub domain: Domain,
    pub set: ConvexSet,
    pub phi: ReactionTerm,
    /// Drift `ζ(t, x) ∈ R^dim`; absent means zero.
    pub zeta: Option<VectorField>,
    pub bc: BoundaryCondition,
    pub f0: VectorField,
    pub horizon: f64,
    pub dt: TimeStep,
    pub integrator: Integrator,
    /// Observe every `cadence` steps; default `max(1, ⌊steps / 1000⌋)`.
    pub cadence: Option<usize>,
    /// Default `10 · ε_grid`.
    pub exit_threshold: Option<f64>,
    pub seed: u64,
}

impl Scenario {
    pub fn new(
        domain: Domain,
        set: ConvexSet,
        phi: ReactionTerm,
        bc: BoundaryCondition,
        f0: VectorField,
        horizon: f64,
    ) -> Self {
        Self {
            domain,
            set,
            phi,
            zeta: None,
            bc,
            f0,
            horizon,
            dt: TimeStep::Auto,
            integrator: Integrator::Rk4,
            cadence: None,
            exit_threshold: None,
            seed: 0,
        }
    }

    pub fn components(&self) -> usize {
        self.set.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.set.dim();
        if self.phi.dim() != m || self.f0.dim() != m {
            return Err(Error::InvalidScenario(format!(
                "set lives in R^{m}, reaction term in R^{}, initial data in R^{}",
                self.phi.dim(),
                self.f0.dim()
            )));
        }
        if let Some(z) = &self.zeta {
            if z.dim() != self.domain.dim() {
                return Err(Error::InvalidScenario(format!(
                    "drift has {} components on a {}-D domain",
                    z.dim(),
                    self.domain.dim()
                )));
            }
        }
        match &self.bc {
            BoundaryCondition::Dirichlet(g) if g.dim() != m => {
                return Err(Error::InvalidScenario("Dirichlet data has wrong dimension".into()))
            }
            BoundaryCondition::Oblique(o) if o.flux.dim() != m => {
                return Err(Error::InvalidScenario("oblique flux has wrong dimension".into()))
            }
            _ => {}
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidScenario(format!("horizon {} is not positive", self.horizon)));
        }
        if let TimeStep::Fixed(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidScenario(format!("time step {dt} is not positive")));
            }
        }
        Ok(())
    }

    /// `f0` sampled at the grid nodes.
    pub fn initial_state(&self) -> FieldState {
        let m = self.components();
        let n = self.domain.node_count();
        let mut state = FieldState::zeros(0.0, n, m);
        for node in 0..n {
            let x = self.domain.position(node);
            self.f0.eval_into(0.0, &x, state.node_mut(node));
        }
        state
    }

    /// Stability-limited step `0.2 h² / (2 dim)`, reduced for stiff reaction
    /// terms (`≤ 0.2 / C_φ`) and strong drift (`≤ 0.5 h / |ζ|`).
    pub fn auto_dt(&self) -> Result<f64> {
        let dim = self.domain.dim();
        let hmin = (0..dim).map(|k| self.domain.spacing(k)).fold(f64::INFINITY, f64::min);
        let mut dt = 0.2 * hmin * hmin / (2.0 * dim as f64);
        let c = self.lipschitz_estimate()?;
        if c > 0.0 {
            dt = dt.min(0.2 / c);
        }
        if let Some(z) = &self.zeta {
            let zmax = (0..self.domain.node_count())
                .map(|i| norm(&z.eval(0.0, &self.domain.position(i))))
                .fold(0.0, f64::max);
            if zmax > 0.0 {
                dt = dt.min(0.5 * hmin / zmax);
            }
        }
        Ok(dt)
    }

    fn lipschitz_estimate(&self) -> Result<f64> {
        let (mut lo, mut hi) = match &self.phi.lipschitz_probe_box {
            Some(b) => b.clone(),
            None => self.set.bounding_box(),
        };
        let init = self.initial_state();
        for i in 0..init.node_count() {
            for (k, &v) in init.node(i).iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let x = self.domain.position(self.domain.node_count() / 2);
        self.phi.estimate_lipschitz((&lo, &hi), 0.0, &x, 512, &mut rng)
    }

    /// Discretization noise floor `max(1e-8, max |δ⁴ f0| / 12)` where `δ⁴`
    /// is the undivided fourth difference along each axis.
    pub fn epsilon_grid(&self) -> f64 {
        let state = self.initial_state();
        let d = &self.domain;
        let mut proxy: f64 = 0.0;
        for node in 0..d.node_count() {
            let c = d.coords(node);
            for axis in 0..d.dim() {
                let n = d.axis_nodes(axis);
                if !d.is_periodic() && (c[axis] < 2 || c[axis] + 2 >= n) {
                    continue;
                }
                let at = |off: isize| {
                    let mut cc = c;
                    cc[axis] = (c[axis] as isize + off).rem_euclid(n as isize) as usize;
                    state.node(d.index(cc))
                };
                let (a, b, z, e, f) = (at(-2), at(-1), at(0), at(1), at(2));
                for k in 0..state.components() {
                    let fourth = a[k] - 4.0 * b[k] + 6.0 * z[k] - 4.0 * e[k] + f[k];
                    proxy = proxy.max(fourth.abs() / 12.0);
                }
            }
        }
        proxy.max(1e-8)
    }
}

/// Reusable stepping workspace for one scenario.
pub struct FlatSolver<'a> {
    scenario: &'a Scenario,
    ghosts: GhostLayer,
    positions: Vec<Vec<f64>>,
    boundary: Vec<bool>,
}

impl<'a> FlatSolver<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        scenario.validate()?;
        let d = &scenario.domain;
        let positions = (0..d.node_count()).map(|i| d.position(i)).collect();
        let boundary = (0..d.node_count()).map(|i| d.is_boundary(i)).collect();
        Ok(Self {
            scenario,
            ghosts: GhostLayer::new(d, scenario.components()),
            positions,
            boundary,
        })
    }

    fn dirichlet(&self) -> bool {
        matches!(self.scenario.bc, BoundaryCondition::Dirichlet(_))
    }

    /// Right-hand side at `state` (boundary data applied in place first).
    fn rhs(&mut self, state: &mut FieldState, out: &mut [f64]) -> Result<()> {
        let sc = self.scenario;
        let d = &sc.domain;
        apply_boundary(state, d, &sc.bc, &sc.set, &mut self.ghosts)?;
        let m = state.components();
        let dim = d.dim();
        let t = state.t;
        let hold = self.dirichlet();
        let mut zeta = [0.0; 2];
        let mut react = vec![0.0; m];
        for node in 0..d.node_count() {
            let o = &mut out[node * m..(node + 1) * m];
            if hold && self.boundary[node] {
                o.fill(0.0);
                continue;
            }
            let x = &self.positions[node];
            sc.phi.eval_into(t, x, state.node(node), &mut react);
            o.copy_from_slice(&react);
            if let Some(z) = &sc.zeta {
                z.eval_into(t, x, &mut zeta[..dim]);
            }
            let c = d.coords(node);
            let f = state.node(node);
            for axis in 0..dim {
                let h = d.spacing(axis);
                let n = d.axis_nodes(axis);
                let (lo, hi) = neighbours(d, &self.ghosts, state, c, axis, n, node);
                let inv_h2 = 1.0 / (h * h);
                for k in 0..m {
                    o[k] += (lo[k] - 2.0 * f[k] + hi[k]) * inv_h2;
                }
                if sc.zeta.is_some() && zeta[axis] != 0.0 {
                    let s = zeta[axis] / (2.0 * h);
                    for k in 0..m {
                        o[k] += s * (hi[k] - lo[k]);
                    }
                }
            }
        }
        Ok(())
    }

    /// One explicit step of size `dt`.
    pub fn step(&mut self, state: &FieldState, dt: f64) -> Result<FieldState> {
        let len = state.values.len();
        let m = state.components();
        let t = state.t;
        let mut next = match self.scenario.integrator {
            Integrator::Euler => {
                let mut s = state.clone();
                let mut k1 = vec![0.0; len];
                self.rhs(&mut s, &mut k1)?;
                let values = s.values.iter().zip(&k1).map(|(f, k)| f + dt * k).collect();
                FieldState::new(t + dt, values, m)
            }
            Integrator::Rk4 => {
                let mut s1 = state.clone();
                let mut k1 = vec![0.0; len];
                self.rhs(&mut s1, &mut k1)?;
                let base = s1.values.clone();
                let stage = |k: &[f64], c: f64, tt: f64| {
                    FieldState::new(tt, base.iter().zip(k).map(|(f, k)| f + c * k).collect(), m)
                };
                let mut s2 = stage(&k1, 0.5 * dt, t + 0.5 * dt);
                let mut k2 = vec![0.0; len];
                self.rhs(&mut s2, &mut k2)?;
                let mut s3 = stage(&k2, 0.5 * dt, t + 0.5 * dt);
                let mut k3 = vec![0.0; len];
                self.rhs(&mut s3, &mut k3)?;
                let mut s4 = stage(&k3, dt, t + dt);
                let mut k4 = vec![0.0; len];
                self.rhs(&mut s4, &mut k4)?;
                let values = (0..len)
                    .map(|i| base[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                    .collect();
                FieldState::new(t + dt, values, m)
            }
        };
        if self.dirichlet() {
            let sc = self.scenario;
            apply_boundary(&mut next, &sc.domain, &sc.bc, &sc.set, &mut self.ghosts)?;
        }
        if !next.is_finite() {
            return Err(Error::NonFinite { t: next.t });
        }
        let magnitude = next.max_abs();
        if magnitude > OVERFLOW_GUARD {
            return Err(Error::Instability { t: next.t, magnitude });
        }
        Ok(next)
    }
}

fn neighbours<'s>(
    d: &Domain,
    ghosts: &'s GhostLayer,
    state: &'s FieldState,
    c: [usize; 2],
    axis: usize,
    n: usize,
    node: usize,
) -> (&'s [f64], &'s [f64]) {
    let slot = d.face_slot(node, axis);
    let at = |i: usize| {
        let mut cc = c;
        cc[axis] = i;
        state.node(d.index(cc))
    };
    let lo = if c[axis] > 0 {
        at(c[axis] - 1)
    } else if d.is_periodic() {
        at(n - 1)
    } else {
        ghosts.get(axis, 0, slot)
    };
    let hi = if c[axis] + 1 < n {
        at(c[axis] + 1)
    } else if d.is_periodic() {
        at(0)
    } else {
        ghosts.get(axis, 1, slot)
    };
    (lo, hi)
}

/// One explicit time step; see [`FlatSolver::step`].
pub fn step(state: &FieldState, scenario: &Scenario, dt: f64) -> Result<FieldState> {
    FlatSolver::new(scenario)?.step(state, dt)
}

/// Trajectory, diagnostics and verdict of a run. When a step fails the
/// trajectory stops at the last good state and `failure` is set.
#[derive(Debug)]
pub struct RunOutput {
    pub trajectory: Vec<FieldState>,
    pub diagnostics: Vec<DiagnosticRecord>,
    pub verdict: InvarianceVerdict,
    pub failure: Option<Error>,
    pub dt: f64,
    pub steps: usize,
    pub epsilon_grid: f64,
    pub warnings: Vec<String>,
}

/// Integrate to the horizon, observing the run with a [`Monitor`] every
/// `cadence` steps and at the final time.
pub fn solve(scenario: &Scenario) -> Result<RunOutput> {
    let mut solver = FlatSolver::new(scenario)?;
    let initial = scenario.initial_state();
    let warnings = requirement_one_warnings(&initial, &scenario.set);
    let dt_target = match scenario.dt {
        TimeStep::Auto => scenario.auto_dt()?,
        TimeStep::Fixed(dt) => dt,
    };
    let epsilon_grid = scenario.epsilon_grid();
    let threshold = scenario.exit_threshold.unwrap_or(10.0 * epsilon_grid);
    drive(
        initial,
        scenario.horizon,
        dt_target,
        scenario.cadence,
        &scenario.set,
        &scenario.domain,
        threshold,
        epsilon_grid,
        warnings,
        |s, dt| solver.step(s, dt),
    )
}

pub(crate) fn requirement_one_warnings(initial: &FieldState, set: &ConvexSet) -> Vec<String> {
    let outside = (0..initial.node_count())
        .filter(|&i| !set.contains(initial.node(i), crate::convex::MEMBERSHIP_TOL))
        .count();
    if outside > 0 {
        vec![format!("initial data lies outside the set at {outside} nodes")]
    } else {
        Vec::new()
    }
}

/// Shared time loop for the flat and covariant solvers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn drive<F>(
    initial: FieldState,
    horizon: f64,
    dt_target: f64,
    cadence: Option<usize>,
    set: &ConvexSet,
    geometry: &dyn FieldGeometry,
    threshold: f64,
    epsilon_grid: f64,
    warnings: Vec<String>,
    mut step: F,
) -> Result<RunOutput>
where
    F: FnMut(&FieldState, f64) -> Result<FieldState>,
{
    let steps = ((horizon / dt_target) - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let cadence = cadence.unwrap_or((steps / 1000).max(1)).max(1);
    let mut monitor = Monitor::new(set, geometry, threshold);
    let mut diagnostics = vec![monitor.observe(&initial)?];
    let mut trajectory = vec![initial.clone()];
    let mut current = initial;
    let mut failure = None;
    for n in 1..=steps {
        match step(&current, dt) {
            Ok(mut next) => {
                if n == steps {
                    next.t = horizon;
                }
                current = next;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
        if n % cadence == 0 || n == steps {
            diagnostics.push(monitor.observe(&current)?);
            trajectory.push(current.clone());
        }
    }
    Ok(RunOutput {
        trajectory,
        diagnostics,
        verdict: monitor.finish(),
        failure,
        dt,
        steps,
        epsilon_grid,
        warnings,
    })
}

/// Trajectory CSV with columns `t,x1[,x2],f1..fm`.
pub fn write_trajectory_csv<W: std::io::Write>(
    out: W,
    geometry: &dyn FieldGeometry,
    trajectory: &[FieldState],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = trajectory.first() else {
        w.flush()?;
        return Ok(());
    };
    let dim = geometry.position(0).len();
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|j| format!("x{j}")));
    header.extend((1..=first.components()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for state in trajectory {
        for node in 0..state.node_count() {
            let mut row = vec![state.t.to_string()];
            row.extend(geometry.position(node).iter().map(|v| v.to_string()));
            row.extend(state.node(node).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Status;
    use approx::assert_abs_diff_eq;

    fn unit_interval_set() -> ConvexSet {
        ConvexSet::cuboid(vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::interval(0.0, 1.0, 4).is_err());
        assert!(Domain::interval(1.0, 0.0, 16).is_err());
        assert!(Domain::new(vec![(0.0, 1.0); 3], vec![8; 3], false).is_err());
        let d = Domain::rectangle((0.0, 2.0), (0.0, 1.0), (8, 8)).unwrap();
        assert_eq!(d.node_count(), 81);
        assert_eq!(d.coords(d.index([3, 5])), [3, 5]);
        assert_eq!(d.position(d.index([8, 8])), vec![2.0, 1.0]);
        assert!(d.is_boundary(d.index([0, 4])));
        assert!(!d.is_boundary(d.index([4, 4])));
        let p = Domain::interval(0.0, 1.0, 16).unwrap().periodic();
        assert_eq!(p.node_count(), 16);
        assert!(!(0..16).any(|i| p.is_boundary(i)));
    }

    #[test]
    fn neumann_ghost_mirrors_neighbour() {
        let d = Domain::interval(0.0, 1.0, 8).unwrap();
        let set = unit_interval_set();
        let mut state = FieldState::new(0.0, (0..9).map(|i| 0.1 * i as f64).collect(), 1);
        state.values[1] = 0.7;
        let mut g = GhostLayer::new(&d, 1);
        apply_boundary(&mut state, &d, &BoundaryCondition::NeumannZero, &set, &mut g).unwrap();
        assert_eq!(g.get(0, 0, 0), &[0.7]);
        assert_abs_diff_eq!(g.get(0, 1, 0)[0], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn dirichlet_overwrites_boundary() {
        let d = Domain::interval(0.0, 1.0, 8).unwrap();
        let mut state = FieldState::zeros(0.0, 9, 1);
        state.values[0] = -5.0;
        let mut g = GhostLayer::new(&d, 1);
        let bc = BoundaryCondition::Dirichlet(VectorField::constant(vec![2.0]));
        apply_boundary(&mut state, &d, &bc, &unit_interval_set(), &mut g).unwrap();
        assert_eq!(state.values[0], 2.0);
        assert_eq!(state.values[8], 2.0);
        assert_eq!(state.values[4], 0.0);
    }

    fn rotation_flux() -> ReactionTerm {
        // h = R λ̂(f) with R the quarter turn, for the unit disc.
        ReactionTerm::new(2, |_, _, v, out| {
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt().max(1e-300);
            out[0] = -v[1] / n;
            out[1] = v[0] / n;
        })
    }

    #[test]
    fn oblique_ghost_encodes_flux() {
        let d = Domain::interval(0.0, 1.0, 8).unwrap();
        let h = d.spacing(0);
        let disc = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let mut state = FieldState::zeros(0.0, 9, 2);
        state.node_mut(0).copy_from_slice(&[2.0, 0.0]);
        let mut g = GhostLayer::new(&d, 2);
        let bc = BoundaryCondition::Oblique(ObliqueData {
            flux: rotation_flux(),
            lambda_bar: None,
        });
        apply_boundary(&mut state, &d, &bc, &disc, &mut g).unwrap();
        // −(f₁ − f_ghost)/2h = ∂_ν f = (0, 1)
        let ghost = g.get(0, 0, 0);
        let dnu: Vec<f64> = (0..2).map(|k| (ghost[k] - state.node(1)[k]) / (2.0 * h)).collect();
        assert_abs_diff_eq!(dnu.as_slice(), [0.0, 1.0].as_slice(), epsilon = 1e-12);
        assert_abs_diff_eq!(dot(&[1.0, 0.0], &dnu), 0.0);
    }

    #[test]
    fn oblique_violation_detected() {
        let d = Domain::interval(0.0, 1.0, 8).unwrap();
        let disc = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
        let mut state = FieldState::zeros(0.0, 9, 2);
        state.node_mut(0).copy_from_slice(&[2.0, 0.0]);
        let mut g = GhostLayer::new(&d, 2);
        let outward = BoundaryCondition::Oblique(ObliqueData {
            flux: ReactionTerm::linear(2, 1.0),
            lambda_bar: None,
        });
        let err = apply_boundary(&mut state, &d, &outward, &disc, &mut g).unwrap_err();
        assert!(matches!(err, Error::ObliqueViolation { .. }));
        let wrong_lambda = BoundaryCondition::Oblique(ObliqueData {
            flux: rotation_flux(),
            lambda_bar: Some(ReactionTerm::linear(2, 1.0)),
        });
        let err = apply_boundary(&mut state, &d, &wrong_lambda, &disc, &mut g).unwrap_err();
        assert!(matches!(err, Error::ObliqueViolation { .. }));
    }

    fn scenario_1d(phi: ReactionTerm, bc: BoundaryCondition, f0: VectorField) -> Scenario {
        Scenario::new(
            Domain::interval(0.0, 1.0, 16).unwrap(),
            unit_interval_set(),
            phi,
            bc,
            f0,
            0.1,
        )
    }

    #[test]
    fn constants_are_equilibria() {
        let sc = scenario_1d(
            ReactionTerm::zero(1),
            BoundaryCondition::NeumannZero,
            VectorField::constant(vec![0.3]),
        );
        let s0 = sc.initial_state();
        let s1 = step(&s0, &sc, 1e-3).unwrap();
        assert_eq!(s1.values, s0.values);
        assert_eq!(s1.t, 1e-3);
    }

    #[test]
    fn linear_growth_euler_step() {
        let mut sc = scenario_1d(
            ReactionTerm::linear(1, 1.0),
            BoundaryCondition::NeumannZero,
            VectorField::constant(vec![0.5]),
        );
        sc.integrator = Integrator::Euler;
        let s0 = sc.initial_state();
        let dt = 1e-3;
        let s1 = step(&s0, &sc, dt).unwrap();
        assert_eq!(s1.values[8], 0.5 + dt * 0.5);
    }

    #[test]
    fn neumann_heat_single_step() {
        let l = 1.0;
        let n = 64;
        let k = std::f64::consts::PI / l;
        let sc = Scenario::new(
            Domain::interval(0.0, l, n).unwrap(),
            ConvexSet::cuboid(vec![-1.0], vec![1.0]).unwrap(),
            ReactionTerm::zero(1),
            BoundaryCondition::NeumannZero,
            VectorField::new(1, move |_, x, out| out[0] = (k * x[0]).cos()),
            1.0,
        );
        let h = l / n as f64;
        let dt = 0.1 * h * h;
        let s1 = step(&sc.initial_state(), &sc, dt).unwrap();
        let err = (0..=n)
            .map(|i| {
                let x = i as f64 * h;
                (s1.values[i] - (-k * k * dt).exp() * (k * x).cos()).abs()
            })
            .fold(0.0, f64::max);
        // Semi-discrete eigenvalue error is k⁴h²/12; one step multiplies it by dt.
        let bound = 1.5 * dt * h * h * k.powi(4) / 12.0 + dt * dt;
        assert!(err <= bound, "err {err:e} > {bound:e}");
    }

    #[test]
    fn zero_dirichlet_stays_zero() {
        let sc = Scenario::new(
            Domain::interval(0.0, 1.0, 16).unwrap(),
            ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap(),
            ReactionTerm::zero(2),
            BoundaryCondition::Dirichlet(VectorField::constant(vec![0.0, 0.0])),
            VectorField::constant(vec![0.0, 0.0]),
            0.05,
        );
        let out = solve(&sc).unwrap();
        assert_eq!(out.verdict.status, Status::Invariant);
        assert!(out.trajectory.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn instability_is_reported_with_partial_trajectory() {
        let mut sc = scenario_1d(
            ReactionTerm::zero(1),
            BoundaryCondition::NeumannZero,
            VectorField::new(1, |_, x, out| out[0] = if x[0] == 0.5 { 1.0 } else { 0.0 }),
        );
        sc.integrator = Integrator::Euler;
        sc.dt = TimeStep::Fixed(0.01);
        sc.horizon = 10.0;
        let out = solve(&sc).unwrap();
        assert!(matches!(out.failure, Some(Error::Instability { .. })));
        assert!(out.trajectory.len() >= 1);
        assert!(out.trajectory.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn two_dimensional_constant_is_fixed() {
        let sc = Scenario::new(
            Domain::rectangle((0.0, 1.0), (0.0, 2.0), (8, 12)).unwrap(),
            unit_interval_set(),
            ReactionTerm::zero(1),
            BoundaryCondition::NeumannZero,
            VectorField::constant(vec![0.25]),
            0.01,
        );
        let s1 = step(&sc.initial_state(), &sc, 1e-3).unwrap();
        assert!(s1.values.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn two_dimensional_normal_derivative() {
        let d = Domain::rectangle((0.0, 1.0), (0.0, 1.0), (8, 8)).unwrap();
        let mut s = FieldState::zeros(0.0, d.node_count(), 1);
        for i in 0..d.node_count() {
            let x = d.position(i);
            s.values[i] = 2.0 * x[0] + 3.0 * x[1];
        }
        let right = d.index([8, 4]);
        assert_abs_diff_eq!(d.normal_derivative(&s, right).unwrap()[0], 2.0, epsilon = 1e-12);
        let bottom = d.index([4, 0]);
        assert_abs_diff_eq!(d.normal_derivative(&s, bottom).unwrap()[0], -3.0, epsilon = 1e-12);
        let corner = d.index([8, 8]);
        assert_abs_diff_eq!(
            d.normal_derivative(&s, corner).unwrap()[0],
            5.0 / 2f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn trajectory_csv_header() {
        let d = Domain::interval(0.0, 1.0, 8).unwrap();
        let s = FieldState::zeros(0.0, 9, 2);
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &d, &[s]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,f1,f2\n0,0,0,0\n0,0.125,0,0\n"));
        assert_eq!(text.lines().count(), 10);
    }
}
