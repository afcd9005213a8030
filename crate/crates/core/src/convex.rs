//! Closed convex sets in `R^m`: nearest-point projection, distance, deviation
//! vectors and normal cones.
//!
//! Three representations are supported. Boxes and balls project in closed
//! form; polytopes (intersections of half-spaces `⟨n_i, x⟩ ≤ b_i` with unit
//! normals) project by Dykstra's alternating algorithm followed by an
//! active-set polish that recovers the exact KKT point when the active
//! normals are linearly independent.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{dist, dot, norm, normalized, scaled, sub};

/// Default tolerance for membership queries.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Default tolerance deciding whether a constraint is active.
pub const ACTIVITY_TOL: f64 = 1e-8;

const UNIT_NORMAL_TOL: f64 = 1e-12;
const DYKSTRA_MOVE_TOL: f64 = 1e-12;
const DYKSTRA_MAX_SWEEPS: usize = 100_000;
const PROJECTION_RESIDUAL: f64 = 1e-10;
const VERTEX_TOL: f64 = 1e-9;

/// Serialized form of a [`ConvexSet`]; this is the JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Polytope { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
}

/// A validated, nonempty, bounded closed convex set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape", into = "Shape")]
pub struct ConvexSet {
    shape: Shape,
    dim: usize,
    /// Box corners or polytope vertices (polytopes only for `dim <= 3`).
    vertices: Vec<Vec<f64>>,
}

/// Nearest point, distance and deviation of a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub omega: Vec<f64>,
    pub dist: f64,
    pub lambda: Vec<f64>,
}

/// Generators of the cone of supporting vectors at a boundary point. An empty
/// generator list means the point is interior.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalCone {
    pub generators: Vec<Vec<f64>>,
    pub is_singleton: bool,
}

impl NormalCone {
    fn new(generators: Vec<Vec<f64>>) -> Self {
        let is_singleton = generators.len() == 1;
        Self {
            generators,
            is_singleton,
        }
    }

    pub fn is_interior(&self) -> bool {
        self.generators.is_empty()
    }
}

impl TryFrom<Shape> for ConvexSet {
    type Error = Error;

    fn try_from(shape: Shape) -> Result<Self> {
        match shape {
            Shape::Box { lo, hi } => ConvexSet::cuboid(lo, hi),
            Shape::Ball { center, radius } => ConvexSet::ball(center, radius),
            Shape::Polytope { normals, offsets } => ConvexSet::polytope(normals, offsets),
        }
    }
}

impl From<ConvexSet> for Shape {
    fn from(set: ConvexSet) -> Self {
        set.shape
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ConvexSet {
    /// Axis-aligned box `[lo_1, hi_1] × … × [lo_m, hi_m]`.
    pub fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidSet(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if !all_finite(&lo) || !all_finite(&hi) {
            return Err(Error::InvalidSet("box bounds must be finite".into()));
        }
        if let Some(k) = (0..lo.len()).find(|&k| lo[k] >= hi[k]) {
            return Err(Error::InvalidSet(format!(
                "box needs lo < hi, axis {k} has [{}, {}]",
                lo[k], hi[k]
            )));
        }
        let dim = lo.len();
        let vertices = if dim <= 12 {
            (0..1usize << dim)
                .map(|mask| {
                    (0..dim)
                        .map(|k| if mask >> k & 1 == 1 { hi[k] } else { lo[k] })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            shape: Shape::Box { lo, hi },
            dim,
            vertices,
        })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !all_finite(&center) {
            return Err(Error::InvalidSet("ball center must be a finite vector".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidSet(format!("ball radius {radius} is not positive")));
        }
        let dim = center.len();
        Ok(Self {
            shape: Shape::Ball { center, radius },
            dim,
            vertices: Vec::new(),
        })
    }

    /// Intersection of half-spaces `⟨n_i, x⟩ ≤ b_i`. Normals must already be
    /// unit vectors; see [`ConvexSet::polytope_normalized`] otherwise.
    pub fn polytope(normals: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if normals.is_empty() || normals.len() != offsets.len() {
            return Err(Error::InvalidSet(format!(
                "polytope has {} normals and {} offsets",
                normals.len(),
                offsets.len()
            )));
        }
        let dim = normals[0].len();
        if dim == 0 || normals.iter().any(|n| n.len() != dim) {
            return Err(Error::InvalidSet("polytope normals differ in length".into()));
        }
        if normals.iter().any(|n| !all_finite(n)) || !all_finite(&offsets) {
            return Err(Error::InvalidSet("polytope data must be finite".into()));
        }
        if let Some(i) = normals
            .iter()
            .position(|n| (norm(n) - 1.0).abs() > UNIT_NORMAL_TOL)
        {
            return Err(Error::InvalidSet(format!(
                "normal {i} has norm {}, expected 1",
                norm(&normals[i])
            )));
        }

        let vertices = if dim <= 3 {
            let zeros = vec![0.0; normals.len()];
            let mut cone_normals = normals.clone();
            let mut cone_offsets = zeros;
            for k in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; dim];
                    e[k] = s;
                    cone_normals.push(e);
                    cone_offsets.push(1.0);
                }
            }
            let recession = enumerate_vertices(&cone_normals, &cone_offsets, dim);
            if recession.iter().any(|d| norm(d) > VERTEX_TOL) {
                return Err(Error::InvalidSet("polytope is unbounded".into()));
            }
            let vertices = enumerate_vertices(&normals, &offsets, dim);
            if vertices.is_empty() {
                return Err(Error::InvalidSet("polytope is empty".into()));
            }
            vertices
        } else {
            validate_high_dim(&normals, &offsets, dim)?;
            Vec::new()
        };

        Ok(Self {
            shape: Shape::Polytope { normals, offsets },
            dim,
            vertices,
        })
    }

    /// Polytope from arbitrary (nonzero) normals, rescaling each half-space
    /// so that its normal has unit length.
    pub fn polytope_normalized(normals: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if normals.len() != offsets.len() {
            return Err(Error::InvalidSet("normals and offsets differ in length".into()));
        }
        let mut unit = Vec::with_capacity(normals.len());
        let mut scaled_offsets = Vec::with_capacity(offsets.len());
        for (n, b) in normals.iter().zip(&offsets) {
            let len = norm(n);
            if !(len > 0.0) {
                return Err(Error::InvalidSet("zero normal".into()));
            }
            unit.push(scaled(n, 1.0 / len));
            scaled_offsets.push(b / len);
        }
        Self::polytope(unit, scaled_offsets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Box corners or polytope vertices. Empty for balls and for polytopes
    /// of dimension above three.
    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    fn check_dim(&self, v: &[f64]) {
        assert_eq!(
            v.len(),
            self.dim,
            "vector of length {} queried against a set in R^{}",
            v.len(),
            self.dim
        );
    }

    /// Nearest point `ω(v)`, `dist_W v` and `λ(v) = v − ω(v)`.
    pub fn project(&self, v: &[f64]) -> Projection {
        self.check_dim(v);
        let omega = match &self.shape {
            Shape::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&x, (&l, &h))| x.clamp(l, h))
                .collect(),
            Shape::Ball { center, radius } => {
                let d = dist(v, center);
                if d <= *radius {
                    v.to_vec()
                } else {
                    let s = radius / d;
                    center
                        .iter()
                        .zip(v)
                        .map(|(c, x)| c + s * (x - c))
                        .collect()
                }
            }
            Shape::Polytope { normals, offsets } => project_polytope(normals, offsets, v),
        };
        let lambda = sub(v, &omega);
        let dist = norm(&lambda);
        Projection {
            omega,
            dist,
            lambda,
        }
    }

    /// Distance to the set; cheaper than [`project`](Self::project) for
    /// boxes and balls.
    pub fn distance(&self, v: &[f64]) -> f64 {
        self.check_dim(v);
        match &self.shape {
            Shape::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&x, (&l, &h))| {
                    let e = if x < l {
                        l - x
                    } else if x > h {
                        x - h
                    } else {
                        0.0
                    };
                    e * e
                })
                .sum::<f64>()
                .sqrt(),
            Shape::Ball { center, radius } => (dist(v, center) - radius).max(0.0),
            Shape::Polytope { .. } => self.project(v).dist,
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.distance(v) <= tol
    }

    /// Supporting-vector generators at `omega`: the active constraint normals
    /// for boxes and polytopes, the outward radial direction for balls.
    pub fn normal_cone(&self, omega: &[f64], activity_tol: f64) -> Result<NormalCone> {
        let d = self.distance(omega);
        if d > activity_tol {
            return Err(Error::NotOnSet {
                dist: d,
                tol: activity_tol,
            });
        }
        let generators = match &self.shape {
            Shape::Box { lo, hi } => {
                let mut g = Vec::new();
                for k in 0..self.dim {
                    if omega[k] <= lo[k] + activity_tol {
                        let mut e = vec![0.0; self.dim];
                        e[k] = -1.0;
                        g.push(e);
                    }
                    if omega[k] >= hi[k] - activity_tol {
                        let mut e = vec![0.0; self.dim];
                        e[k] = 1.0;
                        g.push(e);
                    }
                }
                g
            }
            Shape::Ball { center, radius } => {
                let r = sub(omega, center);
                if norm(&r) >= radius - activity_tol {
                    vec![scaled(&r, 1.0 / norm(&r))]
                } else {
                    Vec::new()
                }
            }
            Shape::Polytope { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .filter(|(n, &b)| dot(n, omega) >= b - activity_tol)
                .map(|(n, _)| n.clone())
                .collect(),
        };
        Ok(NormalCone::new(generators))
    }

    /// Largest observed `⟨λ, σ − ω⟩` over sampled `σ ∈ W`. Corners, vertices
    /// and (for balls) the exact support point in direction `λ` are always
    /// included, so the result is exact for boxes, balls and polytopes of
    /// dimension up to three.
    pub fn validate_supporting<R: Rng + ?Sized>(
        &self,
        omega: &[f64],
        lambda: &[f64],
        n_samples: usize,
        rng: &mut R,
    ) -> f64 {
        self.check_dim(omega);
        let base = dot(lambda, omega);
        let margin = |sigma: &[f64]| dot(lambda, sigma) - base;
        let mut worst = f64::NEG_INFINITY;
        for v in &self.vertices {
            worst = worst.max(margin(v));
        }
        match &self.shape {
            Shape::Box { lo, hi } => {
                for _ in 0..n_samples {
                    let s: Vec<f64> = (0..self.dim).map(|k| rng.gen_range(lo[k]..=hi[k])).collect();
                    worst = worst.max(margin(&s));
                }
            }
            Shape::Ball { center, radius } => {
                if let Some(u) = normalized(lambda) {
                    let support: Vec<f64> =
                        center.iter().zip(&u).map(|(c, x)| c + radius * x).collect();
                    worst = worst.max(margin(&support));
                }
                for _ in 0..n_samples {
                    let s = sample_sphere(center, *radius, rng);
                    worst = worst.max(margin(&s));
                }
            }
            Shape::Polytope { .. } => {
                if self.vertices.is_empty() {
                    for _ in 0..n_samples {
                        let g: Vec<f64> = (0..self.dim).map(|_| 1e3 * gaussian(rng)).collect();
                        worst = worst.max(margin(&self.project(&g).omega));
                    }
                } else {
                    for _ in 0..n_samples {
                        let s = random_convex_combination(&self.vertices, rng);
                        worst = worst.max(margin(&s));
                    }
                }
            }
        }
        worst
    }

    /// Axis-aligned bounding box. Exact except for polytopes above three
    /// dimensions, where it is approximated from far-point projections.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Shape::Polytope { .. } => {
                let mut lo = vec![f64::INFINITY; self.dim];
                let mut hi = vec![f64::NEG_INFINITY; self.dim];
                let points: Vec<Vec<f64>> = if self.vertices.is_empty() {
                    (0..self.dim)
                        .flat_map(|k| {
                            [1e8, -1e8].map(|s| {
                                let mut e = vec![0.0; self.dim];
                                e[k] = s;
                                self.project(&e).omega
                            })
                        })
                        .collect()
                } else {
                    self.vertices.clone()
                };
                for p in &points {
                    for k in 0..self.dim {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Points on `∂W` used by the tangency checker, in a deterministic order
    /// for `dim <= 3` (`density` points per face per dimension) and drawn
    /// from `rng` otherwise (`random_count` points).
    pub fn boundary_samples<R: Rng + ?Sized>(
        &self,
        density: usize,
        random_count: usize,
        rng: &mut R,
    ) -> Vec<Vec<f64>> {
        let density = density.max(2);
        let m = self.dim;
        match &self.shape {
            Shape::Box { lo, hi } if m <= 3 => {
                let mut out = Vec::new();
                for k in 0..m {
                    for side in [lo[k], hi[k]] {
                        let others: Vec<usize> = (0..m).filter(|&j| j != k).collect();
                        let count = density.pow(others.len() as u32);
                        for idx in 0..count {
                            let mut p = vec![0.0; m];
                            p[k] = side;
                            let mut rem = idx;
                            for &j in &others {
                                let step = rem % density;
                                rem /= density;
                                let s = step as f64 / (density - 1) as f64;
                                p[j] = lo[j] + s * (hi[j] - lo[j]);
                            }
                            out.push(p);
                        }
                    }
                }
                out
            }
            Shape::Box { lo, hi } => (0..random_count)
                .map(|_| {
                    let mut p: Vec<f64> = (0..m).map(|k| rng.gen_range(lo[k]..=hi[k])).collect();
                    let k = rng.gen_range(0..m);
                    p[k] = if rng.gen::<bool>() { hi[k] } else { lo[k] };
                    p
                })
                .collect(),
            Shape::Ball { center, radius } => match m {
                1 => vec![vec![center[0] - radius], vec![center[0] + radius]],
                2 => (0..density)
                    .map(|i| {
                        let a = std::f64::consts::TAU * i as f64 / density as f64;
                        vec![center[0] + radius * a.cos(), center[1] + radius * a.sin()]
                    })
                    .collect(),
                3 => {
                    // Fibonacci lattice with density² points.
                    let n = density * density;
                    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                    (0..n)
                        .map(|i| {
                            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                            let r = (1.0 - z * z).sqrt();
                            let a = golden * i as f64;
                            vec![
                                center[0] + radius * r * a.cos(),
                                center[1] + radius * r * a.sin(),
                                center[2] + radius * z,
                            ]
                        })
                        .collect()
                }
                _ => (0..random_count)
                    .map(|_| sample_sphere(center, *radius, rng))
                    .collect(),
            },
            Shape::Polytope { normals, offsets } if m <= 3 => {
                let mut out = Vec::new();
                for (n, &b) in normals.iter().zip(offsets) {
                    let face: Vec<&Vec<f64>> = self
                        .vertices
                        .iter()
                        .filter(|v| (dot(n, v) - b).abs() <= VERTEX_TOL * (1.0 + b.abs()))
                        .collect();
                    sample_face(&face, n, density, &mut out);
                }
                out
            }
            Shape::Polytope { .. } => {
                let (lo, hi) = self.bounding_box();
                let scale = lo
                    .iter()
                    .zip(&hi)
                    .map(|(l, h)| (h - l).abs())
                    .fold(1.0, f64::max);
                (0..random_count)
                    .map(|_| {
                        let g: Vec<f64> = (0..m).map(|_| gaussian(rng)).collect();
                        let u = normalized(&g).unwrap_or_else(|| vec![1.0; m]);
                        let far = scaled(&u, 10.0 * scale);
                        self.project(&far).omega
                    })
                    .collect()
            }
        }
    }
}

fn sample_face(face: &[&Vec<f64>], normal: &[f64], density: usize, out: &mut Vec<Vec<f64>>) {
    match face.len() {
        0 => {}
        1 => out.push(face[0].clone()),
        2 => {
            for i in 0..density {
                let s = i as f64 / (density - 1) as f64;
                out.push(face[0].iter().zip(face[1]).map(|(a, b)| a + s * (b - a)).collect());
            }
        }
        _ if normal.len() == 2 => {
            // Collinear vertices on an edge of a 2-D polytope: sample between the extremes.
            let dir = [-normal[1], normal[0]];
            let lo = face.iter().min_by(|a, b| dot(a, &dir).total_cmp(&dot(b, &dir))).unwrap();
            let hi = face.iter().max_by(|a, b| dot(a, &dir).total_cmp(&dot(b, &dir))).unwrap();
            sample_face(&[lo, hi], normal, density, out);
        }
        _ => {
            // Planar polygon in R^3: fan triangulation around its centroid.
            let k = face.len() as f64;
            let c: Vec<f64> = (0..3).map(|j| face.iter().map(|v| v[j]).sum::<f64>() / k).collect();
            let u = {
                let d = sub(face[0], &c);
                normalized(&d).unwrap_or_else(|| vec![1.0, 0.0, 0.0])
            };
            let w = [
                normal[1] * u[2] - normal[2] * u[1],
                normal[2] * u[0] - normal[0] * u[2],
                normal[0] * u[1] - normal[1] * u[0],
            ];
            let mut ordered: Vec<&Vec<f64>> = face.to_vec();
            ordered.sort_by(|a, b| {
                let angle = |p: &Vec<f64>| {
                    let d = sub(p, &c);
                    dot(&d, &w).atan2(dot(&d, &u))
                };
                angle(a).total_cmp(&angle(b))
            });
            let steps = density - 1;
            for t in 0..ordered.len() {
                let a = ordered[t];
                let b = ordered[(t + 1) % ordered.len()];
                for i in 0..=steps {
                    for j in 0..=(steps - i) {
                        let (s, r) = (i as f64 / steps as f64, j as f64 / steps as f64);
                        out.push((0..3).map(|q| c[q] + s * (a[q] - c[q]) + r * (b[q] - c[q])).collect());
                    }
                }
            }
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sample_sphere<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = center.iter().map(|_| gaussian(rng)).collect();
        if let Some(u) = normalized(&g) {
            return center.iter().zip(&u).map(|(c, x)| c + radius * x).collect();
        }
    }
}

fn random_convex_combination<R: Rng + ?Sized>(points: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    let weights: Vec<f64> = points
        .iter()
        .map(|_| -rng.gen_range(f64::EPSILON..1.0f64).ln())
        .collect();
    let total: f64 = weights.iter().sum();
    let dim = points[0].len();
    let mut s = vec![0.0; dim];
    for (p, w) in points.iter().zip(&weights) {
        for k in 0..dim {
            s[k] += w / total * p[k];
        }
    }
    s
}

fn max_violation(normals: &[Vec<f64>], offsets: &[f64], x: &[f64]) -> f64 {
    normals
        .iter()
        .zip(offsets)
        .map(|(n, b)| dot(n, x) - b)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Feasible vertices of `{x : ⟨n_i, x⟩ ≤ b_i}` by solving every `dim × dim`
/// subsystem of tight constraints.
fn enumerate_vertices(normals: &[Vec<f64>], offsets: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let k = normals.len();
    let mut idx: Vec<usize> = (0..dim).collect();
    if k < dim {
        return vertices;
    }
    loop {
        let a = DMatrix::from_fn(dim, dim, |r, c| normals[idx[r]][c]);
        let rhs = DVector::from_fn(dim, |r, _| offsets[idx[r]]);
        if a.determinant().abs() > 1e-12 {
            if let Some(x) = a.lu().solve(&rhs) {
                let x: Vec<f64> = x.iter().copied().collect();
                let scale = 1.0 + norm(&x);
                if max_violation(normals, offsets, &x) <= VERTEX_TOL * scale
                    && !vertices.iter().any(|v| dist(v, &x) <= VERTEX_TOL * scale)
                {
                    vertices.push(x);
                }
            }
        }
        if !next_combination(&mut idx, k) {
            return vertices;
        }
    }
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn validate_high_dim(normals: &[Vec<f64>], offsets: &[f64], dim: usize) -> Result<()> {
    // Bounded iff the recession cone {d : ⟨n_i, d⟩ ≤ 0} is {0}; a nonzero
    // cone element has positive inner product with some ±e_k, whose
    // projection onto the cone is then nonzero.
    let zeros = vec![0.0; offsets.len()];
    for k in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[k] = s;
            let (p, _) = dykstra(normals, &zeros, &e);
            if norm(&p) > 1e-7 {
                return Err(Error::InvalidSet("polytope is unbounded".into()));
            }
        }
    }
    let (x, converged) = dykstra(normals, offsets, &vec![0.0; dim]);
    if !converged || max_violation(normals, offsets, &x) > 1e-9 {
        return Err(Error::InvalidSet("polytope is empty (Dykstra did not converge)".into()));
    }
    Ok(())
}

/// Dykstra's alternating projections onto the half-spaces. Returns the final
/// iterate and whether it met the movement and feasibility tolerances.
pub(crate) fn dykstra(normals: &[Vec<f64>], offsets: &[f64], v: &[f64]) -> (Vec<f64>, bool) {
    let dim = v.len();
    let mut x = v.to_vec();
    let mut corrections = vec![vec![0.0; dim]; normals.len()];
    let mut y = vec![0.0; dim];
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let prev = x.clone();
        let mut correction_move: f64 = 0.0;
        for ((n, &b), p) in normals.iter().zip(offsets).zip(corrections.iter_mut()) {
            for k in 0..dim {
                y[k] = x[k] + p[k];
            }
            let excess = dot(n, &y) - b;
            for k in 0..dim {
                x[k] = if excess > 0.0 { y[k] - excess * n[k] } else { y[k] };
                let next = y[k] - x[k];
                correction_move = correction_move.max((next - p[k]).abs());
                p[k] = next;
            }
        }
        let scale = 1.0 + norm(&x);
        // The iterate alone can stall while corrections are still moving.
        if dist(&x, &prev) < DYKSTRA_MOVE_TOL * scale
            && correction_move < DYKSTRA_MOVE_TOL * scale
            && max_violation(normals, offsets, &x) <= PROJECTION_RESIDUAL * scale
        {
            return (x, true);
        }
    }
    (x, false)
}

fn project_polytope(normals: &[Vec<f64>], offsets: &[f64], v: &[f64]) -> Vec<f64> {
    if max_violation(normals, offsets, v) <= 0.0 {
        return v.to_vec();
    }
    let (x, _) = dykstra(normals, offsets, v);
    polish(normals, offsets, v, &x).unwrap_or(x)
}

/// Solve the equality-constrained projection on the constraints active at
/// `x` and accept it when it satisfies the KKT conditions.
fn polish(normals: &[Vec<f64>], offsets: &[f64], v: &[f64], x: &[f64]) -> Option<Vec<f64>> {
    let scale = 1.0 + norm(x);
    let active: Vec<usize> = (0..normals.len())
        .filter(|&i| dot(&normals[i], x) >= offsets[i] - 1e-7 * scale)
        .collect();
    if active.is_empty() || active.len() > v.len() {
        return None;
    }
    let k = active.len();
    let gram = DMatrix::from_fn(k, k, |r, c| dot(&normals[active[r]], &normals[active[c]]));
    let rhs = DVector::from_fn(k, |r, _| dot(&normals[active[r]], v) - offsets[active[r]]);
    let mu = gram.cholesky()?.solve(&rhs);
    if mu.iter().any(|&m| m < -1e-12) {
        return None;
    }
    let mut y = v.to_vec();
    for (r, &i) in active.iter().enumerate() {
        for (yk, nk) in y.iter_mut().zip(&normals[i]) {
            *yk -= mu[r] * nk;
        }
    }
    let viol = max_violation(normals, offsets, &y);
    (viol <= 1e-12 * scale && dist(&y, x) <= 1e-6 * scale).then_some(y)
}
