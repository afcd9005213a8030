//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Half-space description `⟨n_i, x⟩ ≤ b_i` of a random bounded polygon
/// containing the origin. Normals are spread around the circle with
/// gaps below π, which guarantees boundedness.
pub fn random_polygon(k: usize, jitter: &[f64], offsets: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let normals = (0..k)
        .map(|i| {
            let a = 2.0 * PI * (i as f64 + 0.3 * jitter[i]) / k as f64;
            vec![a.cos(), a.sin()]
        })
        .collect();
    (normals, offsets[..k].to_vec())
}

pub fn inside(normals: &[Vec<f64>], offsets: &[f64], p: &[f64]) -> bool {
    normals
        .iter()
        .zip(offsets)
        .all(|(n, b)| n.iter().zip(p).map(|(a, x)| a * x).sum::<f64>() <= *b)
}

/// Vertices of a bounded polygon containing the origin, found by
/// intersecting every pair of boundary lines, sorted by angle.
pub fn polygon_vertices(normals: &[Vec<f64>], offsets: &[f64]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::new();
    for i in 0..normals.len() {
        for j in i + 1..normals.len() {
            let (a, b) = (&normals[i], &normals[j]);
            let det = a[0] * b[1] - a[1] * b[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (offsets[i] * b[1] - offsets[j] * a[1]) / det;
            let y = (a[0] * offsets[j] - b[0] * offsets[i]) / det;
            let ok = normals
                .iter()
                .zip(offsets)
                .all(|(n, c)| n[0] * x + n[1] * y <= c + 1e-9);
            if ok && !out.iter().any(|p| (p[0] - x).abs() + (p[1] - y).abs() < 1e-9) {
                out.push([x, y]);
            }
        }
    }
    out.sort_by(|p, q| p[1].atan2(p[0]).total_cmp(&q[1].atan2(q[0])));
    out
}

/// Brute-force nearest point: `q` itself when feasible, otherwise the
/// closest of the vertices and of points spaced `h` apart along every edge.
pub fn polygon_nearest(normals: &[Vec<f64>], offsets: &[f64], q: &[f64], h: f64) -> Vec<f64> {
    if inside(normals, offsets, q) {
        return q.to_vec();
    }
    let verts = polygon_vertices(normals, offsets);
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for k in 0..verts.len() {
        let (a, b) = (verts[k], verts[(k + 1) % verts.len()]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let n = (len / h).ceil().max(1.0) as usize;
        for s in 0..=n {
            let u = s as f64 / n as f64;
            let p = vec![a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
            let d = euclid(&p, q);
            if d < best.0 {
                best = (d, p);
            }
        }
    }
    best.1
}

/// Smallest distance from `q` to a feasible point of the uniform grid of
/// spacing `h` on `[-r, r]^d`.
pub fn grid_distance(normals: &[Vec<f64>], offsets: &[f64], q: &[f64], r: f64, h: f64) -> f64 {
    let d = q.len();
    let count = (2.0 * r / h).round() as usize + 1;
    let total = count.pow(d as u32);
    let mut best = f64::INFINITY;
    let mut p = vec![0.0; d];
    for flat in 0..total {
        let mut rest = flat;
        for c in p.iter_mut() {
            *c = -r + (rest % count) as f64 * h;
            rest /= count;
        }
        if inside(normals, offsets, &p) {
            best = best.min(euclid(&p, q));
        }
    }
    best
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Closed-form projection onto a box, written independently of the crate.
pub fn clamp_box(lo: &[f64], hi: &[f64], v: &[f64]) -> Vec<f64> {
    v.iter().enumerate().map(|(k, x)| x.max(lo[k]).min(hi[k])).collect()
}

/// Closed-form projection onto a ball.
pub fn ball_project(center: &[f64], r: f64, v: &[f64]) -> Vec<f64> {
    let d = euclid(center, v);
    if d <= r {
        v.to_vec()
    } else {
        center.iter().zip(v).map(|(c, x)| c + r * (x - c) / d).collect()
    }
}
