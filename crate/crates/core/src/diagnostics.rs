//! Distance tracking, maximal distance pairs, the Hopf boundary functional
//! and invariance verdicts.
//!
//! `s(t) = max_x dist_W f(t, x)` is taken over grid nodes. Whenever it
//! exceeds the exit threshold, every node attaining the maximum is recorded
//! as a maximal distance pair, and boundary pairs also get the value of
//! `⟨λ(f), ∇_ν f⟩`. When the reaction term is tangent to `W` and the data
//! start in `W`, an exit can only happen through a boundary pair where this
//! functional is positive.

use std::io::Write;

use serde::Serialize;

use crate::convex::ConvexSet;
use crate::error::{Error, Result};
use crate::field::{FieldGeometry, FieldState};
use crate::vecmath::dot;

/// Relative tolerance for treating two distances as tied maxima.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximalDistancePair {
    pub t: f64,
    pub node: usize,
    pub x: Vec<f64>,
    pub on_boundary: bool,
    pub dist: f64,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfRecord {
    pub pair: MaximalDistancePair,
    pub hopf_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Invariant,
    Exited,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceVerdict {
    pub status: Status,
    pub first_exit_time: Option<f64>,
    pub worst_dist: f64,
    pub exit_threshold: f64,
    pub hopf_records: Vec<HopfRecord>,
    /// Whether every recorded pair at the global maximum distance lies on
    /// the boundary. `None` when nothing was recorded.
    pub global_max_pairs_on_boundary: Option<bool>,
    /// Whether any recorded boundary pair has a positive Hopf value.
    pub hopf_positive: bool,
    /// Largest observed `|s(t₂) − s(t₁)| / (t₂ − t₁)` between observations.
    pub max_s_rate: f64,
    pub observations: usize,
}

/// One line of the diagnostics CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub s: f64,
    pub x_argmax: Vec<f64>,
    pub on_boundary: bool,
    pub hopf_value: Option<f64>,
}

/// Result of [`max_distance`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceScan {
    pub s: f64,
    pub argmax: usize,
    pub lambda: Vec<f64>,
}

/// Exact maximum of `dist_W f` over nodes; ties go to the lowest node index.
pub fn max_distance(state: &FieldState, set: &ConvexSet) -> DistanceScan {
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..state.node_count() {
        let d = set.distance(state.node(i));
        if d > best.0 {
            best = (d, i);
        }
    }
    let lambda = set.project(state.node(best.1)).lambda;
    DistanceScan {
        s: best.0.max(0.0),
        argmax: best.1,
        lambda,
    }
}

/// `⟨λ(f), ∇_ν f⟩` at boundary node `node`, using the raw deviation.
pub fn hopf_functional(
    state: &FieldState,
    set: &ConvexSet,
    node: usize,
    geometry: &dyn FieldGeometry,
) -> Result<f64> {
    if !geometry.is_boundary(node) {
        return Err(Error::InteriorPoint(node));
    }
    let proj = set.project(state.node(node));
    if proj.dist <= 0.0 {
        return Err(Error::InsideSet(node));
    }
    let dnu = geometry.normal_derivative(state, node)?;
    Ok(dot(&proj.lambda, &dnu))
}

/// Streaming invariance monitor. Feed states in time order with
/// [`observe`](Monitor::observe), then call [`finish`](Monitor::finish).
pub struct Monitor<'a> {
    set: &'a ConvexSet,
    geometry: &'a dyn FieldGeometry,
    exit_threshold: f64,
    first_exit_time: Option<f64>,
    worst_dist: f64,
    hopf_records: Vec<HopfRecord>,
    last: Option<(f64, f64)>,
    max_s_rate: f64,
    observations: usize,
}

impl<'a> Monitor<'a> {
    pub fn new(set: &'a ConvexSet, geometry: &'a dyn FieldGeometry, exit_threshold: f64) -> Self {
        Self {
            set,
            geometry,
            exit_threshold,
            first_exit_time: None,
            worst_dist: 0.0,
            hopf_records: Vec::new(),
            last: None,
            max_s_rate: 0.0,
            observations: 0,
        }
    }

    pub fn observe(&mut self, state: &FieldState) -> Result<DiagnosticRecord> {
        let dists: Vec<f64> = (0..state.node_count())
            .map(|i| self.set.distance(state.node(i)))
            .collect();
        let (mut s, mut argmax) = (0.0, 0);
        for (i, &d) in dists.iter().enumerate() {
            if d > s {
                s = d;
                argmax = i;
            }
        }
        self.observations += 1;
        if let Some((t0, s0)) = self.last {
            if state.t > t0 {
                self.max_s_rate = self.max_s_rate.max((s - s0).abs() / (state.t - t0));
            }
        }
        self.last = Some((state.t, s));
        self.worst_dist = self.worst_dist.max(s);

        let mut hopf_at_argmax = None;
        if s > self.exit_threshold {
            self.first_exit_time.get_or_insert(state.t);
            for (i, &d) in dists.iter().enumerate() {
                if d < s * (1.0 - TIE_TOL) {
                    continue;
                }
                let on_boundary = self.geometry.is_boundary(i);
                let hopf_value = if on_boundary {
                    Some(hopf_functional(state, self.set, i, self.geometry)?)
                } else {
                    None
                };
                if i == argmax {
                    hopf_at_argmax = hopf_value;
                }
                self.hopf_records.push(HopfRecord {
                    pair: MaximalDistancePair {
                        t: state.t,
                        node: i,
                        x: self.geometry.position(i),
                        on_boundary,
                        dist: d,
                        lambda: self.set.project(state.node(i)).lambda,
                    },
                    hopf_value,
                });
            }
        }
        Ok(DiagnosticRecord {
            t: state.t,
            s,
            x_argmax: self.geometry.position(argmax),
            on_boundary: self.geometry.is_boundary(argmax),
            hopf_value: hopf_at_argmax,
        })
    }

    pub fn finish(self) -> InvarianceVerdict {
        let worst = self.worst_dist;
        let at_max: Vec<&HopfRecord> = self
            .hopf_records
            .iter()
            .filter(|r| r.pair.dist >= worst * (1.0 - TIE_TOL))
            .collect();
        let global_max_pairs_on_boundary =
            (!at_max.is_empty()).then(|| at_max.iter().all(|r| r.pair.on_boundary));
        let hopf_positive = self
            .hopf_records
            .iter()
            .any(|r| r.hopf_value.is_some_and(|h| h > 0.0));
        InvarianceVerdict {
            status: if worst > self.exit_threshold {
                Status::Exited
            } else {
                Status::Invariant
            },
            first_exit_time: self.first_exit_time,
            worst_dist: worst,
            exit_threshold: self.exit_threshold,
            hopf_records: self.hopf_records,
            global_max_pairs_on_boundary,
            hopf_positive,
            max_s_rate: self.max_s_rate,
            observations: self.observations,
        }
    }
}

/// Run a [`Monitor`] over an ordered sequence of states.
pub fn monitor<'s, I>(
    states: I,
    set: &ConvexSet,
    geometry: &dyn FieldGeometry,
    exit_threshold: f64,
) -> Result<(InvarianceVerdict, Vec<DiagnosticRecord>)>
where
    I: IntoIterator<Item = &'s FieldState>,
{
    let mut mon = Monitor::new(set, geometry, exit_threshold);
    let records = states
        .into_iter()
        .map(|s| mon.observe(s))
        .collect::<Result<Vec<_>>>()?;
    Ok((mon.finish(), records))
}

fn format_point(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Diagnostics CSV with columns `t,s,x_argmax,on_boundary,hopf_value`;
/// multi-dimensional positions are `;`-separated and missing Hopf values
/// are empty.
pub fn write_diagnostics_csv<W: Write>(out: W, records: &[DiagnosticRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "x_argmax", "on_boundary", "hopf_value"])?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.s.to_string(),
            format_point(&r.x_argmax),
            r.on_boundary.to_string(),
            r.hopf_value.map(|h| h.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Uniform 1-D grid on `[0, L]` with one-sided normal derivatives.
    struct Line {
        n: usize,
        h: f64,
    }

    impl FieldGeometry for Line {
        fn node_count(&self) -> usize {
            self.n + 1
        }
        fn position(&self, node: usize) -> Vec<f64> {
            vec![node as f64 * self.h]
        }
        fn is_boundary(&self, node: usize) -> bool {
            node == 0 || node == self.n
        }
        fn normal_derivative(&self, state: &FieldState, node: usize) -> Result<Vec<f64>> {
            let m = state.components();
            // (3 f_a − 4 f_b + f_c) / 2h is the outward derivative at either end.
            let (a, b, c) = if node == 0 {
                (0, 1, 2)
            } else {
                (self.n, self.n - 1, self.n - 2)
            };
            Ok((0..m)
                .map(|k| {
                    (3.0 * state.node(a)[k] - 4.0 * state.node(b)[k] + state.node(c)[k])
                        / (2.0 * self.h)
                })
                .collect())
        }
    }

    fn ball() -> ConvexSet {
        ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    fn profile(n: usize, length: f64, f: impl Fn(f64) -> [f64; 2]) -> (Line, FieldState) {
        let h = length / n as f64;
        let values = (0..=n).flat_map(|i| f(i as f64 * h)).collect();
        (Line { n, h }, FieldState::new(0.5, values, 2))
    }

    #[test]
    fn zero_field_has_zero_distance() {
        let (_, state) = profile(16, 1.0, |_| [0.0, 0.0]);
        assert_eq!(max_distance(&state, &ball()).s, 0.0);
    }

    #[test]
    fn monotone_profile_peaks_at_right_end() {
        let l = 2.0;
        let (grid, state) = profile(16, l, |x| [1.0 + x / l, 0.0]);
        let scan = max_distance(&state, &ball());
        assert_eq!(scan.s, 1.0);
        assert_eq!(scan.argmax, 16);
        assert_eq!(scan.lambda, vec![1.0, 0.0]);
        assert!(grid.is_boundary(scan.argmax));
    }

    #[test]
    fn hopf_of_linear_profile() {
        let l = 4.0;
        let (grid, state) = profile(32, l, |x| [1.0 + (l - x) / l, 0.0]);
        let h = hopf_functional(&state, &ball(), 0, &grid).unwrap();
        // λ = (1, 0), ∂_ν f = (1/L) e₁.
        assert!((h - 1.0 / l).abs() < 1e-12, "{h}");
    }

    #[test]
    fn hopf_of_constant_outside_is_zero() {
        let (grid, state) = profile(8, 1.0, |_| [3.0, 0.0]);
        assert_eq!(hopf_functional(&state, &ball(), 8, &grid).unwrap(), 0.0);
    }

    #[test]
    fn hopf_errors() {
        let (grid, state) = profile(8, 1.0, |_| [0.0, 0.0]);
        assert!(matches!(
            hopf_functional(&state, &ball(), 3, &grid),
            Err(Error::InteriorPoint(3))
        ));
        assert!(matches!(
            hopf_functional(&state, &ball(), 0, &grid),
            Err(Error::InsideSet(0))
        ));
    }

    #[test]
    fn monitor_inside_is_invariant() {
        let (grid, state) = profile(8, 1.0, |x| [0.5 * x, 0.0]);
        let (v, recs) = monitor([&state], &ball(), &grid, 1e-8).unwrap();
        assert_eq!(v.status, Status::Invariant);
        assert!(v.hopf_records.is_empty());
        assert_eq!(recs.len(), 1);
        assert_eq!(v.global_max_pairs_on_boundary, None);
    }

    #[test]
    fn monitor_records_tied_boundary_pairs() {
        let (grid, state) = profile(8, 1.0, |x| [2.0 + (x - 0.5).powi(2), 0.0]);
        let (v, recs) = monitor([&state], &ball(), &grid, 1e-8).unwrap();
        assert_eq!(v.status, Status::Exited);
        assert_eq!(v.first_exit_time, Some(0.5));
        assert_eq!(v.hopf_records.len(), 2);
        assert_eq!(v.global_max_pairs_on_boundary, Some(true));
        assert!(v.hopf_positive);
        assert_eq!(recs[0].x_argmax, vec![0.0]);
    }

    #[test]
    fn threshold_monotonicity() {
        let (grid, state) = profile(8, 1.0, |x| [1.0 + 1e-3 * x, 0.0]);
        for th in [1e-5, 1e-4, 1e-3, 1e-2] {
            let (low, _) = monitor([&state], &ball(), &grid, th).unwrap();
            let (high, _) = monitor([&state], &ball(), &grid, th * 10.0).unwrap();
            if low.status == Status::Invariant {
                assert_eq!(high.status, Status::Invariant);
            }
        }
    }

    #[test]
    fn csv_layout() {
        let recs = vec![
            DiagnosticRecord {
                t: 0.0,
                s: 0.0,
                x_argmax: vec![0.0],
                on_boundary: true,
                hopf_value: None,
            },
            DiagnosticRecord {
                t: 0.5,
                s: 1.5,
                x_argmax: vec![1.0, 2.0],
                on_boundary: false,
                hopf_value: Some(0.25),
            },
        ];
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &recs).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,s,x_argmax,on_boundary,hopf_value\n0,0,0,true,\n0.5,1.5,1;2,false,0.25\n"
        );
    }
}
