mod common;

use common::random_polygon;
use invariant_flow::convex::Shape;
use invariant_flow::tangency::{
    check_tangency, tangency_margin_along_trajectory, TangencyConfig, TrajectoryPoint,
};
use invariant_flow::{ConvexSet, ReactionTerm};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `φ(v) = −α (v − c) + β J (v − c)`, a contraction towards `c` with swirl.
fn swirl(alpha: f64, beta: f64, c: [f64; 2]) -> ReactionTerm {
    ReactionTerm::new(2, move |_, _, v, out| {
        let (dx, dy) = (v[0] - c[0], v[1] - c[1]);
        out[0] = -alpha * dx - beta * dy;
        out[1] = -alpha * dy + beta * dx;
    })
}

fn config() -> TangencyConfig {
    TangencyConfig {
        boundary_density: 64,
        random_points: 0,
        ..TangencyConfig::default()
    }
}

fn half_spaces(set: &ConvexSet) -> (Vec<Vec<f64>>, Vec<f64>) {
    match set.shape() {
        Shape::Polytope { normals, offsets } => (normals.clone(), offsets.clone()),
        Shape::Box { lo, hi } => (
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![hi[0], -lo[0], hi[1], -lo[1]],
        ),
        Shape::Ball { .. } => unreachable!(),
    }
}

fn faceted() -> impl Strategy<Value = ConvexSet> {
    prop_oneof![
        (-2.0..-0.2f64, -2.0..-0.2f64, 0.2..2.0f64, 0.2..2.0f64)
            .prop_map(|(a, b, c, d)| ConvexSet::cuboid(vec![a, b], vec![c, d]).unwrap()),
        (4usize..=8)
            .prop_flat_map(|k| (
                Just(k),
                prop::collection::vec(-1.0..1.0f64, k),
                prop::collection::vec(0.5..1.5f64, k)
            ))
            .prop_map(|(k, j, o)| {
                let (n, b) = random_polygon(k, &j, &o);
                ConvexSet::polytope(n, b).unwrap()
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn face_checks_cover_the_normal_cone(
        set in faceted(),
        alpha in 0.0..2.0f64,
        beta in -1.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let phi = swirl(alpha, beta, [0.0, 0.0]);
        let report = check_tangency(&phi, &set, &[0.0], &[vec![0.0]], &config()).unwrap();
        prop_assume!(report.certified);
        let (normals, offsets) = half_spaces(&set);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            let far = [10.0 * a.cos(), 10.0 * a.sin()];
            let omega = set.project(&far).omega;
            let active: Vec<&Vec<f64>> = normals
                .iter()
                .zip(&offsets)
                .filter(|(n, b)| n[0] * omega[0] + n[1] * omega[1] >= *b - 1e-8)
                .map(|(n, _)| n)
                .collect();
            prop_assert!(!active.is_empty());
            let weights: Vec<f64> = active.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut lam = [0.0, 0.0];
            for (n, w) in active.iter().zip(&weights) {
                lam[0] += w * n[0];
                lam[1] += w * n[1];
            }
            let len = (lam[0] * lam[0] + lam[1] * lam[1]).sqrt();
            prop_assume!(len > 1e-9);
            let f = phi.eval(0.0, &[0.0], &omega);
            let margin = (lam[0] * f[0] + lam[1] * f[1]) / len;
            prop_assert!(margin <= 1e-9, "{margin}");
        }
    }

    #[test]
    fn larger_tolerance_never_refutes(
        set in faceted(),
        alpha in -0.5..1.0f64,
        beta in -1.0..1.0f64,
        tol in 0.0..0.1f64,
        extra in 0.0..0.1f64,
    ) {
        let phi = swirl(alpha, beta, [0.1, -0.1]);
        let mut cfg = config();
        cfg.margin_tol = tol;
        let tight = check_tangency(&phi, &set, &[0.0], &[vec![0.0]], &cfg).unwrap();
        cfg.margin_tol = tol + extra;
        let loose = check_tangency(&phi, &set, &[0.0], &[vec![0.0]], &cfg).unwrap();
        prop_assert!(!tight.certified || loose.certified);
        prop_assert_eq!(tight.worst_margin, loose.worst_margin);
    }
}

fn circumscribed_64gon() -> ConvexSet {
    let normals = (0..64)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 64.0;
            vec![a.cos(), a.sin()]
        })
        .collect();
    ConvexSet::polytope(normals, vec![1.0; 64]).unwrap()
}

#[test]
fn ball_and_polygon_agree() {
    let ball = ConvexSet::ball(vec![0.0, 0.0], 1.0).unwrap();
    let poly = circumscribed_64gon();
    for rate in [-1.0, 1.0] {
        let phi = ReactionTerm::linear(2, rate);
        let a = check_tangency(&phi, &ball, &[0.0], &[vec![0.0]], &TangencyConfig::default()).unwrap();
        let b = check_tangency(&phi, &poly, &[0.0], &[vec![0.0]], &TangencyConfig::default()).unwrap();
        assert_eq!(a.certified, b.certified, "rate {rate}");
        assert_eq!(a.certified, rate < 0.0);
    }
}

/// FitzHugh–Nagumo kinetics written out independently of the crate.
fn fhn(u: f64, w: f64) -> [f64; 2] {
    let (a, b, eps) = (0.7, 0.8, 0.08);
    [u - u * u * u / 3.0 - w, eps * (u + a - b * w)]
}

#[test]
fn fhn_margin_on_face_adjacent_grid() {
    let phi = ReactionTerm::fitzhugh_nagumo(0.7, 0.8, 0.08, 0.0);
    let rect = ConvexSet::cuboid(vec![-3.0, -5.0], vec![3.0, 5.0]).unwrap();
    let delta = 1e-3;
    let mut points = Vec::new();
    let mut oracle = f64::NEG_INFINITY;
    for k in 0..=200 {
        let s = k as f64 / 200.0;
        let w = -5.0 + 10.0 * s;
        let u = -3.0 + 6.0 * s;
        for (value, omega, lam) in [
            ([3.0 + delta, w], [3.0, w], [1.0, 0.0]),
            ([-3.0 - delta, w], [-3.0, w], [-1.0, 0.0]),
            ([u, 5.0 + delta], [u, 5.0], [0.0, 1.0]),
            ([u, -5.0 - delta], [u, -5.0], [0.0, -1.0]),
        ] {
            let f = fhn(omega[0], omega[1]);
            oracle = oracle.max(lam[0] * f[0] + lam[1] * f[1]);
            points.push(TrajectoryPoint {
                t: 0.0,
                x: vec![0.0],
                value: value.to_vec(),
            });
        }
    }
    let margin = tangency_margin_along_trajectory(&phi, &rect, &points).unwrap().unwrap();
    assert!(margin <= 0.0);
    assert!((margin - oracle).abs() <= 1e-12, "{margin} vs {oracle}");
    assert!((oracle + 0.024).abs() <= 1e-12);

    let report = check_tangency(&phi, &rect, &[0.0], &[vec![0.0]], &TangencyConfig::default()).unwrap();
    assert!(report.certified);
    assert!((report.worst_margin + 0.024).abs() <= 1e-12, "{}", report.worst_margin);
}

#[test]
fn fhn_larger_rectangle_still_certified_smaller_refuted() {
    let phi = ReactionTerm::fitzhugh_nagumo(0.7, 0.8, 0.08, 0.0);
    let cfg = TangencyConfig::default();
    let big = ConvexSet::cuboid(vec![-4.0, -10.0], vec![4.0, 10.0]).unwrap();
    assert!(check_tangency(&phi, &big, &[0.0], &[vec![0.0]], &cfg).unwrap().certified);
    let small = ConvexSet::cuboid(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let r = check_tangency(&phi, &small, &[0.0], &[vec![0.0]], &cfg).unwrap();
    assert!(!r.certified);
    assert!(r.worst_witness.is_some());
}
