use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DVector;
use proptest::prelude::*;

use stacky_core::curves::{CurveRef, FnCurve, StackyCurve};
use stacky_core::geometry::{exp_point, geodesic_flow, GeodesicState, ManifoldPatch, DEFAULT_STEP};
use stacky_core::groupoid::GroupoidModel;
use stacky_core::library;
use stacky_core::quotient::OrbitGraph;
use stacky_core::{Point, Region};

fn p(v: &[f64]) -> Point {
    DVector::from_row_slice(v)
}

fn polar(r: f64, a: f64) -> Point {
    p(&[r * a.cos(), r * a.sin()])
}

/// Proper models with a radius range where sampled points are interior.
fn models() -> Vec<(GroupoidModel, (f64, f64))> {
    vec![
        (library::rotation_plane(), (0.0, 3.5)),
        (library::z2_reflection(), (0.0, 1.8)),
        (library::coordinate_submersion(), (0.0, 1.8)),
        (library::annulus_rotation(), (1.05, 1.95)),
        (library::annulus_radius(), (1.05, 1.95)),
        (library::compact_quotient(), (1.05, 1.95)),
        (library::sphere_rotation(), (0.0, 2.5)),
    ]
}

fn model_point() -> impl Strategy<Value = (usize, Point, DVector<f64>)> {
    (0..7usize, 0.0..1.0f64, 0.0..2.0 * PI, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(k, s, a, v0, v1)| {
        let (_, (lo, hi)) = models().swap_remove(k);
        (k, polar(lo + s * (hi - lo), a), p(&[v0, v1]))
    })
}

fn parabola_curve() -> StackyCurve {
    StackyCurve::single(library::rotation_plane(), library::parabola()).unwrap()
}

fn sphere() -> ManifoldPatch {
    ManifoldPatch::sphere_stereographic(
        1.0,
        Region::Ball {
            center: vec![0.0, 0.0],
            radius: 2.0,
        },
        (p(&[-2.0, -2.0]), p(&[2.0, 2.0])),
    )
}

fn polar_patch() -> ManifoldPatch {
    ManifoldPatch::polar(
        Region::Box {
            lo: vec![0.5, -10.0],
            hi: vec![3.0, 10.0],
        },
        (p(&[0.5, -10.0]), p(&[3.0, 10.0])),
    )
}

fn rotation_graph() -> &'static OrbitGraph {
    static G: OnceLock<OrbitGraph> = OnceLock::new();
    G.get_or_init(|| OrbitGraph::build(&library::rotation_plane(), None).unwrap())
}

fn z2_graph() -> &'static OrbitGraph {
    static G: OnceLock<OrbitGraph> = OnceLock::new();
    G.get_or_init(|| OrbitGraph::build(&library::z2_reflection(), None).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normal_projection_is_an_orthogonal_projector((k, x, v) in model_point(), w0 in -1.0..1.0f64, w1 in -1.0..1.0f64) {
        let (m, _) = models().swap_remove(k);
        let patch = m.patch();
        let w = p(&[w0, w1]);
        let pv = m.normal_project(&x, &v).unwrap();
        let ppv = m.normal_project(&x, &pv).unwrap();
        prop_assert!((&ppv - &pv).norm() <= 1e-10 * (1.0 + v.norm()));
        let pw = m.normal_project(&x, &w).unwrap();
        let lhs = patch.inner(&x, &pv, &w);
        let rhs = patch.inner(&x, &v, &pw);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + v.norm() * w.norm()));
        prop_assert!(patch.norm(&x, &pv) <= patch.norm(&x, &v) + 1e-10);
    }

    #[test]
    fn projection_keeps_exactly_the_normal_vectors((k, x, v) in model_point()) {
        let (m, _) = models().swap_remove(k);
        let patch = m.patch();
        let mut normal = v.clone();
        for e in m.orthonormal_orbit_basis(&x) {
            normal -= &e * patch.inner(&x, &e, &v);
        }
        let pn = m.normal_project(&x, &normal).unwrap();
        prop_assert!((patch.norm(&x, &pn) - patch.norm(&x, &normal)).abs() <= 1e-10 * (1.0 + v.norm()));
    }

    #[test]
    fn arrows_act_isometrically_on_normal_vectors(r in 0.2..3.5f64, a in 0.0..2.0 * PI, b in 0.0..2.0 * PI, v0 in -1.0..1.0f64, v1 in -1.0..1.0f64) {
        let m = library::rotation_plane();
        let x = polar(r, a);
        let y = polar(r, b);
        let arrow = m.arrow_between(&x, &y, 1e-9).expect("same circle");
        let vn = m.normal_project(&x, &p(&[v0, v1])).unwrap();
        let moved = m.apply_arrow_differential(&arrow, &x, &vn).unwrap();
        let before = m.normal_norm(&x, &vn).unwrap();
        let after = m.normal_norm(&y, &moved).unwrap();
        prop_assert!((before - after).abs() <= 1e-8 * (1.0 + before));

        let z = library::z2_reflection();
        let x = p(&[v0, 0.3 + r / 4.0]);
        let y = p(&[v0, -0.3 - r / 4.0]);
        let arrow = z.arrow_between(&x, &y, 1e-9).expect("mirror images");
        let w = p(&[a.cos(), b.sin()]);
        let moved = z.apply_arrow_differential(&arrow, &x, &w).unwrap();
        prop_assert!((z.normal_norm(&x, &w).unwrap() - z.normal_norm(&y, &moved).unwrap()).abs() <= 1e-8);
    }

    #[test]
    fn same_orbit_is_reflexive_and_symmetric((k, x, v) in model_point(), a in 0.0..2.0 * PI) {
        let (m, _) = models().swap_remove(k);
        prop_assert!(m.same_orbit(&x, &x, 1e-9));
        let y = &x + v * 0.1;
        if m.contains(&y) {
            prop_assert_eq!(m.same_orbit(&x, &y, 1e-9), m.same_orbit(&y, &x, 1e-9));
        }
        let rot = library::rotation_plane();
        let z = polar(x.norm(), a);
        prop_assert!(rot.same_orbit(&x, &z, 1e-9) && rot.same_orbit(&z, &x, 1e-9));
    }

    #[test]
    fn length_is_additive(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64) {
        let mut t = [a, b, c];
        t.sort_by(f64::total_cmp);
        let curve = parabola_curve();
        let whole = curve.length_between(t[0], t[2]).unwrap();
        let parts = curve.length_between(t[0], t[1]).unwrap() + curve.length_between(t[1], t[2]).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-8);
    }

    #[test]
    fn length_ignores_monotone_reparametrization(k in -0.45..0.45f64) {
        let curve = parabola_curve();
        // φ(s) = s + k s (1 − s²) maps [−1, 1] onto itself with φ' ≥ 1 − 2|k| > 0
        let phi = Arc::new(move |s: f64| (s + k * s * (1.0 - s * s), 1.0 + k * (1.0 - 3.0 * s * s)));
        let phi_fwd = phi.clone();
        let inverse = Arc::new(move |t: f64| {
            let (mut lo, mut hi) = (-1.0, 1.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if phi_fwd(mid).0 < t { lo = mid } else { hi = mid }
            }
            0.5 * (lo + hi)
        });
        let re = curve.reparametrize((-1.0, 1.0), phi, inverse).unwrap();
        prop_assert!((re.length().unwrap() - curve.length().unwrap()).abs() <= 1e-6);
    }

    #[test]
    fn refinement_preserves_length(pieces in 1usize..6) {
        for curve in [parabola_curve(), StackyCurve::single(library::z2_reflection(), library::circle(1.0)).unwrap()] {
            let refined = curve.refine(pieces).unwrap();
            prop_assert!((refined.length().unwrap() - curve.length().unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn normal_speed_is_bounded_by_ambient_speed(k in 0..7usize, t in 0.0..1.0f64, which in 0..3usize) {
        let (m, (lo, hi)) = models().swap_remove(k);
        let r = 0.5 * (lo + hi);
        let curve: CurveRef = match which {
            0 => library::circle(r),
            1 => Arc::new(FnCurve::line(p(&[lo + 0.01 * (hi - lo), 0.1]), p(&[0.9 * (hi - lo), 0.0]), (0.0, 1.0), 0.0)),
            _ => Arc::new(FnCurve::new(
                "spiral",
                (0.0, 1.0),
                Arc::new(move |t: f64| polar(lo + (0.2 + 0.6 * t) * (hi - lo), 3.0 * t)),
                None,
            )),
        };
        let c = StackyCurve::single(m, curve).unwrap();
        let (a, b) = c.domain();
        let s = a + t * (b - a);
        let n = c.normal_speed(s).unwrap();
        prop_assert!(n >= 0.0);
        prop_assert!(n <= c.ambient_speed(s) * (1.0 + 1e-12) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn geodesic_flow_conserves_speed(r in 0.0..0.9f64, a in 0.0..2.0 * PI, b in 0.0..2.0 * PI, s in 0.1..1.0f64) {
        let patch = sphere();
        let x = polar(r, a);
        let v = polar(s, b);
        let traj = geodesic_flow(&patch, &GeodesicState::new(x.clone(), v.clone(), 0.0), 1.0, DEFAULT_STEP).unwrap();
        let s0 = patch.norm(&x, &v);
        let drift = traj
            .states
            .iter()
            .map(|st| (patch.norm(&st.position, &st.velocity) - s0).abs())
            .fold(0.0, f64::max);
        prop_assert!(drift <= 1e-6 * 2.0, "drift {drift}");
    }

    #[test]
    fn christoffel_symbols_are_symmetric_and_match_differences(u in 0.0..1.0f64, a in -PI..PI) {
        for (patch, x) in [(sphere(), polar(1.8 * u, a)), (polar_patch(), p(&[0.6 + 2.3 * u, a]))] {
            let exact = patch.christoffel_at(&x).unwrap();
            let fd = patch.christoffel_fd(&x);
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        prop_assert_eq!(exact.get(k, i, j), exact.get(k, j, i));
                        prop_assert!((exact.get(k, i, j) - fd.get(k, i, j)).abs() <= 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn exp_follows_the_flow(r in 0.0..0.8f64, a in 0.0..2.0 * PI, b in 0.0..2.0 * PI, s in 0.0..1.0f64) {
        let patch = sphere();
        let x = polar(r, a);
        let v = polar(0.5, b);
        let traj = geodesic_flow(&patch, &GeodesicState::new(x.clone(), v.clone(), 0.0), s, DEFAULT_STEP).unwrap();
        let end = exp_point(&patch, &x, &(&v * s)).unwrap();
        prop_assert!((&end - &traj.last().position).norm() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pseudo_distance_is_symmetric_and_subadditive(
        r in proptest::array::uniform3(0.2..3.4f64),
        a in proptest::array::uniform3(0.0..2.0 * PI),
    ) {
        let g = rotation_graph();
        let tol = 2.0 * g.resolution();
        let pts: Vec<Point> = (0..3).map(|i| polar(r[i], a[i])).collect();
        let d = |i: usize, j: usize| g.distance(&pts[i], &pts[j]).unwrap().value;
        prop_assert!((d(0, 1) - d(1, 0)).abs() <= tol);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + tol);
        prop_assert!(d(0, 1) <= (&pts[0] - &pts[1]).norm() + tol);
    }

    #[test]
    fn pseudo_distance_vanishes_on_orbits(x0 in -1.8..1.8f64, y0 in 0.05..1.8f64, r in 0.2..3.4f64, a in 0.0..2.0 * PI, b in 0.0..2.0 * PI) {
        let z = z2_graph();
        prop_assert_eq!(z.distance(&p(&[x0, y0]), &p(&[x0, -y0])).unwrap().value, 0.0);
        let g = rotation_graph();
        prop_assert!(g.distance(&polar(r, a), &polar(r, b)).unwrap().value <= 1e-12);
    }
}
