use super::*;
use crate::curves::FnCurve;
use crate::library::{
    circle, compact_quotient, horizontal_line, open_disk, reflection, rotation_plane, vertical_foliation, z2_reflection,
};

fn p(v: &[f64]) -> Point {
    DVector::from_row_slice(v)
}

fn spec(model: &GroupoidModel, x: &[f64], v: &[f64], span: (f64, f64)) -> GeodesicSpec {
    GeodesicSpec::new(model, p(x), p(v), span).unwrap()
}

#[test]
fn radial_shot_in_the_rotation_plane() {
    let m = rotation_plane();
    let c = shoot(&m, &spec(&m, &[1.0, 0.0], &[1.0, 0.0], (0.0, 2.0))).unwrap();
    assert!((c.point(2.0) - p(&[3.0, 0.0])).norm() < 1e-10);
    assert!((c.length().unwrap() - 2.0).abs() < 1e-8);
}

#[test]
fn tangential_initial_velocity_is_rejected() {
    let m = rotation_plane();
    let err = GeodesicSpec::new(&m, p(&[1.0, 0.0]), p(&[0.0, 1.0]), (0.0, 1.0)).unwrap_err();
    assert_eq!(err.name(), "NormalityLoss");
    let s = GeodesicSpec::projected(&m, p(&[1.0, 0.0]), p(&[1.0, 1.0]), (0.0, 1.0)).unwrap();
    assert!((s.velocity - p(&[1.0, 0.0])).norm() < 1e-12);
}

#[test]
fn shooting_out_of_the_disk_exits() {
    let m = open_disk();
    let err = shoot(&m, &spec(&m, &[0.5, 0.0], &[1.0, 0.0], (0.0, 1.0))).unwrap_err();
    assert!(matches!(err, GeoError::DomainExit { time } if (time - 0.5).abs() < 1e-6));
}

#[test]
fn vertical_foliation_shot_is_a_horizontal_line() {
    let m = vertical_foliation();
    let c = shoot(&m, &spec(&m, &[-1.0, 1.0], &[1.0, 0.0], (0.0, 2.0))).unwrap();
    for t in [0.3, 1.0, 1.7] {
        assert!((c.point(t) - p(&[t - 1.0, 1.0])).norm() < 1e-12);
    }
}

#[test]
fn exp_examples() {
    let m = rotation_plane();
    let y = stacky_exp(&m, &p(&[1.0, 0.0]), &p(&[0.5, 0.0])).unwrap();
    assert!((y.norm() - 1.5).abs() < 1e-10);
    let x = p(&[0.3, -0.2]);
    assert_eq!(stacky_exp(&m, &x, &p(&[0.0, 0.0])).unwrap(), x);
    let z = z2_reflection();
    let x = p(&[0.2, -0.4]);
    let v = p(&[0.3, 0.5]);
    let c = shoot(&z, &GeodesicSpec::new(&z, x.clone(), v.clone(), (0.0, 1.0)).unwrap()).unwrap();
    for s in [0.25, 0.5, 1.0] {
        let e = stacky_exp(&z, &x, &(&v * s)).unwrap();
        assert!((e - c.point(s)).norm() < 1e-8);
    }
}

#[test]
fn split_and_reglue_is_isomorphic() {
    let m = z2_reflection();
    let whole = shoot(&m, &spec(&m, &[-1.0, -0.5], &[1.0, 0.5], (0.0, 2.0))).unwrap();
    let left = whole.restrict(0.0, 1.2).unwrap();
    let right = whole.restrict(0.8, 2.0).unwrap();
    let glued = glue(&m, &left, &right, 1.0).unwrap();
    assert_eq!(glued.domain(), (0.0, 2.0));
    assert!(curves_isomorphic(&whole, &glued, ISOMORPHISM_SAMPLES, 1e-6).isomorphic);
    assert!((glued.length().unwrap() - whole.length().unwrap()).abs() < 1e-8);
}

#[test]
fn radial_branch_glues_to_its_reflection() {
    let m = z2_reflection();
    let up = shoot(&m, &spec(&m, &[0.0, -1.0], &[0.0, 1.0], (0.0, 1.0))).unwrap();
    let back = shoot(&m, &spec(&m, &[0.0, 0.0], &[0.0, -1.0], (1.0, 2.0))).unwrap();
    let glued = glue(&m, &up, &back, 1.0).unwrap();
    assert!(matches!(glued.transitions()[glued.transitions().len() - 2], Transition::Isometry(_)));
    assert!((glued.point(1.5) - p(&[0.0, -0.5])).norm() < 1e-8);
    assert!((glued.length().unwrap() - 2.0).abs() < 1e-8);
}

#[test]
fn mismatched_speeds_do_not_glue() {
    let m = z2_reflection();
    let a = shoot(&m, &spec(&m, &[0.0, -1.0], &[0.0, 1.0], (0.0, 1.0))).unwrap();
    let b = shoot(&m, &spec(&m, &[0.0, 0.0], &[0.0, 2.0], (1.0, 1.5))).unwrap();
    assert_eq!(glue(&m, &a, &b, 1.0).unwrap_err().name(), "IncompatibleJet");
}

#[test]
fn gauss_lemma_at_the_reflection_axis() {
    let m = z2_reflection();
    let g = OrbitGraph::build(&m, None).unwrap();
    let r = gauss_check(&g, &p(&[0.0, 0.0]), 0.3, 20, 7).unwrap();
    assert!(r.pass, "max relative error {}", r.max_relative_error);
}

#[test]
fn radial_geodesic_minimizes_but_crossing_the_axis_does_not() {
    let m = z2_reflection();
    let g = OrbitGraph::build(&m, None).unwrap();
    let c = shoot(&m, &spec(&m, &[0.0, -1.0], &[0.0, 1.0], (0.0, 2.0))).unwrap();
    assert!(is_minimizing_at(&g, &c, 0.5, Some(0.2)).unwrap().minimizing);
    assert!(is_minimizing_at(&g, &c, 1.0, Some(0.2)).unwrap().minimizing);
    let window = is_minimizing_on_window(&g, &c, 1.0, Some(0.2)).unwrap();
    assert!(!window.minimizing);
    assert!(g.distance(&c.point(0.9), &c.point(1.1)).unwrap().value < 1e-12);
}

#[test]
fn circle_arcs_are_not_minimizing() {
    let m = rotation_plane();
    let g = OrbitGraph::build(&m, None).unwrap();
    let orbit = StackyCurve::single(m.clone(), circle(1.0)).unwrap();
    assert!(!is_minimizing_at(&g, &orbit, 1.0, Some(0.3)).unwrap().minimizing);
    let z = z2_reflection();
    let gz = OrbitGraph::build(&z, None).unwrap();
    let tight = StackyCurve::single(z.clone(), circle(0.2)).unwrap();
    assert!(!is_minimizing_at(&gz, &tight, 1.0, Some(0.6)).unwrap().minimizing);
}

#[test]
fn stratum_labels_along_geodesics() {
    let m = z2_reflection();
    let cross = shoot(&m, &spec(&m, &[0.0, -1.0], &[0.0, 1.0], (0.0, 2.0))).unwrap();
    let trace = stratum_trace(&cross, &[0.5, 1.0, 1.5]);
    assert_eq!(trace[0].1.finite_order, 1);
    assert_eq!(trace[1].1.finite_order, 2);
    assert_eq!(trace[2].1.finite_order, 1);
    let inside = shoot(&m, &spec(&m, &[-1.0, 0.0], &[1.0, 0.0], (0.0, 2.0))).unwrap();
    assert!(stratum_trace(&inside, &[0.1, 1.0, 1.9]).iter().all(|(_, l)| l.finite_order == 2));
    let r = rotation_plane();
    let radial = shoot(&r, &spec(&r, &[0.0, 0.0], &[1.0, 0.0], (0.0, 2.0))).unwrap();
    let trace = stratum_trace(&radial, &[0.0, 0.5, 1.0, 2.0]);
    assert_eq!(trace[0].1.vanishing_generators, 1);
    assert!(trace[1..].iter().all(|(_, l)| *l == trace[1].1 && l.vanishing_generators == 0));
}

#[test]
fn uniqueness_holds_for_proper_models_but_not_for_two_origins() {
    let z = z2_reflection();
    let s = spec(&z, &[-0.5, 0.4], &[1.0, -0.3], (0.0, 1.0));
    let target = reflection().apply(&s.start);
    assert!(uniqueness_probe(&z, &s, &target).unwrap().isomorphic);
    let r = rotation_plane();
    let s = spec(&r, &[1.0, 0.0], &[1.0, 0.0], (0.0, 1.5));
    let target = translated_representative(&r, &s.start);
    assert!((target.norm() - 1.0).abs() < 1e-9 && (&target - &s.start).norm() > 1e-3);
    assert!(uniqueness_probe(&r, &s, &target).unwrap().isomorphic);
    let f = vertical_foliation();
    let s = spec(&f, &[-1.0, 1.0], &[1.0, 0.0], (0.0, 2.0));
    let report = uniqueness_probe(&f, &s, &p(&[-1.0, -1.0])).unwrap();
    assert!(!report.isomorphic);
    let a = StackyCurve::single(f.clone(), horizontal_line(1.0)).unwrap();
    assert!((shoot(&f, &s).unwrap().point(1.5) - a.point(1.5)).norm() < 1e-12);
    let t = GroupoidModel::trivial(r.patch().clone());
    let s = spec(&t, &[0.1, 0.2], &[0.3, 0.1], (0.0, 1.0));
    assert!(uniqueness_probe(&t, &s, &s.start.clone()).unwrap().isomorphic);
}

#[test]
fn realized_minimizers_have_the_quotient_length() {
    let r = rotation_plane();
    let g = OrbitGraph::build(&r, None).unwrap();
    let real = realize_minimizer(&g, &p(&[1.0, 0.0]), &p(&[0.0, 3.0]), 10_000).unwrap();
    assert!((real.length - 2.0).abs() <= 0.04, "length {}", real.length);
    let z = z2_reflection();
    let g = OrbitGraph::build(&z, None).unwrap();
    let real = realize_minimizer(&g, &p(&[-1.0, 1.0]), &p(&[1.0, 1.0]), 10_000).unwrap();
    assert!((real.length - 2.0).abs() <= 0.04, "length {}", real.length);
}

#[test]
fn completeness_verdicts() {
    let r = rotation_plane();
    let g = OrbitGraph::build(&r, None).unwrap();
    let specs = random_specs(&g, 4, 30.0, 3);
    let rep = completeness_probe(&g, &specs, 30.0, 3);
    assert!(rep.geodesically_complete && rep.cauchy_complete && rep.agree);

    let d = open_disk();
    let g = OrbitGraph::build(&d, None).unwrap();
    let specs = random_specs(&g, 4, 30.0, 3);
    let rep = completeness_probe(&g, &specs, 30.0, 3);
    assert!(!rep.geodesically_complete && !rep.cauchy_complete && rep.agree);
    assert_eq!(rep.exit_reason, Some(StopReason::DomainBoundary));
    assert!(rep.max_extension_time < 2.0);

    let c = compact_quotient();
    let g = OrbitGraph::build(&c, None).unwrap();
    let specs = random_specs(&g, 3, 20.0, 3);
    let rep = completeness_probe(&g, &specs, 20.0, 3);
    assert!(rep.geodesically_complete && rep.cauchy_complete && rep.agree, "{rep:?}");
}

#[test]
fn conformal_completion_slows_escape() {
    let d = open_disk();
    let g = OrbitGraph::build(&d, None).unwrap();
    let cc = conformal_completion(&g).unwrap();
    assert!(cc.min_radius > 0.0);
    let x = p(&[0.5, 0.0]);
    let before = escape_time(&d, &x, &p(&[1.0, 0.0]), 100.0);
    let v = p(&[1.0, 0.0]) / cc.factor(&x);
    let after = escape_time(&cc.model, &x, &v, 100.0);
    assert!((before - 0.5).abs() < 1e-6);
    assert!(after >= 2.0 * before, "escape {before} -> {after}");
    let curve: CurveRef = Arc::new(FnCurve::line(x.clone(), p(&[0.4, 0.1]), (0.0, 1.0), 0.0));
    assert!(curve.point(1.0).norm() < 1.0);
    let checks = cc.length_bound_check(&d, &[curve], 0.05).unwrap();
    assert!(checks[0].pass);
}

#[test]
fn conformal_completion_needs_a_proper_model() {
    let f = vertical_foliation();
    let g = OrbitGraph::build(&f, Some(0.1)).unwrap();
    assert_eq!(conformal_completion(&g).unwrap_err().name(), "EstimationFailed");
}
