//! Stock presentations and curves used by the tests, the acceptance suite and
//! the command line tool.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::curves::{CurveRef, FnCurve};
use crate::geometry::{ManifoldPatch, Point};
use crate::groupoid::{AffineMap, FoliationChart, GroupoidModel, SubmersionData};
use crate::region::Region;

fn p(v: &[f64]) -> Point {
    DVector::from_row_slice(v)
}

fn square(l: f64) -> (Point, Point) {
    (p(&[-l, -l]), p(&[l, l]))
}

fn rotation_generator() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

/// Reflection `(x, y) ↦ (x, -y)`.
pub fn reflection() -> AffineMap {
    AffineMap::linear(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]))
}

/// Euclidean plane under rotations about the origin; the quotient is the ray `[0, ∞)`.
pub fn rotation_plane() -> GroupoidModel {
    GroupoidModel::action(
        "rotation",
        ManifoldPatch::euclidean(Region::All, square(4.0)),
        &[],
        vec![rotation_generator()],
    )
    .expect("rotation model")
}

/// Euclidean plane under reflection in the horizontal axis.
pub fn z2_reflection() -> GroupoidModel {
    GroupoidModel::action(
        "z2_reflection",
        ManifoldPatch::euclidean(Region::All, square(2.0)),
        &[reflection()],
        vec![],
    )
    .expect("reflection model")
}

/// Vertical lines in the punctured plane, presented by two charts that each
/// remove one half of the vertical axis. The leaf space is the line with two
/// origins.
pub fn vertical_foliation() -> GroupoidModel {
    let chart = |dir: f64| FoliationChart {
        region: Region::Ray {
            origin: vec![0.0, 0.0],
            direction: vec![0.0, dir],
        }
        .complement(),
        a: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        b: DVector::zeros(1),
        transverse_metric: DMatrix::identity(1, 1),
    };
    let patch = ManifoldPatch::euclidean(Region::Point { at: vec![0.0, 0.0] }.complement(), square(3.0));
    GroupoidModel::foliation(
        "vertical_foliation",
        patch,
        vec![chart(-1.0), chart(1.0)],
        vec![((1, 0), AffineMap::identity(1))],
        false,
    )
    .expect("foliation model")
}

/// Plane fibred by vertical lines through the first coordinate.
pub fn coordinate_submersion() -> GroupoidModel {
    let data = SubmersionData::new(
        Arc::new(|x: &Point| DVector::from_row_slice(&[x[0]])),
        Some(Arc::new(|_x: &Point| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))),
        1,
        false,
    );
    GroupoidModel::submersion("coordinate_submersion", ManifoldPatch::euclidean(Region::All, square(2.0)), data)
        .expect("submersion model")
}

pub const ANNULUS_INNER: f64 = 1.0;
pub const ANNULUS_OUTER: f64 = 2.0;

fn annulus_region() -> Region {
    Region::Annulus {
        center: vec![0.0, 0.0],
        inner: ANNULUS_INNER,
        outer: ANNULUS_OUTER,
    }
}

/// Flat annulus under rotations.
pub fn annulus_rotation() -> GroupoidModel {
    GroupoidModel::action(
        "annulus_rotation",
        ManifoldPatch::euclidean(annulus_region(), square(ANNULUS_OUTER)),
        &[],
        vec![rotation_generator()],
    )
    .expect("annulus rotation model")
}

/// Flat annulus fibred by the radius map; same quotient as [`annulus_rotation`].
pub fn annulus_radius() -> GroupoidModel {
    let data = SubmersionData::new(
        Arc::new(|x: &Point| DVector::from_row_slice(&[x.norm()])),
        Some(Arc::new(|x: &Point| {
            let r = x.norm();
            DMatrix::from_row_slice(1, 2, &[x[0] / r, x[1] / r])
        })),
        1,
        false,
    );
    GroupoidModel::submersion(
        "annulus_radius",
        ManifoldPatch::euclidean(annulus_region(), square(ANNULUS_OUTER)),
        data,
    )
    .expect("annulus radius model")
}

/// Open unit disk with the unit groupoid (incomplete quotient).
pub fn open_disk() -> GroupoidModel {
    GroupoidModel::trivial(
        ManifoldPatch::euclidean(
            Region::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            square(1.0),
        )
        .with_name("open_disk"),
    )
}

/// Annulus with metric `n nᵀ + r⁻² (I − n nᵀ)` (the flat cylinder
/// `dr² + dθ²`) fibred by the angle map `x ↦ x/|x|`. The quotient is a circle
/// of length `2π`, compact although the annulus is not.
pub fn compact_quotient() -> GroupoidModel {
    let metric = Arc::new(|x: &Point| {
        let r2 = x.norm_squared();
        let nn = x * x.transpose() / r2;
        &nn + (DMatrix::identity(2, 2) - &nn) / r2
    });
    let patch = ManifoldPatch::new("cylinder", annulus_region(), square(ANNULUS_OUTER), metric);
    let data = SubmersionData::new(
        Arc::new(|x: &Point| x / x.norm()),
        Some(Arc::new(|x: &Point| {
            let r = x.norm();
            (DMatrix::identity(2, 2) - x * x.transpose() / (r * r)) / r
        })),
        2,
        true,
    );
    GroupoidModel::submersion("compact_quotient", patch, data).expect("compact quotient model")
}

/// Round sphere of radius 1 in stereographic coordinates under rotations about the polar axis.
pub fn sphere_rotation() -> GroupoidModel {
    GroupoidModel::action(
        "sphere_rotation",
        ManifoldPatch::sphere_stereographic(1.0, Region::All, square(3.0)),
        &[],
        vec![rotation_generator()],
    )
    .expect("sphere model")
}

/// Names accepted by [`model_by_name`].
pub const MODEL_NAMES: [&str; 9] = [
    "rotation",
    "z2_reflection",
    "vertical_foliation",
    "coordinate_submersion",
    "annulus_rotation",
    "annulus_radius",
    "open_disk",
    "compact_quotient",
    "sphere_rotation",
];

pub fn model_by_name(name: &str) -> Option<GroupoidModel> {
    Some(match name {
        "rotation" => rotation_plane(),
        "z2_reflection" => z2_reflection(),
        "vertical_foliation" => vertical_foliation(),
        "coordinate_submersion" => coordinate_submersion(),
        "annulus_rotation" => annulus_rotation(),
        "annulus_radius" => annulus_radius(),
        "open_disk" => open_disk(),
        "compact_quotient" => compact_quotient(),
        "sphere_rotation" => sphere_rotation(),
        _ => return None,
    })
}

/// `t ↦ (t, t²)` on `[-1, 1]`.
pub fn parabola() -> CurveRef {
    Arc::new(FnCurve::new(
        "parabola",
        (-1.0, 1.0),
        Arc::new(|t| p(&[t, t * t])),
        Some(Arc::new(|t| p(&[1.0, 2.0 * t]))),
    ))
}

/// Flat branches `(t, e^{1/t})` for `t < 0` and `(t, ±e^{-1/t})` for `t > 0`
/// on `[-1, 1]`; they agree in the reflection quotient pointwise but are not
/// related by a continuous family of arrows.
pub fn flat_branch(sign: f64) -> CurveRef {
    let y = move |t: f64| {
        if t < 0.0 {
            (1.0 / t).exp()
        } else if t > 0.0 {
            sign * (-1.0 / t).exp()
        } else {
            0.0
        }
    };
    let dy = move |t: f64| {
        if t < 0.0 {
            -(1.0 / t).exp() / (t * t)
        } else if t > 0.0 {
            sign * (-1.0 / t).exp() / (t * t)
        } else {
            0.0
        }
    };
    Arc::new(FnCurve::new(
        if sign > 0.0 { "flat_branch_plus" } else { "flat_branch_minus" },
        (-1.0, 1.0),
        Arc::new(move |t| p(&[t, y(t)])),
        Some(Arc::new(move |t| p(&[1.0, dy(t)]))),
    ))
}

/// Horizontal line `t ↦ (t − 1, height)` on `[0, 2]`.
pub fn horizontal_line(height: f64) -> CurveRef {
    Arc::new(FnCurve::line(p(&[-1.0, height]), p(&[1.0, 0.0]), (0.0, 2.0), 0.0))
}

/// Circle of the given radius about the origin, once around on `[0, 2π]`.
pub fn circle(radius: f64) -> CurveRef {
    Arc::new(FnCurve::new(
        "circle",
        (0.0, 2.0 * PI),
        Arc::new(move |t: f64| p(&[radius * t.cos(), radius * t.sin()])),
        Some(Arc::new(move |t: f64| p(&[-radius * t.sin(), radius * t.cos()]))),
    ))
}
