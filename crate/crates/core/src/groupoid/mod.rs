//! Groupoid presentations of quotient spaces: isometric actions, submersion
//! groupoids, foliation atlases and orbifold chart systems. Each supplies
//! orbit tangents, orbit membership, arrows and their transport along curves.

mod action;
mod affine;
mod foliation;
mod orbifold;
mod submersion;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use action::{ActionData, ElementFit, Generator};
pub use affine::{close_group, AffineMap};
pub use foliation::{FoliationChart, FoliationData, LeafPath, MAX_CHART_HOPS};
pub use orbifold::{ChartEmbedding, OrbifoldChart, OrbifoldData, OrbitImage};
pub use submersion::{horizontal_lift, kernel_basis, JacobianFn, ProjectionFn, SubmersionData};

use crate::curves::{Curve, CurveRef, HermiteCurve, MappedCurve};
use crate::error::{GeoError, Result};
use crate::geometry::{ManifoldPatch, Point};

/// Orbit-tangent vectors with η-norm below this are treated as zero.
pub const ORBIT_VECTOR_TOL: f64 = 1e-12;
/// Source matching tolerance for arrow application.
pub const SOURCE_TOL: f64 = 1e-8;
/// Step used when integrating arrow lifts.
pub const LIFT_STEP: f64 = 1e-3;

#[derive(Debug, Clone)]
pub enum ModelKind {
    Action(ActionData),
    Submersion(SubmersionData),
    Foliation(FoliationData),
    Orbifold(OrbifoldData),
}

struct ModelInner {
    name: String,
    patch: ManifoldPatch,
    kind: ModelKind,
}

/// A groupoid presentation over a metric patch. Cheap to clone.
#[derive(Clone)]
pub struct GroupoidModel {
    inner: Arc<ModelInner>,
}

impl fmt::Debug for GroupoidModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupoidModel")
            .field("name", &self.inner.name)
            .field("variant", &self.variant_name())
            .field("patch", &self.inner.patch)
            .finish()
    }
}

/// An arrow of the groupoid.
#[derive(Debug, Clone, PartialEq)]
pub enum Arrow {
    /// Group element or composed local isometry (action and orbifold models).
    Isometry { map: AffineMap, source: Point },
    /// Pair of points in one fiber (submersion models).
    Fiber { source: Point, target: Point },
    /// Holonomy along a chain of foliation charts.
    Holonomy {
        charts: Vec<usize>,
        source: Point,
        target: Point,
    },
}

impl Arrow {
    pub fn source(&self) -> &Point {
        match self {
            Arrow::Isometry { source, .. } | Arrow::Fiber { source, .. } | Arrow::Holonomy { source, .. } => source,
        }
    }

    pub fn target(&self) -> Point {
        match self {
            Arrow::Isometry { map, source } => map.apply(source),
            Arrow::Fiber { target, .. } | Arrow::Holonomy { target, .. } => target.clone(),
        }
    }

    pub fn inverse(&self) -> Result<Arrow> {
        Ok(match self {
            Arrow::Isometry { map, source } => Arrow::Isometry {
                map: map.inverse()?,
                source: map.apply(source),
            },
            Arrow::Fiber { source, target } => Arrow::Fiber {
                source: target.clone(),
                target: source.clone(),
            },
            Arrow::Holonomy { charts, source, target } => Arrow::Holonomy {
                charts: charts.iter().rev().copied().collect(),
                source: target.clone(),
                target: source.clone(),
            },
        })
    }

    /// `second ∘ self`; the target of `self` must be the source of `second`.
    pub fn then(&self, second: &Arrow) -> Result<Arrow> {
        let mid = self.target();
        if (&mid - second.source()).norm() > SOURCE_TOL * (1.0 + mid.norm()) {
            return Err(GeoError::SourceMismatch {
                source_point: second.source().iter().copied().collect(),
                point: mid.iter().copied().collect(),
            });
        }
        Ok(match (self, second) {
            (Arrow::Isometry { map: a, source }, Arrow::Isometry { map: b, .. }) => Arrow::Isometry {
                map: b.compose(a),
                source: source.clone(),
            },
            (Arrow::Fiber { source, .. }, Arrow::Fiber { target, .. }) => Arrow::Fiber {
                source: source.clone(),
                target: target.clone(),
            },
            (
                Arrow::Holonomy { charts: c1, source, .. },
                Arrow::Holonomy { charts: c2, target, .. },
            ) => {
                let mut charts = c1.clone();
                charts.extend(c2.iter().skip(usize::from(c1.last() == c2.first())));
                Arrow::Holonomy {
                    charts,
                    source: source.clone(),
                    target: target.clone(),
                }
            }
            _ => return Err(GeoError::InvalidModel("cannot compose arrows of different kinds".into())),
        })
    }
}

/// Isotropy type used to label strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IsotropyLabel {
    /// Number of finite (or local) isometries fixing the point.
    pub finite_order: usize,
    /// Number of rotation generators vanishing at the point.
    pub vanishing_generators: usize,
}

/// Closed-form orbit invariants, used to find orbit-related sample points.
#[derive(Debug, Clone, PartialEq)]
pub enum Invariants {
    None,
    Global(DVector<f64>),
    PerChart(Vec<(usize, DVector<f64>)>),
}

/// Arrow-valued curve produced by lifting an arrow along a base curve.
#[derive(Debug, Clone)]
pub enum ArrowCurve {
    /// The group part stays constant.
    Constant { map: AffineMap },
    /// Target transported by horizontal lifting.
    Moving {
        charts: Option<Vec<usize>>,
        targets: Arc<HermiteCurve>,
    },
}

impl ArrowCurve {
    pub fn arrow_at(&self, t: f64, source: &Point) -> Arrow {
        match self {
            ArrowCurve::Constant { map } => Arrow::Isometry {
                map: map.clone(),
                source: source.clone(),
            },
            ArrowCurve::Moving { charts: None, targets } => Arrow::Fiber {
                source: source.clone(),
                target: targets.point(t),
            },
            ArrowCurve::Moving {
                charts: Some(c),
                targets,
            } => Arrow::Holonomy {
                charts: c.clone(),
                source: source.clone(),
                target: targets.point(t),
            },
        }
    }

    /// The target curve `t ↦ target(arrow(t))`.
    pub fn target_curve(&self, base: CurveRef) -> CurveRef {
        match self {
            ArrowCurve::Constant { map } => Arc::new(MappedCurve::new(base, map.clone())),
            ArrowCurve::Moving { targets, .. } => targets.clone(),
        }
    }
}

/// One numerical check of a model's structural invariants.
#[derive(Debug, Clone, Serialize)]
pub struct ModelCheck {
    pub name: String,
    pub defect: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn gram_schmidt(g: &DMatrix<f64>, vectors: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let orig = (v.transpose() * g * &v)[(0, 0)].max(0.0).sqrt();
        let mut w = v;
        for e in &out {
            let c = (e.transpose() * g * &w)[(0, 0)];
            w -= e * c;
        }
        let n = (w.transpose() * g * &w)[(0, 0)].max(0.0).sqrt();
        if n > ORBIT_VECTOR_TOL && n > 1e-10 * orig {
            out.push(w / n);
        }
    }
    out
}

impl GroupoidModel {
    pub fn new(name: impl Into<String>, patch: ManifoldPatch, kind: ModelKind) -> Result<Self> {
        let dim = patch.dim();
        let ok = match &kind {
            ModelKind::Action(a) => a.dim() == dim,
            ModelKind::Foliation(f) => f.charts.iter().all(|c| c.a.ncols() == dim),
            ModelKind::Orbifold(o) => o.charts.iter().all(|c| c.group.iter().all(|g| g.dim() == dim)),
            ModelKind::Submersion(_) => true,
        };
        if !ok {
            return Err(GeoError::InvalidModel(format!(
                "model payload does not match the {dim}-dimensional patch"
            )));
        }
        Ok(GroupoidModel {
            inner: Arc::new(ModelInner {
                name: name.into(),
                patch,
                kind,
            }),
        })
    }

    /// Unit groupoid: the quotient is the patch itself.
    pub fn trivial(patch: ManifoldPatch) -> Self {
        let dim = patch.dim();
        let data = ActionData::new(dim, &[], vec![]).expect("trivial action");
        GroupoidModel::new("trivial", patch, ModelKind::Action(data)).expect("trivial model")
    }

    pub fn action(
        name: impl Into<String>,
        patch: ManifoldPatch,
        finite: &[AffineMap],
        generators: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let data = ActionData::new(patch.dim(), finite, generators)?;
        GroupoidModel::new(name, patch, ModelKind::Action(data))
    }

    pub fn submersion(name: impl Into<String>, patch: ManifoldPatch, data: SubmersionData) -> Result<Self> {
        GroupoidModel::new(name, patch, ModelKind::Submersion(data))
    }

    pub fn foliation(
        name: impl Into<String>,
        patch: ManifoldPatch,
        charts: Vec<FoliationChart>,
        transitions: Vec<((usize, usize), AffineMap)>,
        proper: bool,
    ) -> Result<Self> {
        let data = FoliationData::new(charts, transitions, proper, patch.bounds())?;
        GroupoidModel::new(name, patch, ModelKind::Foliation(data))
    }

    pub fn orbifold(
        name: impl Into<String>,
        patch: ManifoldPatch,
        charts: Vec<(crate::region::Region, Vec<AffineMap>)>,
        embeddings: Vec<ChartEmbedding>,
    ) -> Result<Self> {
        let data = OrbifoldData::new(patch.dim(), charts, embeddings)?;
        GroupoidModel::new(name, patch, ModelKind::Orbifold(data))
    }

    /// Same presentation over a different metric on the same chart.
    pub fn with_patch(&self, patch: ManifoldPatch) -> Self {
        GroupoidModel {
            inner: Arc::new(ModelInner {
                name: self.inner.name.clone(),
                patch,
                kind: self.inner.kind.clone(),
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn patch(&self) -> &ManifoldPatch {
        &self.inner.patch
    }

    pub fn kind(&self) -> &ModelKind {
        &self.inner.kind
    }

    pub fn dim(&self) -> usize {
        self.inner.patch.dim()
    }

    pub fn variant_name(&self) -> &'static str {
        match self.kind() {
            ModelKind::Action(_) => "action",
            ModelKind::Submersion(_) => "submersion",
            ModelKind::Foliation(_) => "foliation",
            ModelKind::Orbifold(_) => "orbifold",
        }
    }

    /// Compact isotropy and Hausdorff quotient (as declared for submersion and
    /// foliation models).
    pub fn is_proper(&self) -> bool {
        match self.kind() {
            ModelKind::Action(_) | ModelKind::Orbifold(_) => true,
            ModelKind::Submersion(_) => true,
            ModelKind::Foliation(f) => f.proper,
        }
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self.kind(), ModelKind::Action(a) if a.is_trivial())
    }

    pub fn contains(&self, x: &Point) -> bool {
        if !self.patch().contains(x) {
            return false;
        }
        match self.kind() {
            ModelKind::Foliation(f) => !f.charts_containing(x).is_empty(),
            ModelKind::Orbifold(o) => o.contains(x),
            _ => true,
        }
    }

    fn check_domain(&self, x: &Point) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(GeoError::OutOfDomain {
                point: x.iter().copied().collect(),
            })
        }
    }

    /// Spanning set of the orbit tangent space at `x`.
    pub fn orbit_tangent_basis(&self, x: &Point) -> Result<Vec<DVector<f64>>> {
        self.check_domain(x)?;
        Ok(self.orbit_tangent_raw(x))
    }

    fn orbit_tangent_raw(&self, x: &Point) -> Vec<DVector<f64>> {
        match self.kind() {
            ModelKind::Action(a) => a.orbit_tangent_basis(x),
            ModelKind::Submersion(s) => s.orbit_tangent_basis(x),
            ModelKind::Foliation(f) => f.orbit_tangent_basis(x).unwrap_or_default(),
            ModelKind::Orbifold(_) => Vec::new(),
        }
    }

    /// η-orthonormal basis of the orbit tangent space at `x`.
    pub fn orthonormal_orbit_basis(&self, x: &Point) -> Vec<DVector<f64>> {
        let g = self.patch().metric_raw(x);
        gram_schmidt(&g, self.orbit_tangent_raw(x))
    }

    /// η-orthogonal projection of `v` off the orbit tangent space.
    pub fn normal_project(&self, x: &Point, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(x)?;
        Ok(self.normal_project_raw(x, v))
    }

    pub fn normal_project_raw(&self, x: &Point, v: &DVector<f64>) -> DVector<f64> {
        let g = self.patch().metric_raw(x);
        let basis = gram_schmidt(&g, self.orbit_tangent_raw(x));
        let mut w = v.clone();
        for e in &basis {
            let c = (e.transpose() * &g * v)[(0, 0)];
            w -= e * c;
        }
        w
    }

    pub fn normal_norm(&self, x: &Point, v: &DVector<f64>) -> Result<f64> {
        let n = self.normal_project(x, v)?;
        Ok(self.patch().norm(x, &n))
    }

    pub fn normal_norm_raw(&self, x: &Point, v: &DVector<f64>) -> f64 {
        self.patch().norm(x, &self.normal_project_raw(x, v))
    }

    /// `(‖v_N‖, ‖v_T‖)` in the patch metric.
    pub fn normal_tangential_norms(&self, x: &Point, v: &DVector<f64>) -> (f64, f64) {
        let n = self.normal_project_raw(x, v);
        let t = v - &n;
        (self.patch().norm(x, &n), self.patch().norm(x, &t))
    }

    /// An arrow from `x` to `y` when the points lie in one orbit (within `tol`).
    pub fn arrow_between(&self, x: &Point, y: &Point, tol: f64) -> Option<Arrow> {
        if !self.contains(x) || !self.contains(y) {
            return None;
        }
        match self.kind() {
            ModelKind::Action(a) => {
                let fit = a.fit(&[(x.clone(), y.clone())], &[]);
                (fit.residual <= tol).then(|| Arrow::Isometry {
                    map: fit.map,
                    source: x.clone(),
                })
            }
            ModelKind::Submersion(s) => ((s.project(x) - s.project(y)).norm() <= tol).then(|| Arrow::Fiber {
                source: x.clone(),
                target: y.clone(),
            }),
            ModelKind::Foliation(f) => f.leaf_path(x, y, tol).map(|p| Arrow::Holonomy {
                charts: p.charts,
                source: x.clone(),
                target: y.clone(),
            }),
            ModelKind::Orbifold(o) => o
                .orbit(x)
                .into_iter()
                .find(|im| (&im.point - y).norm() <= tol)
                .map(|im| Arrow::Isometry {
                    map: im.map,
                    source: x.clone(),
                }),
        }
    }

    pub fn same_orbit(&self, x: &Point, y: &Point, tol: f64) -> bool {
        self.arrow_between(x, y, tol).is_some()
    }

    /// Arrow from `x` to the point of its orbit (locally) nearest to `toward`.
    pub fn nearest_orbit_arrow(&self, x: &Point, toward: &Point) -> Option<Arrow> {
        match self.kind() {
            ModelKind::Action(a) => {
                let fit = a.fit(&[(x.clone(), toward.clone())], &[]);
                let arrow = Arrow::Isometry {
                    map: fit.map,
                    source: x.clone(),
                };
                self.patch().contains(&arrow.target()).then_some(arrow)
            }
            ModelKind::Submersion(s) => {
                let z = s.fiber_point_near(x, toward)?;
                self.patch().contains(&z).then(|| Arrow::Fiber {
                    source: x.clone(),
                    target: z,
                })
            }
            ModelKind::Foliation(f) => {
                let (c, z) = f.plaque_point_near(x, toward)?;
                self.patch().contains(&z).then(|| Arrow::Holonomy {
                    charts: vec![c],
                    source: x.clone(),
                    target: z,
                })
            }
            ModelKind::Orbifold(o) => o
                .orbit(x)
                .into_iter()
                .min_by(|a, b| (&a.point - toward).norm().total_cmp(&(&b.point - toward).norm()))
                .map(|im| Arrow::Isometry {
                    map: im.map,
                    source: x.clone(),
                }),
        }
    }

    /// Images of `x` under the discrete part of the presentation (including `x`).
    pub fn discrete_images(&self, x: &Point) -> Vec<Point> {
        match self.kind() {
            ModelKind::Action(a) => a
                .finite_images(x)
                .into_iter()
                .filter(|p| self.patch().contains(p))
                .collect(),
            ModelKind::Orbifold(o) => o.orbit(x).into_iter().map(|im| im.point).collect(),
            _ => vec![x.clone()],
        }
    }

    pub fn invariants(&self, x: &Point) -> Invariants {
        match self.kind() {
            ModelKind::Action(a) => a.invariants(x).map_or(Invariants::None, Invariants::Global),
            ModelKind::Submersion(s) => Invariants::Global(s.project(x)),
            ModelKind::Foliation(f) => Invariants::PerChart(f.invariants(x)),
            ModelKind::Orbifold(_) => Invariants::None,
        }
    }

    pub fn identity_arrow(&self, x: &Point) -> Arrow {
        match self.kind() {
            ModelKind::Action(_) | ModelKind::Orbifold(_) => Arrow::Isometry {
                map: AffineMap::identity(self.dim()),
                source: x.clone(),
            },
            ModelKind::Submersion(_) => Arrow::Fiber {
                source: x.clone(),
                target: x.clone(),
            },
            ModelKind::Foliation(f) => Arrow::Holonomy {
                charts: f.charts_containing(x).into_iter().take(1).collect(),
                source: x.clone(),
                target: x.clone(),
            },
        }
    }

    fn check_source(arrow: &Arrow, x: &Point) -> Result<()> {
        let s = arrow.source();
        if (s - x).norm() > SOURCE_TOL * (1.0 + x.norm()) {
            return Err(GeoError::SourceMismatch {
                source_point: s.iter().copied().collect(),
                point: x.iter().copied().collect(),
            });
        }
        Ok(())
    }

    pub fn apply_arrow(&self, arrow: &Arrow, x: &Point) -> Result<Point> {
        Self::check_source(arrow, x)?;
        Ok(match arrow {
            Arrow::Isometry { map, .. } => map.apply(x),
            Arrow::Fiber { target, .. } | Arrow::Holonomy { target, .. } => target.clone(),
        })
    }

    /// Push-forward of a tangent vector at the source; for submersion and
    /// foliation arrows this is the horizontal transport of its normal part.
    pub fn apply_arrow_differential(&self, arrow: &Arrow, x: &Point, v: &DVector<f64>) -> Result<DVector<f64>> {
        Self::check_source(arrow, x)?;
        Ok(match (arrow, self.kind()) {
            (Arrow::Isometry { map, .. }, _) => map.apply_linear(v),
            (Arrow::Fiber { source, target }, ModelKind::Submersion(s)) => {
                let w = s.jacobian(source) * v;
                horizontal_lift(&self.patch().metric_raw(target), &s.jacobian(target), &w)
            }
            (Arrow::Holonomy { charts, target, .. }, ModelKind::Foliation(f)) => {
                let (first, last) = match (charts.first(), charts.last()) {
                    (Some(a), Some(b)) => (*a, *b),
                    _ => return Err(GeoError::InvalidModel("holonomy arrow without charts".into())),
                };
                let gamma = f
                    .path_transition(charts)
                    .ok_or_else(|| GeoError::InvalidModel("holonomy path uses a missing transition".into()))?;
                let w = gamma.apply_linear(&(&f.charts[first].a * v));
                horizontal_lift(&self.patch().metric_raw(target), &f.charts[last].a, &w)
            }
            _ => return Err(GeoError::InvalidModel("arrow kind does not match the model".into())),
        })
    }

    /// Arrow carrying the jet `(x1, v1)` to `(x2, v2)` on normal parts, if any.
    pub fn jet_arrow(&self, x1: &Point, v1: &DVector<f64>, x2: &Point, v2: &DVector<f64>, tol: f64) -> Option<Arrow> {
        let n1 = self.normal_project_raw(x1, v1);
        let n2 = self.normal_project_raw(x2, v2);
        let scale = 1.0 + self.patch().norm(x2, &n2);
        match self.kind() {
            ModelKind::Action(a) => {
                let fit = a.fit(&[(x1.clone(), x2.clone())], &[(n1.clone(), n2.clone())]);
                let arrow = Arrow::Isometry {
                    map: fit.map,
                    source: x1.clone(),
                };
                let pos = (arrow.target() - x2).norm();
                let vel = self.normal_project_raw(x2, &arrow_linear(&arrow, &n1)) - &n2;
                (pos <= tol && self.patch().norm(x2, &vel) <= tol * scale).then_some(arrow)
            }
            ModelKind::Orbifold(o) => o.orbit(x1).into_iter().find_map(|im| {
                if (&im.point - x2).norm() > tol {
                    return None;
                }
                let pushed = im.map.apply_linear(&n1);
                (self.patch().norm(x2, &(pushed - &n2)) <= tol * scale).then(|| Arrow::Isometry {
                    map: im.map,
                    source: x1.clone(),
                })
            }),
            _ => {
                let arrow = self.arrow_between(x1, x2, tol)?;
                let pushed = self.apply_arrow_differential(&arrow, x1, &n1).ok()?;
                let diff = self.normal_project_raw(x2, &pushed) - &n2;
                (self.patch().norm(x2, &diff) <= tol * scale).then_some(arrow)
            }
        }
    }

    /// Lifts `arrow0` along `base` through the source map on `span`, keeping
    /// `arrow(t0) = arrow0`.
    pub fn source_lift(&self, arrow0: &Arrow, base: CurveRef, t0: f64, span: (f64, f64)) -> Result<ArrowCurve> {
        Self::check_source(arrow0, &base.point(t0))?;
        match arrow0 {
            Arrow::Isometry { map, .. } => {
                let n = ((span.1 - span.0) / LIFT_STEP).ceil().max(1.0) as usize;
                let mut prev: Option<(Point, Point)> = None;
                for k in 0..=n {
                    let t = span.0 + (span.1 - span.0) * k as f64 / n as f64;
                    let x = base.point(t);
                    let y = map.apply(&x);
                    let ok = match &prev {
                        None => self.contains(&x) && self.contains(&y),
                        Some((px, py)) => self.contains_segment(px, &x) && self.contains_segment(py, &y),
                    };
                    if !ok {
                        return Err(GeoError::LiftExit { time: t });
                    }
                    prev = Some((x, y));
                }
                Ok(ArrowCurve::Constant { map: map.clone() })
            }
            Arrow::Fiber { target, .. } => {
                let targets = self.integrate_lift(&base, t0, span, target, None)?;
                Ok(ArrowCurve::Moving {
                    charts: None,
                    targets: Arc::new(targets),
                })
            }
            Arrow::Holonomy { charts, target, .. } => {
                let targets = self.integrate_lift(&base, t0, span, target, Some(charts))?;
                Ok(ArrowCurve::Moving {
                    charts: Some(charts.clone()),
                    targets: Arc::new(targets),
                })
            }
        }
    }

    fn lift_velocity(&self, base: &CurveRef, t: f64, y: &Point, charts: Option<&[usize]>) -> Result<DVector<f64>> {
        let a = base.point(t);
        let da = base.velocity(t);
        match (self.kind(), charts) {
            (ModelKind::Submersion(s), None) => {
                let w = s.jacobian(&a) * da;
                Ok(horizontal_lift(&self.patch().metric_raw(y), &s.jacobian(y), &w))
            }
            (ModelKind::Foliation(f), Some(c)) => {
                let gamma = f
                    .path_transition(c)
                    .ok_or_else(|| GeoError::InvalidModel("holonomy path uses a missing transition".into()))?;
                let first = c[0];
                let last = *c.last().unwrap();
                let w = gamma.apply_linear(&(&f.charts[first].a * da));
                Ok(horizontal_lift(&self.patch().metric_raw(y), &f.charts[last].a, &w))
            }
            _ => Err(GeoError::InvalidModel("arrow kind does not match the model".into())),
        }
    }

    /// True when the segment `a -> b` stays in the model's domain.
    pub fn contains_segment(&self, a: &Point, b: &Point) -> bool {
        if !self.patch().region().contains_segment(a, b) {
            return false;
        }
        match self.kind() {
            ModelKind::Foliation(f) => f.charts.iter().any(|c| c.region.contains_segment(a, b)),
            ModelKind::Orbifold(o) => o.charts.iter().any(|c| c.region.contains_segment(a, b)),
            _ => true,
        }
    }

    fn lift_valid(&self, base: &CurveRef, t: (f64, f64), y: (&Point, &Point), charts: Option<&[usize]>) -> bool {
        if !self.contains_segment(y.0, y.1) {
            return false;
        }
        if let (ModelKind::Foliation(f), Some(c)) = (self.kind(), charts) {
            let (a0, a1) = (base.point(t.0), base.point(t.1));
            return f.charts[c[0]].region.contains_segment(&a0, &a1)
                && f.charts[*c.last().unwrap()].region.contains_segment(y.0, y.1);
        }
        true
    }

    fn integrate_lift(
        &self,
        base: &CurveRef,
        t0: f64,
        span: (f64, f64),
        y0: &Point,
        charts: Option<&Vec<usize>>,
    ) -> Result<HermiteCurve> {
        let charts = charts.map(|c| c.as_slice());
        let run = |t_end: f64| -> Result<Vec<(f64, Point, DVector<f64>)>> {
            let span = t_end - t0;
            let n = (span.abs() / LIFT_STEP).ceil() as usize;
            let mut out = vec![(t0, y0.clone(), self.lift_velocity(base, t0, y0, charts)?)];
            if n == 0 {
                return Ok(out);
            }
            let h = span / n as f64;
            let mut y = y0.clone();
            for k in 0..n {
                let t = t0 + k as f64 * h;
                let k1 = self.lift_velocity(base, t, &y, charts)?;
                let k2 = self.lift_velocity(base, t + 0.5 * h, &(&y + &k1 * (0.5 * h)), charts)?;
                let k3 = self.lift_velocity(base, t + 0.5 * h, &(&y + &k2 * (0.5 * h)), charts)?;
                let k4 = self.lift_velocity(base, t + h, &(&y + &k3 * h), charts)?;
                let prev = y.clone();
                y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                let tn = t0 + (k + 1) as f64 * h;
                if !self.lift_valid(base, (t, tn), (&prev, &y), charts) {
                    return Err(GeoError::LiftExit { time: tn });
                }
                let v = self.lift_velocity(base, tn, &y, charts)?;
                out.push((tn, y.clone(), v));
            }
            Ok(out)
        };
        let mut back = run(span.0)?;
        let fwd = run(span.1)?;
        back.reverse();
        back.pop();
        back.extend(fwd);
        if back.len() < 2 {
            let v = back[0].2.clone();
            back.push((t0 + 1e-12, &back[0].1 + &v * 1e-12, v));
        }
        let (times, rest): (Vec<f64>, Vec<(Point, DVector<f64>)>) = back.into_iter().map(|(t, y, v)| (t, (y, v))).unzip();
        let (points, vels) = rest.into_iter().unzip();
        HermiteCurve::new(times, points, vels)
    }

    pub fn isotropy_label(&self, x: &Point) -> IsotropyLabel {
        match self.kind() {
            ModelKind::Action(a) => {
                let (finite_order, vanishing_generators) = a.isotropy(x);
                IsotropyLabel {
                    finite_order,
                    vanishing_generators,
                }
            }
            ModelKind::Orbifold(o) => IsotropyLabel {
                finite_order: o.isotropy_order(x),
                vanishing_generators: 0,
            },
            _ => IsotropyLabel {
                finite_order: 1,
                vanishing_generators: 0,
            },
        }
    }

    /// Euclidean distance from `x` to the nearest point of a strictly larger
    /// isotropy stratum (infinite when there is none).
    pub fn stratum_distance(&self, x: &Point) -> f64 {
        match self.kind() {
            ModelKind::Action(a) => a.stratum_distance(x),
            ModelKind::Orbifold(o) => o.stratum_distance(x),
            _ => f64::INFINITY,
        }
    }

    /// Numerical checks of the structural invariants on sample points.
    pub fn validate(&self, samples: &[Point]) -> Vec<ModelCheck> {
        let patch = self.patch();
        let mut checks = Vec::new();
        let mut push = |name: &str, defect: f64, tolerance: f64| {
            checks.push(ModelCheck {
                name: name.to_string(),
                defect,
                tolerance,
                pass: defect <= tolerance,
            })
        };
        let isometry_defect = |maps: &[AffineMap], pts: &[Point]| -> f64 {
            let mut worst: f64 = 0.0;
            for x in pts {
                for m in maps {
                    let y = m.apply(x);
                    if !patch.contains(&y) {
                        continue;
                    }
                    let gx = patch.metric_raw(x);
                    let gy = patch.metric_raw(&y);
                    let d = (m.linear.transpose() * gy * &m.linear - &gx).amax() / (1.0 + gx.amax());
                    worst = worst.max(d);
                }
            }
            worst
        };
        match self.kind() {
            ModelKind::Action(a) => {
                push("finite_isometry", isometry_defect(&a.finite, samples), 1e-10);
                let mut killing: f64 = 0.0;
                for x in samples {
                    let g = patch.metric_raw(x);
                    for gen in &a.generators {
                        let xf = gen.field(x);
                        let h = 1e-5 * (1.0 + x.norm()) / (1.0 + xf.norm());
                        let dg = (patch.metric_raw(&(x + &xf * h)) - patch.metric_raw(&(x - &xf * h))) / (2.0 * h);
                        let lie = dg + gen.matrix.transpose() * &g + &g * &gen.matrix;
                        killing = killing.max(lie.amax() / (1.0 + g.amax()));
                    }
                }
                push("killing_generators", killing, 1e-6);
            }
            ModelKind::Orbifold(o) => {
                let maps: Vec<AffineMap> = o.charts.iter().flat_map(|c| c.group.iter().cloned()).collect();
                push("chart_group_isometry", isometry_defect(&maps, samples), 1e-10);
            }
            ModelKind::Foliation(f) => {
                let (compat, cocycle, iso) = f.coherence_defects(samples);
                push("chart_compatibility", compat, 1e-10);
                push("cocycle_coherence", cocycle, 1e-10);
                push("transverse_isometry", iso, 1e-10);
            }
            ModelKind::Submersion(s) => {
                let ranks: Vec<usize> = samples.iter().map(|x| s.orbit_tangent_basis(x).len()).collect();
                let spread = match (ranks.iter().min(), ranks.iter().max()) {
                    (Some(a), Some(b)) => (b - a) as f64,
                    _ => 0.0,
                };
                push("constant_fiber_dimension", spread, 0.0);
            }
        }
        checks
    }
}

fn arrow_linear(arrow: &Arrow, v: &DVector<f64>) -> DVector<f64> {
    match arrow {
        Arrow::Isometry { map, .. } => map.apply_linear(v),
        _ => v.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::FnCurve;
    use crate::region::Region;

    fn p(v: &[f64]) -> Point {
        DVector::from_row_slice(v)
    }

    fn plane(l: f64) -> ManifoldPatch {
        ManifoldPatch::euclidean(Region::All, (p(&[-l, -l]), p(&[l, l])))
    }

    fn rotation() -> GroupoidModel {
        GroupoidModel::action(
            "rotation",
            plane(4.0),
            &[],
            vec![DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])],
        )
        .unwrap()
    }

    fn reflection() -> GroupoidModel {
        GroupoidModel::action(
            "z2",
            plane(2.0),
            &[AffineMap::linear(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]))],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn rotation_orbit_tangent_and_projection() {
        let m = rotation();
        assert_eq!(m.orbit_tangent_basis(&p(&[1.0, 0.0])).unwrap(), vec![p(&[0.0, 1.0])]);
        assert!(m.orthonormal_orbit_basis(&p(&[0.0, 0.0])).is_empty());
        // parabola (t, t²) at t = 1
        let n = m.normal_norm(&p(&[1.0, 1.0]), &p(&[1.0, 2.0])).unwrap();
        assert!((n - 4.5f64.sqrt()).abs() < 1e-14);
        assert!(m.normal_project(&p(&[1.0, 0.0]), &p(&[0.0, 3.0])).unwrap().norm() < 1e-15);
        let v = p(&[2.0, 0.0]);
        assert_eq!(m.normal_project(&p(&[1.0, 0.0]), &v).unwrap(), v);
    }

    #[test]
    fn orbit_membership() {
        let r = rotation();
        assert!(r.same_orbit(&p(&[1.0, 0.0]), &p(&[0.0, 1.0]), 1e-9));
        assert!(!r.same_orbit(&p(&[1.0, 0.0]), &p(&[0.0, 1.1]), 1e-9));
        let z = reflection();
        assert!(z.same_orbit(&p(&[0.0, -0.1]), &p(&[0.0, 0.1]), 1e-12));
        assert!(!z.same_orbit(&p(&[0.1, 0.1]), &p(&[-0.1, 0.1]), 1e-9));
    }

    #[test]
    fn arrows_and_differentials() {
        let z = reflection();
        let a = z.arrow_between(&p(&[1.0, 1.0]), &p(&[1.0, -1.0]), 1e-12).unwrap();
        assert_eq!(z.apply_arrow(&a, &p(&[1.0, 1.0])).unwrap(), p(&[1.0, -1.0]));
        assert_eq!(z.apply_arrow_differential(&a, &p(&[1.0, 1.0]), &p(&[1.0, 2.0])).unwrap(), p(&[1.0, -2.0]));
        assert!(matches!(
            z.apply_arrow(&a, &p(&[0.0, 1.0])),
            Err(GeoError::SourceMismatch { .. })
        ));
        let r = rotation();
        let q = r.arrow_between(&p(&[1.0, 0.0]), &p(&[0.0, 1.0]), 1e-12).unwrap();
        assert!((r.apply_arrow(&q, &p(&[1.0, 0.0])).unwrap() - p(&[0.0, 1.0])).norm() < 1e-15);
        let inv = q.inverse().unwrap();
        let id = q.then(&inv).unwrap();
        assert!((id.target() - p(&[1.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn constant_lift_along_radial_curve() {
        let r = rotation();
        let base: CurveRef = Arc::new(FnCurve::line(p(&[1.0, 0.0]), p(&[1.0, 0.0]), (0.0, 2.0), 0.0));
        let arrow = Arrow::Isometry {
            map: AffineMap::linear(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0])),
            source: p(&[1.0, 0.0]),
        };
        let lift = r.source_lift(&arrow, base.clone(), 0.0, (0.0, 2.0)).unwrap();
        let target = lift.target_curve(base);
        assert!((target.point(1.0) - p(&[-2.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn submersion_lift_keeps_fibers_matched() {
        let sub = SubmersionData::new(Arc::new(|x: &Point| DVector::from_row_slice(&[x[0]])), None, 1, false);
        let m = GroupoidModel::submersion("first-coordinate", plane(3.0), sub).unwrap();
        let base: CurveRef = Arc::new(FnCurve::line(p(&[0.0, 0.0]), p(&[1.0, 0.5]), (0.0, 1.0), 0.0));
        let arrow = Arrow::Fiber {
            source: p(&[0.0, 0.0]),
            target: p(&[0.0, 2.0]),
        };
        let lift = m.source_lift(&arrow, base.clone(), 0.0, (0.0, 1.0)).unwrap();
        let tc = lift.target_curve(base.clone());
        for t in [0.25, 0.5, 1.0] {
            let y = tc.point(t);
            assert!((y[0] - base.point(t)[0]).abs() < 1e-8);
            assert!((y[1] - 2.0).abs() < 1e-8);
            // transverse speeds agree
            let a = m.normal_norm(&base.point(t), &base.velocity(t)).unwrap();
            let b = m.normal_norm(&y, &tc.velocity(t)).unwrap();
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn validation_of_stock_actions() {
        let samples = vec![p(&[0.3, -0.2]), p(&[1.0, 1.5]), p(&[-1.2, 0.4])];
        for m in [rotation(), reflection()] {
            for c in m.validate(&samples) {
                assert!(c.pass, "{} failed: {:e}", c.name, c.defect);
            }
        }
        let bad = GroupoidModel::action(
            "rotation-on-nonround",
            ManifoldPatch::new(
                "skewed",
                Region::All,
                (p(&[-2.0, -2.0]), p(&[2.0, 2.0])),
                Arc::new(|_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0])),
            ),
            &[],
            vec![DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])],
        )
        .unwrap();
        assert!(bad.validate(&samples).iter().any(|c| !c.pass));
    }
}
