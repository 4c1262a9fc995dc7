use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::curve::{CurveRef, Reparametrized};
use crate::error::{GeoError, Result};
use crate::geometry::Point;
use crate::groupoid::{AffineMap, Arrow, GroupoidModel, ModelKind};
use crate::quadrature::adaptive_simpson;

/// Tolerance for transitions matching segment values on overlaps.
pub const TRANSITION_TOL: f64 = 1e-8;
/// Allowed disagreement of the two segment speeds on an overlap.
pub const OVERLAP_SPEED_TOL: f64 = 1e-6;
/// Absolute quadrature tolerance used for lengths.
pub const LENGTH_TOL: f64 = 1e-10;
/// Fallback quadrature tolerance when the tight one exhausts the subdivision cap.
pub const LENGTH_TOL_FALLBACK: f64 = 1e-6;
/// Default number of samples for isomorphism tests.
pub const ISOMORPHISM_SAMPLES: usize = 256;
/// Largest probe displacement between consecutive matching isometries that
/// still counts as a continuous change.
pub const ARROW_JUMP: f64 = 0.5;

const TRANSITION_SAMPLES: usize = 16;

/// Transition on the overlap of two consecutive segments.
#[derive(Debug, Clone)]
pub enum Transition {
    /// Segments agree on the overlap.
    Identity,
    /// A fixed isometry carries the first segment onto the second.
    Isometry(AffineMap),
    /// The arrow is determined pointwise by the two segment values
    /// (submersion and foliation models).
    Implied,
}

/// Velocity class at a parameter: the normal part of a segment's velocity.
#[derive(Debug, Clone, Serialize)]
pub struct VelocityClass {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub speed: f64,
}

/// A curve in the quotient presented by a good cocycle: segments on an open
/// cover of the parameter interval with transitions on consecutive overlaps
/// and no triple overlaps.
#[derive(Debug, Clone)]
pub struct StackyCurve {
    model: GroupoidModel,
    intervals: Vec<(f64, f64)>,
    segments: Vec<CurveRef>,
    transitions: Vec<Transition>,
}

fn scaled(tol: f64, x: &Point) -> f64 {
    tol * (1.0 + x.norm())
}

impl StackyCurve {
    pub fn new(
        model: GroupoidModel,
        intervals: Vec<(f64, f64)>,
        segments: Vec<CurveRef>,
        transitions: Vec<Transition>,
    ) -> Result<Self> {
        Self::with_tolerance(model, intervals, segments, transitions, TRANSITION_TOL)
    }

    /// As [`StackyCurve::new`] with a custom transition tolerance (used for
    /// numerically integrated segments).
    pub fn with_tolerance(
        model: GroupoidModel,
        intervals: Vec<(f64, f64)>,
        segments: Vec<CurveRef>,
        transitions: Vec<Transition>,
        tol: f64,
    ) -> Result<Self> {
        let bad = |m: String| Err(GeoError::InvalidCocycle(m));
        let n = segments.len();
        if n == 0 {
            return bad("a curve needs at least one segment".into());
        }
        if intervals.len() != n || transitions.len() + 1 != n {
            return bad(format!(
                "{} segments need {} intervals and {} transitions (got {} and {})",
                n,
                n,
                n - 1,
                intervals.len(),
                transitions.len()
            ));
        }
        for (i, (a, b)) in intervals.iter().enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return bad(format!("cover interval {i} is empty or not finite"));
            }
            let (da, db) = segments[i].domain();
            if da > a + 1e-12 || db < b - 1e-12 {
                return bad(format!("segment {i} is defined on [{da}, {db}] but covers ({a}, {b})"));
            }
        }
        for i in 0..n.saturating_sub(1) {
            let (a0, b0) = intervals[i];
            let (a1, b1) = intervals[i + 1];
            if !(a0 < a1 && b0 < b1 && a1 < b0) {
                return bad(format!("cover intervals {i} and {} must overlap in order", i + 1));
            }
            if i + 2 < n && intervals[i + 2].0 < b0 {
                return bad(format!("cover intervals {i}..{} overlap three-fold", i + 2));
            }
        }
        let curve = StackyCurve {
            model,
            intervals,
            segments,
            transitions,
        };
        for i in 0..n - 1 {
            let (lo, hi) = (curve.intervals[i + 1].0, curve.intervals[i].1);
            for k in 0..=TRANSITION_SAMPLES {
                let t = lo + (hi - lo) * (k as f64 + 0.5) / (TRANSITION_SAMPLES as f64 + 1.0);
                let x = curve.segments[i].point(t);
                let y = curve.segments[i + 1].point(t);
                let ok = match &curve.transitions[i] {
                    Transition::Identity => (&x - &y).norm() <= scaled(tol, &y),
                    Transition::Isometry(g) => (g.apply(&x) - &y).norm() <= scaled(tol, &y),
                    Transition::Implied => curve.model.same_orbit(&x, &y, scaled(tol, &y)),
                };
                if !ok {
                    return bad(format!("transition {i} does not match the segments at t = {t}"));
                }
            }
        }
        Ok(curve)
    }

    /// One segment covering its whole domain.
    pub fn single(model: GroupoidModel, curve: CurveRef) -> Result<Self> {
        let d = curve.domain();
        StackyCurve::new(model, vec![d], vec![curve], vec![])
    }

    pub fn model(&self) -> &GroupoidModel {
        &self.model
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.intervals[0].0, self.intervals[self.intervals.len() - 1].1)
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn segments(&self) -> &[CurveRef] {
        &self.segments
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Segment used at `t` by the length functional: the last one whose
    /// interval starts at or before `t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.intervals.iter().rposition(|(a, _)| *a <= t).unwrap_or(0)
    }

    /// Segments whose cover interval contains `t` (one or two).
    pub fn indices_containing(&self, t: f64) -> Vec<usize> {
        let (lo, hi) = self.domain();
        (0..self.segments.len())
            .filter(|&i| {
                let (a, b) = self.intervals[i];
                (a < t || (t == lo && a == lo)) && (t < b || (t == hi && b == hi))
            })
            .collect()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if t.is_finite() && t >= lo && t <= hi {
            Ok(())
        } else {
            Err(GeoError::OutOfDomain { point: vec![t] })
        }
    }

    pub fn point(&self, t: f64) -> Point {
        self.segments[self.index_at(t)].point(t)
    }

    pub fn ambient_velocity(&self, t: f64) -> DVector<f64> {
        self.segments[self.index_at(t)].velocity(t)
    }

    fn segment_speed(&self, i: usize, t: f64) -> f64 {
        let seg = &self.segments[i];
        self.model.normal_norm_raw(&seg.point(t), &seg.velocity(t))
    }

    /// Normal speed `‖a_i'(t)‖_N`; on overlaps both segment values must agree.
    pub fn normal_speed(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let idx = self.indices_containing(t);
        let first = self.segment_speed(idx[0], t);
        if let Some(&j) = idx.get(1) {
            let second = self.segment_speed(j, t);
            if (first - second).abs() > OVERLAP_SPEED_TOL * (1.0 + first.abs().max(second.abs())) {
                return Err(GeoError::OverlapDisagreement {
                    time: t,
                    left: first,
                    right: second,
                });
            }
        }
        Ok(first)
    }

    /// Ambient speed `‖a_i'(t)‖` of the segment used at `t`.
    pub fn ambient_speed(&self, t: f64) -> f64 {
        let seg = &self.segments[self.index_at(t)];
        self.model.patch().norm(&seg.point(t), &seg.velocity(t))
    }

    /// Angle `atan2(‖v_T‖, ‖v_N‖)` between the velocity and the normal space.
    pub fn normal_angle(&self, t: f64) -> f64 {
        let seg = &self.segments[self.index_at(t)];
        let (n, tan) = self.model.normal_tangential_norms(&seg.point(t), &seg.velocity(t));
        tan.atan2(n)
    }

    pub fn velocity(&self, t: f64) -> Result<VelocityClass> {
        let speed = self.normal_speed(t)?;
        let seg = &self.segments[self.indices_containing(t)[0]];
        let x = seg.point(t);
        let normal = self.model.normal_project_raw(&x, &seg.velocity(t));
        Ok(VelocityClass {
            point: x.iter().copied().collect(),
            normal: normal.iter().copied().collect(),
            speed,
        })
    }

    fn integrate_segment(&self, i: usize, lo: f64, hi: f64) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        let mut cuts: Vec<f64> = self.segments[i]
            .breakpoints()
            .into_iter()
            .filter(|b| *b > lo && *b < hi)
            .collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let eps = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        cuts.dedup_by(|b, a| (*b - *a).abs() <= eps);
        if let Some(last) = cuts.last_mut() {
            *last = hi;
        }
        let f = |t: f64| self.segment_speed(i, t);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += match adaptive_simpson(&f, w[0], w[1], LENGTH_TOL) {
                Ok(v) => v,
                Err(_) => {
                    log::warn!(
                        "length quadrature on [{}, {}] relaxed to tolerance {LENGTH_TOL_FALLBACK:e}",
                        w[0],
                        w[1]
                    );
                    adaptive_simpson(&f, w[0], w[1], LENGTH_TOL_FALLBACK)?
                }
            };
        }
        Ok(total)
    }

    /// Length `Σ_i ∫_{U_i} s_i − Σ_i ∫_{U_i ∩ U_{i+1}} s_i`, with each overlap
    /// term evaluated through its source segment. The two sums are combined
    /// before integrating: segment `i` contributes on `[a_i, a_{i+1}]`.
    pub fn length(&self) -> Result<f64> {
        let (lo, hi) = self.domain();
        self.length_between(lo, hi)
    }

    pub fn length_between(&self, a: f64, b: f64) -> Result<f64> {
        self.check_time(a)?;
        self.check_time(b)?;
        let (a, b, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let n = self.segments.len();
        let mut total = 0.0;
        for i in 0..n {
            let start = self.intervals[i].0;
            let end = if i + 1 < n { self.intervals[i + 1].0 } else { self.intervals[i].1 };
            total += self.integrate_segment(i, start.max(a), end.min(b))?;
        }
        Ok(sign * total)
    }

    /// Restriction to `[a, b]`, keeping the segments that contribute there.
    pub fn restrict(&self, a: f64, b: f64) -> Result<StackyCurve> {
        self.check_time(a)?;
        self.check_time(b)?;
        if !(a < b) {
            return Err(GeoError::InvalidCocycle(format!("empty restriction [{a}, {b}]")));
        }
        let n = self.segments.len();
        let keep: Vec<usize> = (0..n)
            .filter(|&i| {
                let start = self.intervals[i].0;
                let end = if i + 1 < n { self.intervals[i + 1].0 } else { self.intervals[i].1 };
                start.max(a) < end.min(b)
            })
            .collect();
        let intervals = keep
            .iter()
            .map(|&i| (self.intervals[i].0.max(a), self.intervals[i].1.min(b)))
            .collect();
        let segments = keep.iter().map(|&i| self.segments[i].clone()).collect();
        let transitions = keep[..keep.len() - 1]
            .iter()
            .map(|&i| self.transitions[i].clone())
            .collect();
        StackyCurve::with_tolerance(self.model.clone(), intervals, segments, transitions, 1e-6)
    }

    /// `α ∘ φ` for an increasing reparametrization `φ: new_domain → domain`
    /// given with its derivative, and its inverse.
    pub fn reparametrize(
        &self,
        new_domain: (f64, f64),
        phi: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
        phi_inverse: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Result<StackyCurve> {
        let (lo, hi) = self.domain();
        let (p0, p1) = (phi(new_domain.0).0, phi(new_domain.1).0);
        if (p0 - lo).abs() > 1e-9 * (1.0 + lo.abs()) || (p1 - hi).abs() > 1e-9 * (1.0 + hi.abs()) {
            return Err(GeoError::InvalidCocycle(
                "reparametrization must map the new domain onto the curve's domain increasingly".into(),
            ));
        }
        let last = self.intervals.len() - 1;
        let intervals: Vec<(f64, f64)> = self
            .intervals
            .iter()
            .enumerate()
            .map(|(i, (a, b))| {
                let s0 = if i == 0 { new_domain.0 } else { phi_inverse(*a) };
                let s1 = if i == last { new_domain.1 } else { phi_inverse(*b) };
                (s0, s1)
            })
            .collect();
        let segments = self
            .segments
            .iter()
            .zip(&intervals)
            .map(|(seg, dom)| {
                let phi = phi.clone();
                let (d0, d1) = seg.domain();
                let clamp: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync> = Arc::new(move |s| {
                    let (t, dt) = phi(s);
                    (t.clamp(d0, d1), dt)
                });
                Arc::new(Reparametrized::new(seg.clone(), *dom, clamp)) as CurveRef
            })
            .collect();
        StackyCurve::with_tolerance(self.model.clone(), intervals, segments, self.transitions.clone(), 1e-6)
    }

    /// Refines the cover: each segment's interval is split into `pieces`
    /// overlapping parts joined by identity transitions.
    pub fn refine(&self, pieces: usize) -> Result<StackyCurve> {
        let pieces = pieces.max(1);
        let n = self.segments.len();
        let mut intervals = Vec::new();
        let mut segments = Vec::new();
        let mut transitions = Vec::new();
        for i in 0..n {
            let (a, b) = self.intervals[i];
            let core_lo = if i > 0 { self.intervals[i - 1].1 } else { a };
            let core_hi = if i + 1 < n { self.intervals[i + 1].0 } else { b };
            let k = if core_hi > core_lo { pieces } else { 1 };
            let step = (core_hi - core_lo) / k as f64;
            let w = step / 4.0;
            for j in 0..k {
                let lo = if j == 0 { a } else { core_lo + j as f64 * step - w };
                let hi = if j + 1 == k { b } else { core_lo + (j + 1) as f64 * step + w };
                intervals.push((lo, hi));
                segments.push(self.segments[i].clone());
                if j + 1 < k {
                    transitions.push(Transition::Identity);
                }
            }
            if i + 1 < n {
                transitions.push(self.transitions[i].clone());
            }
        }
        StackyCurve::with_tolerance(self.model.clone(), intervals, segments, transitions, 1e-6)
    }

    /// `(t, normal speed)` on a grid plus the largest jump between neighbours.
    pub fn speed_continuity_profile(&self, grid: &[f64]) -> Result<(Vec<(f64, f64)>, f64)> {
        let profile = grid
            .iter()
            .map(|&t| Ok((t, self.normal_speed(t)?)))
            .collect::<Result<Vec<_>>>()?;
        let jump = profile
            .windows(2)
            .map(|w| (w[1].1 - w[0].1).abs())
            .fold(0.0, f64::max);
        Ok((profile, jump))
    }

    /// Developing maps for isometry-type models: `T_i` with `T_i(a_i) ≈ a_0`
    /// continued across overlaps.
    fn developing_maps(&self) -> Option<Vec<AffineMap>> {
        if !matches!(self.model.kind(), ModelKind::Action(_) | ModelKind::Orbifold(_)) {
            return None;
        }
        let dim = self.model.dim();
        let mut maps = vec![AffineMap::identity(dim)];
        for i in 0..self.transitions.len() {
            let tau = match &self.transitions[i] {
                Transition::Identity => AffineMap::identity(dim),
                Transition::Isometry(g) => g.clone(),
                Transition::Implied => {
                    let t = 0.5 * (self.intervals[i + 1].0 + self.intervals[i].1);
                    let x = self.segments[i].point(t);
                    let y = self.segments[i + 1].point(t);
                    match self.model.arrow_between(&x, &y, scaled(1e-6, &y)) {
                        Some(Arrow::Isometry { map, .. }) => map,
                        _ => return None,
                    }
                }
            };
            // T_{i+1} = T_i ∘ τ⁻¹
            let next = maps[i].compose(&tau.inverse().ok()?);
            maps.push(next);
        }
        Some(maps)
    }

    /// Point of the developed curve (isometry-type models only).
    fn developed_point(&self, maps: &[AffineMap], t: f64) -> Point {
        let i = self.index_at(t);
        maps[i].apply(&self.segments[i].point(t))
    }
}

/// Outcome of an isomorphism test between two curves.
#[derive(Debug, Clone, Serialize)]
pub struct IsomorphismReport {
    pub isomorphic: bool,
    /// First sampled parameter where no continuous matching arrow exists.
    pub failure_time: Option<f64>,
    pub samples: usize,
}

fn probe_distance(m1: &AffineMap, m2: &AffineMap, x: &Point, proj: &DMatrix<f64>) -> f64 {
    let mut d = (m1.apply(x) - m2.apply(x)).norm();
    let eig = proj.clone().symmetric_eigen();
    for k in 0..proj.ncols() {
        if eig.eigenvalues[k] > 0.5 {
            let p = x + eig.eigenvectors.column(k);
            d = d.max((m1.apply(&p) - m2.apply(&p)).norm());
        }
    }
    d
}

/// Decides whether two curves over the same model and interval define the
/// same stacky curve, by searching for a continuous family of matching
/// arrows on a uniform sample grid.
pub fn curves_isomorphic(c1: &StackyCurve, c2: &StackyCurve, samples: usize, tol: f64) -> IsomorphismReport {
    let samples = samples.max(2);
    let (lo, hi) = c1.domain();
    let (lo2, hi2) = c2.domain();
    let fail = |t: f64| IsomorphismReport {
        isomorphic: false,
        failure_time: Some(t),
        samples,
    };
    if (lo - lo2).abs() > 1e-9 * (1.0 + lo.abs()) || (hi - hi2).abs() > 1e-9 * (1.0 + hi.abs()) {
        return fail(lo);
    }
    let grid: Vec<f64> = (0..samples)
        .map(|k| lo + (hi - lo) * k as f64 / (samples - 1) as f64)
        .collect();
    let model = c1.model();
    match model.kind() {
        ModelKind::Action(_) | ModelKind::Orbifold(_) => {
            let (Some(d1), Some(d2)) = (c1.developing_maps(), c2.developing_maps()) else {
                return fail(lo);
            };
            let mut prev: Vec<(AffineMap, Point)> = Vec::new();
            for (k, &t) in grid.iter().enumerate() {
                let x = c1.developed_point(&d1, t);
                let y = c2.developed_point(&d2, t);
                let cands = matching_isometries(model, &x, &y, tol);
                let reach: Vec<(AffineMap, Point)> = if k == 0 {
                    cands.into_iter().map(|m| (m, x.clone())).collect()
                } else {
                    cands
                        .into_iter()
                        .filter(|m| {
                            prev.iter().any(|(r, px)| {
                                let proj = free_projector(model, px, tol) * free_projector(model, &x, tol);
                                probe_distance(r, m, &x, &proj) <= ARROW_JUMP
                            })
                        })
                        .map(|m| (m, x.clone()))
                        .collect()
                };
                if reach.is_empty() {
                    return fail(t);
                }
                prev = reach;
            }
        }
        ModelKind::Submersion(_) => {
            for &t in &grid {
                if !model.same_orbit(&c1.point(t), &c2.point(t), tol) {
                    return fail(t);
                }
            }
        }
        ModelKind::Foliation(_) => {
            let mut prev: Option<(Arrow, f64)> = None;
            for &t in &grid {
                let (i, j) = (c1.index_at(t), c2.index_at(t));
                let x = c1.segments[i].point(t);
                let y = c2.segments[j].point(t);
                let Some(arrow) = model.arrow_between(&x, &y, tol) else {
                    return fail(t);
                };
                if let Some((r, t_prev)) = &prev {
                    if !holonomy_continues(c1, c2, r, *t_prev, t, tol) {
                        return fail(t);
                    }
                }
                prev = Some((arrow, t));
            }
        }
    }
    IsomorphismReport {
        isomorphic: true,
        failure_time: None,
        samples,
    }
}

fn free_projector(model: &GroupoidModel, x: &Point, tol: f64) -> DMatrix<f64> {
    match model.kind() {
        ModelKind::Action(a) => a.free_plane_projector(x, tol),
        _ => DMatrix::identity(x.len(), x.len()),
    }
}

fn matching_isometries(model: &GroupoidModel, x: &Point, y: &Point, tol: f64) -> Vec<AffineMap> {
    match model.kind() {
        ModelKind::Action(a) => (0..a.finite.len())
            .map(|fi| a.fit_with(&[(x.clone(), y.clone())], &[], fi))
            .filter(|f| f.residual <= tol)
            .map(|f| f.map)
            .collect(),
        ModelKind::Orbifold(o) => o
            .orbit(x)
            .into_iter()
            .filter(|im| (&im.point - y).norm() <= tol)
            .map(|im| im.map)
            .collect(),
        _ => Vec::new(),
    }
}

/// Lifts the previous sample's arrow along the first curve and checks that it
/// lands on the leaf of the second curve's current value.
fn holonomy_continues(c1: &StackyCurve, c2: &StackyCurve, prev: &Arrow, t_prev: f64, t: f64, tol: f64) -> bool {
    let i = c1.index_at(t_prev);
    let seg = c1.segments[i].clone();
    let (d0, d1) = seg.domain();
    if t < d0 || t > d1 {
        return true;
    }
    let model = c1.model();
    let Ok(lift) = model.source_lift(prev, seg.clone(), t_prev, (t_prev, t)) else {
        return false;
    };
    let landed = lift.arrow_at(t, &seg.point(t)).target();
    let y = c2.point(t);
    model.same_orbit(&landed, &y, tol.max(scaled(1e-6, &y)))
}
