//! Geodesics of a quotient: normal geodesics shot in a presentation, gluing,
//! the exponential map, local minimality, strata along curves, minimizer
//! realization, completeness probes and conformal completion.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::curves::{curves_isomorphic, CurveRef, HermiteCurve, StackyCurve, Transition, ISOMORPHISM_SAMPLES};
use crate::error::{GeoError, Result};
use crate::geometry::{geodesic_flow, ExitReason, GeodesicState, ManifoldPatch, Point, DEFAULT_STEP};
use crate::groupoid::{Arrow, GroupoidModel, IsotropyLabel, ModelKind};
use crate::quotient::OrbitGraph;

/// Admissible `‖P v − v‖` for initial velocities.
pub const NORMAL_INPUT_TOL: f64 = 1e-10;
/// Admissible tangential fraction of the velocity along a shot geodesic.
pub const NORMALITY_TOL: f64 = 1e-6;
/// Admissible mismatch of normal speeds when gluing.
pub const JET_NORM_TOL: f64 = 1e-8;
/// Relative accuracy attributed to graph distances in the Gauss check.
pub const GRAPH_RELATIVE_TOL: f64 = 0.02;
pub const GAUSS_EXTRA_TOL: f64 = 0.01;
pub const MINIMIZING_SLACK: f64 = 1e-3;
pub const DEFAULT_T_MAX: f64 = 100.0;
pub const SEARCH_ANGLES_2D: usize = 720;
pub const SEARCH_DIRECTIONS: usize = 2000;
pub const REFINE_STEPS: usize = 20;
pub const CONFORMAL_KERNEL_RADIUS: f64 = 6.0;
/// Integration steps allowed per direction before a probe reports `Budget`.
pub const EXTENSION_STEP_BUDGET: usize = 2_000_000;

const CHUNK: f64 = 1.0;
const CAUCHY_TERMS: usize = 20;
const CAUCHY_SEQUENCES: usize = 12;
const JET_TOL: f64 = 1e-6;
const BLOWUP_BISECTIONS: usize = 8;
const GLUE_OVERLAP: f64 = 1e-2;
const WINDOW_SAMPLES: usize = 6;

/// Initial data of a normal geodesic; it starts at `span.0`.
#[derive(Debug, Clone)]
pub struct GeodesicSpec {
    pub start: Point,
    pub velocity: DVector<f64>,
    pub span: (f64, f64),
}

impl GeodesicSpec {
    pub fn new(model: &GroupoidModel, start: Point, velocity: DVector<f64>, span: (f64, f64)) -> Result<Self> {
        if !model.contains(&start) {
            return Err(GeoError::OutOfDomain {
                point: start.iter().copied().collect(),
            });
        }
        if !(span.0 <= span.1) || !span.0.is_finite() || !span.1.is_finite() {
            return Err(GeoError::InvalidCocycle(format!("bad geodesic span [{}, {}]", span.0, span.1)));
        }
        let off = &velocity - model.normal_project_raw(&start, &velocity);
        let defect = model.patch().norm(&start, &off);
        if defect > NORMAL_INPUT_TOL * model.patch().norm(&start, &velocity).max(1.0) {
            return Err(GeoError::NormalityLoss {
                time: span.0,
                fraction: defect / model.patch().norm(&start, &velocity).max(1e-300),
            });
        }
        Ok(GeodesicSpec { start, velocity, span })
    }

    /// As [`GeodesicSpec::new`] after projecting `velocity` onto the normal space.
    pub fn projected(model: &GroupoidModel, start: Point, velocity: DVector<f64>, span: (f64, f64)) -> Result<Self> {
        let v = model.normal_project(&start, &velocity)?;
        Self::new(model, start, v, span)
    }
}

/// Why extension of a geodesic stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    DomainBoundary,
    BlowUp,
    Budget,
}

fn tangential_fraction(model: &GroupoidModel, s: &GeodesicState) -> f64 {
    let (n, t) = model.normal_tangential_norms(&s.position, &s.velocity);
    let speed = (n * n + t * t).sqrt();
    if speed > 0.0 {
        t / speed
    } else {
        0.0
    }
}

/// Normal geodesic with the given initial data as a one-segment stacky curve.
pub fn shoot(model: &GroupoidModel, spec: &GeodesicSpec) -> Result<StackyCurve> {
    shoot_with_step(model, spec, DEFAULT_STEP)
}

pub fn shoot_with_step(model: &GroupoidModel, spec: &GeodesicSpec, step: f64) -> Result<StackyCurve> {
    let (t0, t1) = spec.span;
    let state0 = GeodesicState::new(spec.start.clone(), spec.velocity.clone(), t0);
    let traj = geodesic_flow(model.patch(), &state0, t1, step)?.into_complete()?;
    for s in &traj.states {
        let fraction = tangential_fraction(model, s);
        if fraction > NORMALITY_TOL {
            return Err(GeoError::NormalityLoss { time: s.time, fraction });
        }
    }
    let mut states = traj.states;
    if states.len() < 2 {
        // zero-length span: a constant piece
        let s = states[0].clone();
        states.push(GeodesicState::new(s.position.clone(), s.velocity.clone(), s.time + 1e-12));
    }
    let curve: CurveRef = Arc::new(HermiteCurve::from_states(&states)?);
    let d = curve.domain();
    StackyCurve::with_tolerance(model.clone(), vec![d], vec![curve], vec![], 1e-6)
}

/// Point and ambient velocity of the segment active at `t`.
fn jet(curve: &StackyCurve, t: f64) -> (Point, DVector<f64>) {
    let i = curve.index_at(t);
    let seg = &curve.segments()[i];
    (seg.point(t), seg.velocity(t))
}

fn flow_piece(model: &GroupoidModel, x: &Point, v: &DVector<f64>, t0: f64, span: (f64, f64)) -> Result<CurveRef> {
    let patch = model.patch();
    let start = GeodesicState::new(x.clone(), v.clone(), t0);
    let back = geodesic_flow(patch, &start, span.0, DEFAULT_STEP)?.into_complete()?;
    let fwd = geodesic_flow(patch, &start, span.1, DEFAULT_STEP)?.into_complete()?;
    let mut states: Vec<GeodesicState> = back.states.into_iter().rev().collect();
    states.pop();
    states.extend(fwd.states);
    Ok(Arc::new(HermiteCurve::from_states(&states)?))
}

/// Glues two geodesics at `t0`, where they must pass through one orbit with
/// arrow-related normal velocities. The result follows `g1` before `t0` and
/// `g2` after it.
pub fn glue(model: &GroupoidModel, g1: &StackyCurve, g2: &StackyCurve, t0: f64) -> Result<StackyCurve> {
    let (a1, b1) = g1.domain();
    let (a2, b2) = g2.domain();
    if !(a1 < t0 && t0 <= b1 && a2 <= t0 && t0 < b2) {
        return Err(GeoError::IncompatibleJet(format!(
            "gluing time {t0} must lie in [{a1}, {b1}] and [{a2}, {b2}] with room on both sides"
        )));
    }
    let (x1, v1) = jet(g1, t0);
    let (x2, v2) = jet(g2, t0);
    let s1 = model.normal_norm_raw(&x1, &v1);
    let s2 = model.normal_norm_raw(&x2, &v2);
    if (s1 - s2).abs() > JET_NORM_TOL * (1.0 + s1) {
        return Err(GeoError::IncompatibleJet(format!("normal speeds {s1} and {s2} differ at t = {t0}")));
    }
    let arrow = model
        .jet_arrow(&x1, &v1, &x2, &v2, JET_TOL)
        .ok_or_else(|| GeoError::IncompatibleJet(format!("no arrow relates the velocities at t = {t0}")))?;

    let gap = |c: &StackyCurve, toward_end: bool| -> f64 {
        let iv = c.intervals();
        let ts: Vec<f64> = iv.iter().flat_map(|(a, b)| [*a, *b]).collect();
        ts.iter()
            .map(|s| s - t0)
            .filter(|d| if toward_end { *d > 0.0 } else { *d < 0.0 })
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min)
    };
    let w = GLUE_OVERLAP
        .min(0.45 * (t0 - a1))
        .min(0.45 * (b2 - t0))
        .min(0.45 * gap(g1, false))
        .min(0.45 * gap(g2, true));
    let w = if w.is_finite() { w } else { GLUE_OVERLAP };

    let piece_a = flow_piece(model, &x1, &v1, t0, (t0 - w, t0 + 0.5 * w))?;
    let piece_b = flow_piece(model, &x2, &v2, t0, (t0 - 0.5 * w, t0 + w))?;
    let head = g1.restrict(a1, t0 - 0.5 * w)?;
    let tail = g2.restrict(t0 + 0.5 * w, b2)?;

    let mut intervals: Vec<(f64, f64)> = head.intervals().to_vec();
    let mut segments: Vec<CurveRef> = head.segments().to_vec();
    let mut transitions: Vec<Transition> = head.transitions().to_vec();
    transitions.push(Transition::Identity);
    intervals.push((t0 - w, t0 + 0.5 * w));
    segments.push(piece_a);
    transitions.push(match &arrow {
        Arrow::Isometry { map, .. } => Transition::Isometry(map.clone()),
        _ => Transition::Implied,
    });
    intervals.push((t0 - 0.5 * w, t0 + w));
    segments.push(piece_b);
    transitions.push(Transition::Identity);
    intervals.extend_from_slice(tail.intervals());
    segments.extend_from_slice(tail.segments());
    transitions.extend_from_slice(tail.transitions());
    StackyCurve::with_tolerance(model.clone(), intervals, segments, transitions, 1e-6)
}

/// `exp([x], v) = α(1)` for the normal geodesic with `α(0) = x`, `α'(0) = v`.
pub fn stacky_exp(model: &GroupoidModel, x: &Point, v: &DVector<f64>) -> Result<Point> {
    if model.patch().norm(x, v) == 0.0 {
        if !model.contains(x) {
            return Err(GeoError::OutOfDomain {
                point: x.iter().copied().collect(),
            });
        }
        return Ok(x.clone());
    }
    let spec = GeodesicSpec::new(model, x.clone(), v.clone(), (0.0, 1.0))?;
    Ok(shoot(model, &spec)?.point(1.0))
}

/// Endpoint of the ambient geodesic flow, or `None` when it leaves the domain.
fn flow_endpoint(patch: &ManifoldPatch, x: &Point, v: &DVector<f64>, t: f64) -> Option<Point> {
    let traj = geodesic_flow(patch, &GeodesicState::new(x.clone(), v.clone(), 0.0), t, DEFAULT_STEP).ok()?;
    traj.exit.is_none().then(|| traj.last().position.clone())
}

/// η-orthonormal basis of the normal space at `x`.
pub fn normal_basis(model: &GroupoidModel, x: &Point) -> Vec<DVector<f64>> {
    let g = model.patch().metric_raw(x);
    let mut out: Vec<DVector<f64>> = Vec::new();
    for i in 0..model.dim() {
        let mut w = model.normal_project_raw(x, &DVector::from_fn(model.dim(), |k, _| f64::from(k == i)));
        for e in &out {
            let c = (e.transpose() * &g * &w)[(0, 0)];
            w -= e * c;
        }
        let n = (w.transpose() * &g * &w)[(0, 0)].max(0.0).sqrt();
        if n > 1e-9 {
            out.push(w / n);
        }
    }
    out
}

fn combine(basis: &[DVector<f64>], coeffs: &[f64]) -> DVector<f64> {
    let mut v = DVector::zeros(basis[0].len());
    for (e, c) in basis.iter().zip(coeffs) {
        v += e * *c;
    }
    v
}

fn random_unit_coeffs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let c: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let n = c.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return c.into_iter().map(|a| a / n).collect();
        }
    }
}

/// One sample of [`gauss_check`].
#[derive(Debug, Clone, Serialize)]
pub struct GaussSample {
    pub velocity: Vec<f64>,
    pub norm: f64,
    pub distance: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussReport {
    pub base: Vec<f64>,
    pub eps: f64,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub samples: Vec<GaussSample>,
}

/// Compares `d_N([x], [exp v])` with `‖v‖` for random normal `v` with
/// `‖v‖ ∈ [ε/2, ε]`.
pub fn gauss_check(graph: &OrbitGraph, x: &Point, eps: f64, n: usize, seed: u64) -> Result<GaussReport> {
    let model = graph.model();
    if !model.contains(x) {
        return Err(GeoError::OutOfDomain {
            point: x.iter().copied().collect(),
        });
    }
    let basis = normal_basis(model, x);
    if basis.is_empty() {
        return Err(GeoError::InvalidModel("the normal space at the base point is trivial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let velocities: Vec<DVector<f64>> = (0..n)
        .map(|_| {
            let c = random_unit_coeffs(&mut rng, basis.len());
            combine(&basis, &c) * rng.gen_range(0.5 * eps..=eps)
        })
        .collect();
    let samples = velocities
        .par_iter()
        .map(|v| {
            let norm = model.patch().norm(x, v);
            let y = stacky_exp(model, x, v)?;
            let distance = graph.distance(x, &y)?.value;
            Ok(GaussSample {
                velocity: v.iter().copied().collect(),
                norm,
                distance,
                relative_error: (distance - norm).abs() / norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_relative_error = samples.iter().map(|s| s.relative_error).fold(0.0, f64::max);
    let tolerance = GRAPH_RELATIVE_TOL + GAUSS_EXTRA_TOL;
    Ok(GaussReport {
        base: x.iter().copied().collect(),
        eps,
        max_relative_error,
        tolerance,
        pass: max_relative_error <= tolerance,
        samples,
    })
}

/// Conservative injectivity scale at `x`: clearance from the domain boundary,
/// from the chart bounds and from larger isotropy strata.
pub fn injectivity_estimate(model: &GroupoidModel, x: &Point) -> f64 {
    let (lo, hi) = model.patch().bounds();
    let box_clearance = x
        .iter()
        .zip(lo.iter().zip(hi.iter()))
        .map(|(c, (l, h))| (c - l).min(h - c))
        .fold(f64::INFINITY, f64::min);
    model
        .patch()
        .clearance(x)
        .min(box_clearance)
        .min(model.stratum_distance(x))
        .max(0.0)
}

/// Default window for [`is_minimizing_at`]: a tenth of the injectivity estimate.
pub fn default_window(model: &GroupoidModel, x: &Point) -> f64 {
    0.1 * injectivity_estimate(model, x)
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizingReport {
    pub t0: f64,
    pub eps: f64,
    pub max_error: f64,
    pub tolerance: f64,
    pub minimizing: bool,
    /// Parameters of the worst pair.
    pub worst_pair: (f64, f64),
}

fn window_times(curve: &StackyCurve, t0: f64, eps: f64) -> Result<(Vec<f64>, f64)> {
    let (a, b) = curve.domain();
    let speed = curve.normal_speed(t0)?;
    if speed <= 1e-12 {
        return Ok((vec![], speed));
    }
    let h = eps / speed;
    let mut ts = Vec::new();
    for k in -(WINDOW_SAMPLES as i64)..=WINDOW_SAMPLES as i64 {
        let t = t0 + h * k as f64 / WINDOW_SAMPLES as f64;
        if t >= a && t <= b {
            ts.push(t);
        }
    }
    Ok((ts, speed))
}

fn minimizing_over(
    graph: &OrbitGraph,
    curve: &StackyCurve,
    t0: f64,
    eps: Option<f64>,
    pairs: impl Fn(&[f64]) -> Vec<(f64, f64)>,
) -> Result<MinimizingReport> {
    let model = graph.model();
    let eps = eps.unwrap_or_else(|| default_window(model, &curve.point(t0)));
    let tolerance = 2.0 * graph.resolution() + MINIMIZING_SLACK;
    let (ts, _) = window_times(curve, t0, eps)?;
    let mut report = MinimizingReport {
        t0,
        eps,
        max_error: 0.0,
        tolerance,
        minimizing: false,
        worst_pair: (t0, t0),
    };
    if ts.len() < 2 {
        // stationary in the quotient: not a unit-speed curve near t0
        report.max_error = f64::INFINITY;
        return Ok(report);
    }
    let errors = pairs(&ts)
        .into_par_iter()
        .map(|(s, t)| {
            let ell = curve.length_between(s.min(t), s.max(t))?;
            let d = graph.distance(&curve.point(s), &curve.point(t))?.value;
            Ok(((d - ell).abs(), (s, t)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (e, pair) in errors {
        if e > report.max_error {
            report.max_error = e;
            report.worst_pair = pair;
        }
    }
    report.minimizing = report.max_error <= tolerance;
    Ok(report)
}

/// Checks `d_N(α(t), α(t0)) = |t − t0|` after unit-speed renormalization for
/// `t` within arc length `eps` of `t0`.
pub fn is_minimizing_at(graph: &OrbitGraph, curve: &StackyCurve, t0: f64, eps: Option<f64>) -> Result<MinimizingReport> {
    minimizing_over(graph, curve, t0, eps, |ts| ts.iter().filter(|t| **t != t0).map(|t| (*t, t0)).collect())
}

/// Two-sided variant: every pair of times in the window must be at quotient
/// distance equal to the arc length between them.
pub fn is_minimizing_on_window(
    graph: &OrbitGraph,
    curve: &StackyCurve,
    t0: f64,
    eps: Option<f64>,
) -> Result<MinimizingReport> {
    minimizing_over(graph, curve, t0, eps, |ts| {
        let mut out = Vec::new();
        for (i, s) in ts.iter().enumerate() {
            for t in &ts[i + 1..] {
                out.push((*s, *t));
            }
        }
        out
    })
}

/// Isotropy label of the curve's points on a parameter grid.
pub fn stratum_trace(curve: &StackyCurve, grid: &[f64]) -> Vec<(f64, IsotropyLabel)> {
    grid.iter()
        .map(|t| (*t, curve.model().isotropy_label(&curve.point(*t))))
        .collect()
}

/// A point of the orbit of `x` other than `x` itself when one is easy to
/// reach, else `x`.
pub fn translated_representative(model: &GroupoidModel, x: &Point) -> Point {
    let images = model.discrete_images(x);
    if images.len() > 1 {
        return images[1].clone();
    }
    for e in model.orthonormal_orbit_basis(x) {
        let toward = x + e * 0.5;
        if let Some(arrow) = model.nearest_orbit_arrow(x, &toward) {
            let y = arrow.target();
            if model.contains(&y) && (&y - x).norm() > 1e-6 {
                return y;
            }
        }
    }
    x.clone()
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub start: Vec<f64>,
    pub translated_start: Vec<f64>,
    pub isomorphic: bool,
    pub failure_time: Option<f64>,
}

/// Shoots from `spec` and from the arrow-translated data at `target` and
/// compares the two curves up to isomorphism.
pub fn uniqueness_probe(model: &GroupoidModel, spec: &GeodesicSpec, target: &Point) -> Result<UniquenessReport> {
    let arrow = model
        .arrow_between(&spec.start, target, 1e-8 * (1.0 + target.norm()))
        .ok_or_else(|| GeoError::IncompatibleJet("the translated start is not in the orbit of the start".into()))?;
    let v = model.apply_arrow_differential(&arrow, &spec.start, &spec.velocity)?;
    let v = model.normal_project(target, &v)?;
    let other = GeodesicSpec::new(model, target.clone(), v, spec.span)?;
    let c1 = shoot(model, spec)?;
    let c2 = shoot(model, &other)?;
    let report = curves_isomorphic(&c1, &c2, ISOMORPHISM_SAMPLES, 1e-6);
    Ok(UniquenessReport {
        start: spec.start.iter().copied().collect(),
        translated_start: target.iter().copied().collect(),
        isomorphic: report.isomorphic,
        failure_time: report.failure_time,
    })
}

/// A realized minimizing geodesic between two orbits.
#[derive(Debug, Clone)]
pub struct Realization {
    pub curve: StackyCurve,
    pub length: f64,
    pub distance: f64,
    pub landing_error: f64,
    pub tolerance: f64,
    pub initial_velocity: DVector<f64>,
}

fn search_directions(k: usize, seed: u64) -> Vec<Vec<f64>> {
    match k {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..SEARCH_ANGLES_2D)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / SEARCH_ANGLES_2D as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            let n = SEARCH_DIRECTIONS;
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..SEARCH_DIRECTIONS).map(|_| random_unit_coeffs(&mut rng, k)).collect()
        }
    }
}

fn normalized(c: &[f64]) -> Vec<f64> {
    let n = c.iter().map(|a| a * a).sum::<f64>().sqrt();
    c.iter().map(|a| a / n).collect()
}

/// Finds a normal geodesic from `x` of length `d_N([x], [y])` landing in `[y]`.
/// `budget` caps the number of trial shots.
pub fn realize_minimizer(graph: &OrbitGraph, x: &Point, y: &Point, budget: usize) -> Result<Realization> {
    let model = graph.model();
    let patch = model.patch();
    let target = graph.distance(x, y)?;
    let r = target.value;
    let tolerance = 2.0 * graph.resolution() + MINIMIZING_SLACK;
    if r == 0.0 {
        let curve = StackyCurve::single(model.clone(), Arc::new(crate::curves::FnCurve::line(x.clone(), DVector::zeros(x.len()), (0.0, 1.0), 0.0)))?;
        return Ok(Realization {
            curve,
            length: 0.0,
            distance: 0.0,
            landing_error: 0.0,
            tolerance,
            initial_velocity: DVector::zeros(x.len()),
        });
    }
    let basis = normal_basis(model, x);
    if basis.is_empty() {
        return Err(GeoError::NotRealized {
            landing_error: r,
            tolerance,
        });
    }
    let field = graph.distance_field(y);
    let objective = |c: &[f64]| -> f64 {
        let u = combine(&basis, c);
        flow_endpoint(patch, x, &u, r).map_or(f64::INFINITY, |z| field.to(&z))
    };
    let mut dirs = search_directions(basis.len(), 0x5eed);
    dirs.truncate(budget.max(1));
    let scores: Vec<f64> = dirs.par_iter().map(|c| objective(c)).collect();
    let mut used = dirs.len();
    let (mut best, mut best_score) = dirs
        .iter()
        .zip(&scores)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(c, s)| (c.clone(), *s))
        .unwrap();
    let mut h = match basis.len() {
        1 => 0.0,
        2 => 2.0 * PI / SEARCH_ANGLES_2D as f64,
        _ => (4.0 * PI / SEARCH_DIRECTIONS as f64).sqrt(),
    };
    for _ in 0..REFINE_STEPS {
        if h == 0.0 || used >= budget {
            break;
        }
        let trials: Vec<Vec<f64>> = (0..basis.len())
            .flat_map(|i| {
                [-1.0, 1.0].map(|s| {
                    let mut c = best.clone();
                    c[i] += s * h;
                    normalized(&c)
                })
            })
            .collect();
        used += trials.len();
        let scored: Vec<f64> = trials.par_iter().map(|c| objective(c)).collect();
        let improved = trials
            .into_iter()
            .zip(scored)
            .filter(|(_, s)| *s < best_score)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match improved {
            Some((c, s)) => {
                best = c;
                best_score = s;
            }
            None => h *= 0.5,
        }
    }
    let u = combine(&basis, &best);
    let spec = GeodesicSpec::projected(model, x.clone(), u.clone(), (0.0, r))?;
    let curve = match shoot(model, &spec) {
        Ok(c) => c,
        Err(GeoError::DomainExit { .. }) => {
            return Err(GeoError::NotRealized {
                landing_error: f64::INFINITY,
                tolerance,
            })
        }
        Err(e) => return Err(e),
    };
    let landing_error = graph.distance(&curve.point(r), y)?.value;
    if landing_error > tolerance {
        return Err(GeoError::NotRealized {
            landing_error,
            tolerance,
        });
    }
    let length = curve.length()?;
    Ok(Realization {
        curve,
        length,
        distance: r,
        landing_error,
        tolerance,
        initial_velocity: spec.velocity,
    })
}

/// Extension of one geodesic in both directions.
#[derive(Debug, Clone, Serialize)]
pub struct ExtensionRecord {
    pub start: Vec<f64>,
    pub velocity: Vec<f64>,
    pub forward_time: f64,
    pub backward_time: f64,
    pub stop: Option<StopReason>,
}

/// A Cauchy-like sequence running into the frontier of the domain.
#[derive(Debug, Clone, Serialize)]
pub struct CauchyRecord {
    pub start: Vec<f64>,
    pub cauchy: bool,
    /// Largest clearance of a representative of the last term.
    pub limit_clearance: f64,
    pub converges: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompletenessReport {
    pub t_max: f64,
    pub resolution: f64,
    /// Smallest time reached in either direction over all probed geodesics.
    pub max_extension_time: f64,
    pub exit_reason: Option<StopReason>,
    pub geodesically_complete: bool,
    pub cauchy_complete: bool,
    pub agree: bool,
    pub extensions: Vec<ExtensionRecord>,
    pub cauchy: Vec<CauchyRecord>,
}

/// Flows from `(x, v)` for time `t_max` (negative for backward) in chunks and
/// reports the time reached and why it stopped short.
pub fn extend(patch: &ManifoldPatch, x: &Point, v: &DVector<f64>, t_max: f64) -> (f64, Option<StopReason>) {
    let dir = t_max.signum();
    let mut state = GeodesicState::new(x.clone(), v.clone(), 0.0);
    let mut steps = 0usize;
    while state.time.abs() < t_max.abs() {
        let t_end = dir * (state.time.abs() + CHUNK).min(t_max.abs());
        steps += ((t_end - state.time).abs() / DEFAULT_STEP).ceil() as usize;
        if steps > EXTENSION_STEP_BUDGET {
            return (state.time.abs(), Some(StopReason::Budget));
        }
        match geodesic_flow(patch, &state, t_end, DEFAULT_STEP) {
            Ok(traj) => {
                if let Some(exit) = traj.exit {
                    let reason = match exit.reason {
                        ExitReason::DomainBoundary => StopReason::DomainBoundary,
                        ExitReason::BlowUp => StopReason::BlowUp,
                    };
                    return (exit.time.abs(), Some(reason));
                }
                state = traj.last().clone();
            }
            Err(_) => {
                // drift detected inside the chunk: bisect for the last good time
                let (mut good, mut bad) = (state.time, t_end);
                for _ in 0..BLOWUP_BISECTIONS {
                    let mid = 0.5 * (good + bad);
                    if geodesic_flow(patch, &state, mid, DEFAULT_STEP).is_ok_and(|t| t.exit.is_none()) {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
                return (good.abs(), Some(StopReason::BlowUp));
            }
        }
    }
    (t_max.abs(), None)
}

/// Time at which the geodesic from `(x, v)` leaves the domain, capped at `t_max`.
pub fn escape_time(model: &GroupoidModel, x: &Point, v: &DVector<f64>, t_max: f64) -> f64 {
    extend(model.patch(), x, v, t_max).0
}

/// Random unit-speed normal geodesic data at graph nodes away from the frontier.
pub fn random_specs(graph: &OrbitGraph, count: usize, t_max: f64, seed: u64) -> Vec<GeodesicSpec> {
    let model = graph.model();
    let delta = graph.resolution();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<&Point> = graph
        .nodes()
        .iter()
        .filter(|x| injectivity_estimate(model, x) > 4.0 * delta)
        .collect();
    candidates.shuffle(&mut rng);
    let mut out = Vec::new();
    for x in candidates {
        if out.len() >= count {
            break;
        }
        let basis = normal_basis(model, x);
        if basis.is_empty() {
            continue;
        }
        let c = random_unit_coeffs(&mut rng, basis.len());
        if let Ok(spec) = GeodesicSpec::new(model, x.clone(), combine(&basis, &c), (0.0, t_max)) {
            out.push(spec);
        }
    }
    out
}

fn clearance_gradient(patch: &ManifoldPatch, x: &Point, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[i] += h;
        b[i] -= h;
        (patch.clearance(&a) - patch.clearance(&b)) / (2.0 * h)
    })
}

fn anchors(graph: &OrbitGraph, count: usize) -> Vec<Point> {
    let patch = graph.model().patch();
    let mut nodes: Vec<(f64, &Point)> = graph.nodes().iter().map(|x| (patch.clearance(x).min(1e6), x)).collect();
    nodes.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| lex(a.1, b.1)));
    let mut out: Vec<Point> = Vec::new();
    let sep = 0.25 * patch.diameter();
    for (_, x) in nodes {
        if out.len() >= count {
            break;
        }
        if out.iter().all(|a| (a - x).norm() >= sep) {
            out.push(x.clone());
        }
    }
    out
}

fn lex(a: &Point, b: &Point) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn best_representative_clearance(model: &GroupoidModel, x: &Point, anchors: &[Point]) -> f64 {
    let patch = model.patch();
    let mut best = patch.clearance(x);
    for z in model.discrete_images(x) {
        best = best.max(patch.clearance(&z));
    }
    for a in anchors {
        if let Some(arrow) = model.nearest_orbit_arrow(x, a) {
            let z = arrow.target();
            if model.contains(&z) {
                best = best.max(patch.clearance(&z));
            }
        }
    }
    best
}

/// Cauchy sequences heading into the frontier of the domain; the quotient is
/// reported incomplete when one has no limit there.
fn cauchy_probe(graph: &OrbitGraph, seed: u64) -> Vec<CauchyRecord> {
    let model = graph.model();
    let patch = model.patch();
    let delta = graph.resolution();
    let mut frontier: Vec<&Point> = graph
        .nodes()
        .iter()
        .filter(|x| patch.clearance(x) < 1.5 * delta)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    frontier.shuffle(&mut rng);
    frontier.truncate(CAUCHY_SEQUENCES);
    let anchor_points = anchors(graph, 8);
    frontier
        .par_iter()
        .filter_map(|b0| {
            let c0 = patch.clearance(b0);
            let grad = clearance_gradient(patch, b0, 0.25 * delta.min(c0.max(1e-9)));
            let n = grad.norm();
            if !(n > 0.0) || !c0.is_finite() {
                return None;
            }
            let u = -grad / n;
            let terms: Vec<Point> = (0..=CAUCHY_TERMS)
                .map(|k| *b0 + &u * (c0 * (1.0 - 0.5f64.powi(k as i32 + 1))))
                .take_while(|x| model.contains(x))
                .collect();
            if terms.len() < 3 {
                return None;
            }
            let steps: Vec<f64> = terms
                .windows(2)
                .map(|w| crate::graph::chord_length(patch, &w[0], &w[1]))
                .collect();
            let total: f64 = steps.iter().sum();
            let tail: f64 = steps[steps.len() / 2..].iter().sum();
            let cauchy = total.is_finite() && tail <= 0.01 * total;
            let last = terms.last().unwrap();
            let limit_clearance = best_representative_clearance(model, last, &anchor_points);
            Some(CauchyRecord {
                start: b0.iter().copied().collect(),
                cauchy,
                limit_clearance,
                converges: !cauchy || limit_clearance >= 2.0 * delta,
            })
        })
        .collect()
}

/// Compares geodesic completeness (extension of `specs` to `±t_max`) with
/// metric completeness of the quotient (Cauchy sequences into the frontier).
pub fn completeness_probe(graph: &OrbitGraph, specs: &[GeodesicSpec], t_max: f64, seed: u64) -> CompletenessReport {
    let model = graph.model();
    let patch = model.patch();
    let extensions: Vec<ExtensionRecord> = specs
        .par_iter()
        .map(|s| {
            let (f, stop_f) = extend(patch, &s.start, &s.velocity, t_max);
            let (b, stop_b) = extend(patch, &s.start, &s.velocity, -t_max);
            ExtensionRecord {
                start: s.start.iter().copied().collect(),
                velocity: s.velocity.iter().copied().collect(),
                forward_time: f,
                backward_time: b,
                stop: stop_f.or(stop_b),
            }
        })
        .collect();
    let mut max_extension_time = t_max;
    let mut exit_reason = None;
    for e in &extensions {
        let reached = e.forward_time.min(e.backward_time);
        if e.stop.is_some() && reached <= max_extension_time {
            max_extension_time = reached;
            exit_reason = e.stop;
        }
    }
    let geodesically_complete = extensions.iter().all(|e| e.stop.is_none());
    let cauchy = cauchy_probe(graph, seed);
    let cauchy_complete = cauchy.iter().all(|c| c.converges);
    CompletenessReport {
        t_max,
        resolution: graph.resolution(),
        max_extension_time,
        exit_reason,
        geodesically_complete,
        cauchy_complete,
        agree: geodesically_complete == cauchy_complete,
        extensions,
        cauchy,
    }
}

type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Conformally rescaled presentation `f² η` with `f ≥ 1/R`, `R` the radius of
/// compact quotient balls.
#[derive(Clone)]
pub struct ConformalCompletion {
    pub model: GroupoidModel,
    pub min_radius: f64,
    pub frontier_nodes: usize,
    radius: ScalarFn,
    factor: ScalarFn,
}

impl std::fmt::Debug for ConformalCompletion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConformalCompletion")
            .field("model", &self.model)
            .field("min_radius", &self.min_radius)
            .field("frontier_nodes", &self.frontier_nodes)
            .finish()
    }
}

/// One curve in [`ConformalCompletion::length_bound_check`].
#[derive(Debug, Clone, Serialize)]
pub struct LengthBound {
    pub length: f64,
    pub scaled_length: f64,
    pub radius: f64,
    pub bound: f64,
    pub pass: bool,
}

impl ConformalCompletion {
    /// Orbit-constant lower estimate of the compact-ball radius at `x`.
    pub fn radius(&self, x: &Point) -> f64 {
        (self.radius)(x)
    }

    pub fn factor(&self, x: &Point) -> f64 {
        (self.factor)(x)
    }

    /// Checks `ℓ_{fη}(c) ≥ ℓ_η(c) / (R(c(0)) + ℓ_η(c))` up to `rel_tol`.
    pub fn length_bound_check(&self, original: &GroupoidModel, curves: &[CurveRef], rel_tol: f64) -> Result<Vec<LengthBound>> {
        curves
            .iter()
            .map(|c| {
                let length = StackyCurve::single(original.clone(), c.clone())?.length()?;
                let scaled_length = StackyCurve::single(self.model.clone(), c.clone())?.length()?;
                let radius = self.radius(&c.point(c.domain().0));
                let bound = length / (radius + length);
                Ok(LengthBound {
                    length,
                    scaled_length,
                    radius,
                    bound,
                    pass: scaled_length >= (1.0 - rel_tol) * bound,
                })
            })
            .collect()
    }
}

/// `max(a, b)` rounded off over a width `k`; never below the true maximum.
fn smooth_max(a: f64, b: f64, k: f64) -> f64 {
    0.5 * (a + b + ((a - b).powi(2) + k * k).sqrt())
}

fn canonical_points(model: &GroupoidModel, x: &Point, anchor: &Point) -> Vec<Point> {
    let base = match model.kind() {
        ModelKind::Action(_) | ModelKind::Submersion(_) if !model.orthonormal_orbit_basis(x).is_empty() => model
            .nearest_orbit_arrow(x, anchor)
            .map(|a| a.target())
            .filter(|z| model.contains(z))
            .unwrap_or_else(|| x.clone()),
        _ => x.clone(),
    };
    model.discrete_images(&base)
}

/// Builds the conformal factor from graph estimates of `R` (multi-source
/// distances from the frontier, seeded with the frontier clearance) smoothed
/// by a Gaussian kernel of width `2δ`, tapered to zero at the kernel reach
/// so the factor stays smooth.
pub fn conformal_completion(graph: &OrbitGraph) -> Result<ConformalCompletion> {
    let model = graph.model().clone();
    if !model.is_proper() {
        return Err(GeoError::EstimationFailed("conformal completion needs a proper presentation".into()));
    }
    let patch = model.patch().clone();
    let delta = graph.resolution();
    let nodes: Vec<Point> = graph.nodes().to_vec();
    let lipschitz: Vec<f64> = nodes
        .iter()
        .map(|x| patch.metric_raw(x).symmetric_eigenvalues().max().max(0.0).sqrt())
        .collect();
    let seeds: Vec<(usize, f64)> = nodes
        .iter()
        .enumerate()
        .filter(|(_, x)| patch.clearance(x) < 1.5 * delta)
        .map(|(i, x)| {
            let lmin = patch.metric_raw(x).symmetric_eigenvalues().min().max(0.0).sqrt();
            (i, patch.clearance(x) * lmin)
        })
        .collect();
    let frontier_nodes = seeds.len();
    let r_nodes: Vec<f64> = if seeds.is_empty() {
        vec![f64::INFINITY; nodes.len()]
    } else {
        graph.multi_source_distances(&seeds)
    };
    let min_radius = r_nodes.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_radius > 0.0) {
        return Err(GeoError::EstimationFailed(format!(
            "compact-ball radius estimate {min_radius} is not positive at resolution {delta}"
        )));
    }
    let floor = 0.5 * min_radius;
    let width = 2.0 * delta;
    let reach = CONFORMAL_KERNEL_RADIUS * delta;
    let anchor = {
        let (lo, hi) = patch.bounds();
        let mut a = (lo + hi) * 0.5;
        a[0] += 0.25 * (hi[0] - lo[0]);
        a
    };
    let graph_nodes = Arc::new(nodes);
    let r_nodes = Arc::new(r_nodes);
    let lipschitz = Arc::new(lipschitz);
    let hash_graph = graph.clone();
    let raw_radius = move |z: &Point| -> f64 {
        let near = hash_graph.nodes_within(z, reach);
        let (mut num, mut den) = (0.0, 0.0);
        for i in near {
            if !r_nodes[i].is_finite() {
                continue;
            }
            let d = (z - &graph_nodes[i]).norm();
            let taper = (1.0 - (d / reach).powi(2)).max(0.0).powi(3);
            let w = (-(d * d) / (2.0 * width * width)).exp() * taper;
            num += w * (r_nodes[i] - d * lipschitz[i]);
            den += w;
        }
        if den > 0.0 {
            smooth_max(num / den, floor, 0.1 * floor)
        } else if r_nodes.iter().all(|r| r.is_infinite()) {
            f64::INFINITY
        } else {
            floor
        }
    };
    let model_c = model.clone();
    let radius: ScalarFn = Arc::new(move |x: &Point| {
        canonical_points(&model_c, x, &anchor)
            .iter()
            .map(&raw_radius)
            .fold(f64::INFINITY, f64::min)
    });
    let r = radius.clone();
    let factor: ScalarFn = Arc::new(move |x: &Point| 1.0 + 1.0 / r(x));
    let r = radius.clone();
    let scaled = patch.conformally_scaled(format!("{}_conformal", patch.name()), factor.clone(), Arc::new(move |x: &Point| r(x)));
    Ok(ConformalCompletion {
        model: model.with_patch(scaled),
        min_radius,
        frontier_nodes,
        radius,
        factor,
    })
}

#[cfg(test)]
mod tests;
