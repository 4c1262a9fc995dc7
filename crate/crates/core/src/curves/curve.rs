use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{GeoError, Result};
use crate::expr::Expr;
use crate::geometry::{GeodesicState, Point};
use crate::groupoid::AffineMap;

/// A parametrized curve in a chart.
pub trait Curve: Send + Sync + fmt::Debug {
    /// Parameter interval on which the curve is defined.
    fn domain(&self) -> (f64, f64);
    fn point(&self, t: f64) -> Point;
    fn velocity(&self, t: f64) -> DVector<f64>;
    /// Parameters where the velocity may fail to be smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

pub type CurveRef = Arc<dyn Curve>;

/// Five-point central difference of a point map.
pub fn stencil_derivative(f: impl Fn(f64) -> Point, t: f64, h: f64) -> DVector<f64> {
    (f(t - 2.0 * h) - f(t + 2.0 * h) + (f(t + h) - f(t - h)) * 8.0) / (12.0 * h)
}

const STENCIL_STEP: f64 = 1e-3;

type PointFn = Arc<dyn Fn(f64) -> Point + Send + Sync>;

/// Closed-form curve from closures.
#[derive(Clone)]
pub struct FnCurve {
    name: String,
    domain: (f64, f64),
    point: PointFn,
    velocity: Option<PointFn>,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for FnCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnCurve({:?} on {:?})", self.name, self.domain)
    }
}

impl FnCurve {
    pub fn new(name: impl Into<String>, domain: (f64, f64), point: PointFn, velocity: Option<PointFn>) -> Self {
        FnCurve {
            name: name.into(),
            domain,
            point,
            velocity,
            breakpoints: Vec::new(),
        }
    }

    pub fn with_breakpoints(mut self, b: Vec<f64>) -> Self {
        self.breakpoints = b;
        self
    }

    /// Constant-velocity line `x + (t - t0) v`.
    pub fn line(x: Point, v: DVector<f64>, domain: (f64, f64), t0: f64) -> Self {
        let vv = v.clone();
        FnCurve::new(
            "line",
            domain,
            Arc::new(move |t| &x + &v * (t - t0)),
            Some(Arc::new(move |_| vv.clone())),
        )
    }
}

impl Curve for FnCurve {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn point(&self, t: f64) -> Point {
        (self.point)(t)
    }
    fn velocity(&self, t: f64) -> DVector<f64> {
        match &self.velocity {
            Some(v) => v(t),
            None => stencil_derivative(|s| (self.point)(s), t, STENCIL_STEP),
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

/// Curve given by one expression in `t` per coordinate, with optional
/// derivative expressions.
#[derive(Debug, Clone)]
pub struct ExprCurve {
    domain: (f64, f64),
    components: Vec<Expr>,
    derivatives: Option<Vec<Expr>>,
}

impl ExprCurve {
    pub fn parse(components: &[String], derivatives: Option<&[String]>, domain: (f64, f64)) -> Result<Self> {
        let comps = components
            .iter()
            .map(|s| Expr::parse(s, &["t"]))
            .collect::<Result<Vec<_>>>()?;
        let ders = match derivatives {
            Some(d) => {
                if d.len() != comps.len() {
                    return Err(GeoError::InvalidExpression(format!(
                        "{} derivative expressions for {} components",
                        d.len(),
                        comps.len()
                    )));
                }
                Some(d.iter().map(|s| Expr::parse(s, &["t"])).collect::<Result<Vec<_>>>()?)
            }
            None => None,
        };
        Ok(ExprCurve {
            domain,
            components: comps,
            derivatives: ders,
        })
    }

    fn eval(es: &[Expr], t: f64) -> DVector<f64> {
        DVector::from_iterator(es.len(), es.iter().map(|e| e.eval(&[t])))
    }
}

impl Curve for ExprCurve {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn point(&self, t: f64) -> Point {
        Self::eval(&self.components, t)
    }
    fn velocity(&self, t: f64) -> DVector<f64> {
        match &self.derivatives {
            Some(d) => Self::eval(d, t),
            None => stencil_derivative(|s| Self::eval(&self.components, s), t, STENCIL_STEP),
        }
    }
}

/// Concatenation of curves on adjacent parameter intervals; piece `k` is used
/// on `[start_k, start_{k+1})`.
#[derive(Debug, Clone)]
pub struct PiecewiseCurve {
    starts: Vec<f64>,
    end: f64,
    pieces: Vec<CurveRef>,
}

impl PiecewiseCurve {
    pub fn new(pieces: Vec<(f64, CurveRef)>, end: f64) -> Result<Self> {
        if pieces.is_empty() || pieces.windows(2).any(|w| w[0].0 >= w[1].0) || pieces.last().unwrap().0 >= end {
            return Err(GeoError::InvalidCocycle(
                "piecewise curve needs increasing piece starts".into(),
            ));
        }
        let (starts, pieces) = pieces.into_iter().unzip();
        Ok(PiecewiseCurve { starts, end, pieces })
    }

    fn piece(&self, t: f64) -> &CurveRef {
        let k = self.starts.partition_point(|s| *s <= t).max(1) - 1;
        &self.pieces[k]
    }
}

impl Curve for PiecewiseCurve {
    fn domain(&self) -> (f64, f64) {
        (self.starts[0], self.end)
    }
    fn point(&self, t: f64) -> Point {
        self.piece(t).point(t)
    }
    fn velocity(&self, t: f64) -> DVector<f64> {
        self.piece(t).velocity(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.starts[1..].to_vec();
        for p in &self.pieces {
            b.extend(p.breakpoints());
        }
        b.sort_by(f64::total_cmp);
        b
    }
}

/// Cubic Hermite interpolation of sampled positions and velocities.
#[derive(Debug, Clone)]
pub struct HermiteCurve {
    times: Vec<f64>,
    points: Vec<Point>,
    velocities: Vec<DVector<f64>>,
}

impl HermiteCurve {
    pub fn new(times: Vec<f64>, points: Vec<Point>, velocities: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != points.len() || times.len() != velocities.len() {
            return Err(GeoError::InvalidCocycle("Hermite curve needs at least two samples".into()));
        }
        // accept decreasing samples (backward integration) by reversing
        let (times, points, velocities) = if times[1] < times[0] {
            let mut t = times;
            let mut p = points;
            let mut v = velocities;
            t.reverse();
            p.reverse();
            v.reverse();
            (t, p, v)
        } else {
            (times, points, velocities)
        };
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeoError::InvalidCocycle("Hermite sample times must be monotone".into()));
        }
        Ok(HermiteCurve {
            times,
            points,
            velocities,
        })
    }

    pub fn from_states(states: &[GeodesicState]) -> Result<Self> {
        Self::new(
            states.iter().map(|s| s.time).collect(),
            states.iter().map(|s| s.position.clone()).collect(),
            states.iter().map(|s| s.velocity.clone()).collect(),
        )
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let n = self.times.len();
        let k = self.times.partition_point(|s| *s <= t).clamp(1, n - 1) - 1;
        let h = self.times[k + 1] - self.times[k];
        (k, (t - self.times[k]) / h, h)
    }

    pub fn samples(&self) -> (&[f64], &[Point], &[DVector<f64>]) {
        (&self.times, &self.points, &self.velocities)
    }
}

impl Curve for HermiteCurve {
    fn domain(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }
    fn point(&self, t: f64) -> Point {
        let (k, s, h) = self.locate(t);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.points[k] * h00
            + &self.velocities[k] * (h10 * h)
            + &self.points[k + 1] * h01
            + &self.velocities[k + 1] * (h11 * h)
    }
    fn velocity(&self, t: f64) -> DVector<f64> {
        let (k, s, h) = self.locate(t);
        let s2 = s * s;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        (&self.points[k] * d00 + &self.points[k + 1] * d01) / h
            + &self.velocities[k] * d10
            + &self.velocities[k + 1] * d11
    }
}

/// Natural cubic spline through a table of samples, one spline per coordinate.
#[derive(Debug, Clone)]
pub struct SplineCurve {
    times: Vec<f64>,
    values: Vec<Point>,
    second: Vec<DVector<f64>>,
}

impl SplineCurve {
    pub fn new(times: Vec<f64>, values: Vec<Point>) -> Result<Self> {
        let n = times.len();
        if n < 2 || values.len() != n || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeoError::InvalidCocycle(
                "sample table needs at least two rows with increasing t".into(),
            ));
        }
        let dim = values[0].len();
        let mut second = vec![DVector::zeros(dim); n];
        if n > 2 {
            // tridiagonal solve (Thomas) for interior second derivatives
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![DVector::zeros(dim); m];
            for i in 0..m {
                let h0 = times[i + 1] - times[i];
                let h1 = times[i + 2] - times[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = ((&values[i + 2] - &values[i + 1]) / h1 - (&values[i + 1] - &values[i]) / h0) * 6.0;
            }
            for i in 1..m {
                let lower = times[i + 1] - times[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                let prev = rhs[i - 1].clone();
                rhs[i] -= prev * w;
            }
            let mut sol = vec![DVector::zeros(dim); m];
            sol[m - 1] = &rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                sol[i] = (&rhs[i] - &sol[i + 1] * upper[i]) / diag[i];
            }
            for i in 0..m {
                second[i + 1] = sol[i].clone();
            }
        }
        Ok(SplineCurve {
            times,
            values,
            second,
        })
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        let k = self.times.partition_point(|s| *s <= t).clamp(1, n - 1) - 1;
        (k, self.times[k + 1] - self.times[k])
    }
}

impl Curve for SplineCurve {
    fn domain(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }
    fn point(&self, t: f64) -> Point {
        let (k, h) = self.locate(t);
        let a = (self.times[k + 1] - t) / h;
        let b = (t - self.times[k]) / h;
        &self.values[k] * a
            + &self.values[k + 1] * b
            + (&self.second[k] * (a * a * a - a) + &self.second[k + 1] * (b * b * b - b)) * (h * h / 6.0)
    }
    fn velocity(&self, t: f64) -> DVector<f64> {
        let (k, h) = self.locate(t);
        let a = (self.times[k + 1] - t) / h;
        let b = (t - self.times[k]) / h;
        (&self.values[k + 1] - &self.values[k]) / h
            + (&self.second[k + 1] * (3.0 * b * b - 1.0) - &self.second[k] * (3.0 * a * a - 1.0)) * (h / 6.0)
    }
}

/// Piecewise-linear curve through vertices at given parameters.
#[derive(Debug, Clone)]
pub struct Polyline {
    times: Vec<f64>,
    points: Vec<Point>,
}

impl Polyline {
    pub fn new(times: Vec<f64>, points: Vec<Point>) -> Result<Self> {
        if times.len() < 2 || times.len() != points.len() || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeoError::InvalidCocycle("polyline needs increasing vertex times".into()));
        }
        Ok(Polyline { times, points })
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.times.len();
        self.times.partition_point(|s| *s <= t).clamp(1, n - 1) - 1
    }

    pub fn vertices(&self) -> &[Point] {
        &self.points
    }
}

impl Curve for Polyline {
    fn domain(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }
    fn point(&self, t: f64) -> Point {
        let k = self.locate(t);
        let s = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        &self.points[k] * (1.0 - s) + &self.points[k + 1] * s
    }
    fn velocity(&self, t: f64) -> DVector<f64> {
        let k = self.locate(t);
        (&self.points[k + 1] - &self.points[k]) / (self.times[k + 1] - self.times[k])
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.times[1..self.times.len() - 1].to_vec()
    }
}

/// Image `g(a(t))` of a curve under an affine map.
#[derive(Debug, Clone)]
pub struct MappedCurve {
    inner: CurveRef,
    map: AffineMap,
}

impl MappedCurve {
    pub fn new(inner: CurveRef, map: AffineMap) -> Self {
        MappedCurve { inner, map }
    }
}

impl Curve for MappedCurve {
    fn domain(&self) -> (f64, f64) {
        self.inner.domain()
    }
    fn point(&self, t: f64) -> Point {
        self.map.apply(&self.inner.point(t))
    }
    fn velocity(&self, t: f64) -> DVector<f64> {
        self.map.apply_linear(&self.inner.velocity(t))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
}

type Reparam = Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// `a(φ(s))` for a monotone reparametrization `φ` given with its derivative.
#[derive(Clone)]
pub struct Reparametrized {
    inner: CurveRef,
    domain: (f64, f64),
    phi: Reparam,
}

impl fmt::Debug for Reparametrized {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Reparametrized({:?} on {:?})", self.inner, self.domain)
    }
}

impl Reparametrized {
    pub fn new(inner: CurveRef, domain: (f64, f64), phi: Reparam) -> Self {
        Reparametrized { inner, domain, phi }
    }

    /// Affine reparametrization mapping `domain` onto the inner curve's domain.
    pub fn affine(inner: CurveRef, domain: (f64, f64)) -> Self {
        let (a, b) = inner.domain();
        let scale = (b - a) / (domain.1 - domain.0);
        let s0 = domain.0;
        Reparametrized::new(inner, domain, Arc::new(move |s| (a + (s - s0) * scale, scale)))
    }
}

impl Curve for Reparametrized {
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn point(&self, s: f64) -> Point {
        self.inner.point((self.phi)(s).0)
    }
    fn velocity(&self, s: f64) -> DVector<f64> {
        let (t, dt) = (self.phi)(s);
        self.inner.velocity(t) * dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        DVector::from_row_slice(v)
    }

    #[test]
    fn expression_curve_and_stencil() {
        let c = ExprCurve::parse(&["t".into(), "t^2".into()], None, (-1.0, 1.0)).unwrap();
        assert_eq!(c.point(0.5), p(&[0.5, 0.25]));
        assert!((c.velocity(0.5) - p(&[1.0, 1.0])).norm() < 1e-12);
        let d = ExprCurve::parse(&["sin(t)".into()], Some(&["cos(t)".into()]), (0.0, 1.0)).unwrap();
        assert_eq!(d.velocity(0.0), p(&[1.0]));
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| p(&[t * t * t - t, 2.0 * t]);
        let df = |t: f64| p(&[3.0 * t * t - 1.0, 2.0]);
        let ts: Vec<f64> = (0..=4).map(|i| i as f64 * 0.5).collect();
        let c = HermiteCurve::new(
            ts.clone(),
            ts.iter().map(|t| f(*t)).collect(),
            ts.iter().map(|t| df(*t)).collect(),
        )
        .unwrap();
        for t in [0.1, 0.77, 1.3, 1.99] {
            assert!((c.point(t) - f(t)).norm() < 1e-12);
            assert!((c.velocity(t) - df(t)).norm() < 1e-12);
        }
    }

    #[test]
    fn spline_through_linear_data_is_linear() {
        let ts: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let c = SplineCurve::new(ts.clone(), ts.iter().map(|t| p(&[2.0 * t + 1.0])).collect()).unwrap();
        assert!((c.point(2.5)[0] - 6.0).abs() < 1e-12);
        assert!((c.velocity(3.7)[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn polyline_and_piecewise() {
        let pl = Polyline::new(vec![0.0, 1.0, 3.0], vec![p(&[0.0, 0.0]), p(&[1.0, 0.0]), p(&[1.0, 2.0])]).unwrap();
        assert_eq!(pl.point(2.0), p(&[1.0, 1.0]));
        assert_eq!(pl.velocity(0.5), p(&[1.0, 0.0]));
        assert_eq!(pl.breakpoints(), vec![1.0]);
        let a: CurveRef = Arc::new(FnCurve::line(p(&[0.0]), p(&[1.0]), (-1.0, 0.0), 0.0));
        let b: CurveRef = Arc::new(FnCurve::line(p(&[0.0]), p(&[-1.0]), (0.0, 1.0), 0.0));
        let pw = PiecewiseCurve::new(vec![(-1.0, a), (0.0, b)], 1.0).unwrap();
        assert_eq!(pw.point(-0.5), p(&[-0.5]));
        assert_eq!(pw.point(0.5), p(&[-0.5]));
        assert_eq!(pw.breakpoints(), vec![0.0]);
    }

    #[test]
    fn affine_reparametrization_scales_velocity() {
        let c: CurveRef = Arc::new(FnCurve::line(p(&[0.0, 0.0]), p(&[1.0, 0.0]), (0.0, 1.0), 0.0));
        let r = Reparametrized::affine(c, (0.0, 2.0));
        assert_eq!(r.point(1.0), p(&[0.5, 0.0]));
        assert_eq!(r.velocity(1.0), p(&[0.5, 0.0]));
    }
}
