use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};
use crate::region::Region;

pub type Point = DVector<f64>;
pub type MetricFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;
pub type ChristoffelFn = Arc<dyn Fn(&Point) -> Christoffel + Send + Sync>;

/// Smallest admissible metric eigenvalue.
pub const MIN_EIGENVALUE: f64 = 1e-12;

/// Christoffel symbols of the second kind, `Γ^k_{ij}` stored `[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Christoffel {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let d = self.dim;
        self.data[(k * d + i) * d + j] = v;
    }

    /// `Γ(v, v)^k = Γ^k_{ij} v^i v^j`.
    pub fn contract(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |k, _| {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += self.get(k, i, j) * v[i] * v[j];
                }
            }
            s
        })
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A single chart with a smooth Riemannian metric field.
#[derive(Clone)]
pub struct ManifoldPatch {
    name: String,
    dim: usize,
    region: Region,
    bounds: (Point, Point),
    metric: MetricFn,
    christoffel: Option<ChristoffelFn>,
    fd_step: f64,
}

impl fmt::Debug for ManifoldPatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManifoldPatch")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("region", &self.region)
            .field("analytic_christoffel", &self.christoffel.is_some())
            .finish()
    }
}

fn conformal_christoffel(u_grad: &DVector<f64>) -> Christoffel {
    // g = e^{2u} I: Γ^k_ij = δ_ik ∂_j u + δ_jk ∂_i u - δ_ij ∂_k u
    let d = u_grad.len();
    let mut c = Christoffel::zeros(d);
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                if i == k {
                    v += u_grad[j];
                }
                if j == k {
                    v += u_grad[i];
                }
                if i == j {
                    v -= u_grad[k];
                }
                c.set(k, i, j, v);
            }
        }
    }
    c
}

impl ManifoldPatch {
    /// Generic patch from a metric closure. `bounds` is the sampling box used
    /// by graph builders and must enclose the part of `region` of interest.
    pub fn new(
        name: impl Into<String>,
        region: Region,
        bounds: (Point, Point),
        metric: MetricFn,
    ) -> Self {
        let dim = bounds.0.len();
        let diam = (&bounds.1 - &bounds.0).norm();
        ManifoldPatch {
            name: name.into(),
            dim,
            region,
            bounds,
            metric,
            christoffel: None,
            fd_step: 1e-4 * diam.max(1e-6),
        }
    }

    pub fn euclidean(region: Region, bounds: (Point, Point)) -> Self {
        let dim = bounds.0.len();
        let mut p = Self::new(
            "euclidean",
            region,
            bounds,
            Arc::new(move |_| DMatrix::identity(dim, dim)),
        );
        p.christoffel = Some(Arc::new(move |_| Christoffel::zeros(dim)));
        p
    }

    /// Flat metric in polar coordinates `(r, φ)`: `diag(1, r²)`.
    pub fn polar(region: Region, bounds: (Point, Point)) -> Self {
        let mut p = Self::new(
            "polar",
            region,
            bounds,
            Arc::new(|x: &Point| DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, x[0] * x[0]]))),
        );
        p.christoffel = Some(Arc::new(|x: &Point| {
            let r = x[0];
            let mut c = Christoffel::zeros(2);
            c.set(0, 1, 1, -r);
            c.set(1, 0, 1, 1.0 / r);
            c.set(1, 1, 0, 1.0 / r);
            c
        }));
        p
    }

    /// Round sphere of radius `radius` in stereographic coordinates,
    /// `g = (2 radius / (1 + |x|²))² I`; the unit circle is the equator.
    pub fn sphere_stereographic(radius: f64, region: Region, bounds: (Point, Point)) -> Self {
        let dim = bounds.0.len();
        let mut p = Self::new(
            "sphere-stereographic",
            region,
            bounds,
            Arc::new(move |x: &Point| {
                let s = 2.0 * radius / (1.0 + x.norm_squared());
                DMatrix::identity(dim, dim) * (s * s)
            }),
        );
        // u = ln(2 radius) - ln(1 + |x|²)
        p.christoffel = Some(Arc::new(|x: &Point| {
            let grad = x * (-2.0 / (1.0 + x.norm_squared()));
            conformal_christoffel(&grad)
        }));
        p
    }

    /// Conformally flat metric `g = factor(x) I`, with an optional analytic
    /// gradient of the factor enabling closed-form Christoffel symbols.
    pub fn conformal(
        region: Region,
        bounds: (Point, Point),
        factor: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
        factor_grad: Option<Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>>,
    ) -> Self {
        let dim = bounds.0.len();
        let f = factor.clone();
        let mut p = Self::new(
            "conformal",
            region,
            bounds,
            Arc::new(move |x: &Point| DMatrix::identity(dim, dim) * f(x)),
        );
        if let Some(grad) = factor_grad {
            p.christoffel = Some(Arc::new(move |x: &Point| {
                let g = grad(x) / (2.0 * factor(x));
                conformal_christoffel(&g)
            }));
        }
        p
    }

    pub fn with_christoffel(mut self, christoffel: ChristoffelFn) -> Self {
        self.christoffel = Some(christoffel);
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same chart and domain with a different metric; analytic Christoffel
    /// symbols are dropped.
    pub fn with_metric(&self, name: impl Into<String>, metric: MetricFn) -> Self {
        ManifoldPatch {
            name: name.into(),
            metric,
            christoffel: None,
            ..self.clone()
        }
    }

    /// The metric `f² g` with Christoffel symbols assembled from this
    /// patch's symbols and `∇ ln f`. The gradient is differenced with a step
    /// proportional to `scale(x)`, the length over which `f` varies.
    pub fn conformally_scaled(
        &self,
        name: impl Into<String>,
        factor: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
        scale: Arc<dyn Fn(&Point) -> f64 + Send + Sync>,
    ) -> Self {
        let base = self.clone();
        let f = factor.clone();
        let metric: MetricFn = Arc::new(move |x: &Point| {
            let s = f(x);
            base.metric_raw(x) * (s * s)
        });
        let base = self.clone();
        let max_step = self.fd_step;
        let christoffel: ChristoffelFn = Arc::new(move |x: &Point| {
            let d = x.len();
            let h = (1e-3 * scale(x)).clamp(1e-9, max_step);
            let grad = DVector::from_fn(d, |m, _| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[m] += h;
                xm[m] -= h;
                (factor(&xp).ln() - factor(&xm).ln()) / (2.0 * h)
            });
            let g = base.metric_raw(x);
            let sharp = g.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(d, d)) * &grad;
            let mut c = base.christoffel_raw(x);
            for k in 0..d {
                for i in 0..d {
                    for j in 0..d {
                        let mut v = c.get(k, i, j) - g[(i, j)] * sharp[k];
                        if i == k {
                            v += grad[j];
                        }
                        if j == k {
                            v += grad[i];
                        }
                        c.set(k, i, j, v);
                    }
                }
            }
            c
        });
        let mut p = self.with_metric(name, metric);
        p.christoffel = Some(christoffel);
        p
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn bounds(&self) -> &(Point, Point) {
        &self.bounds
    }

    pub fn diameter(&self) -> f64 {
        (&self.bounds.1 - &self.bounds.0).norm()
    }

    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    pub fn has_analytic_christoffel(&self) -> bool {
        self.christoffel.is_some()
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.len() == self.dim && self.region.contains(x)
    }

    pub fn clearance(&self, x: &Point) -> f64 {
        self.region.clearance(x)
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

    /// Metric at `x`, validated for domain membership, symmetry and definiteness.
    pub fn metric_at(&self, x: &Point) -> Result<DMatrix<f64>> {
        self.check_domain(x)?;
        let g = (self.metric)(x);
        let asym = (&g - g.transpose()).amax();
        let min_eig = if asym > 1e-12 {
            f64::NEG_INFINITY
        } else {
            g.clone().symmetric_eigenvalues().min()
        };
        if min_eig <= MIN_EIGENVALUE {
            return Err(GeoError::DegenerateMetric {
                point: x.iter().copied().collect(),
                min_eigenvalue: min_eig,
            });
        }
        Ok(g)
    }

    /// Metric evaluation without validation; used on hot paths.
    #[inline]
    pub fn metric_raw(&self, x: &Point) -> DMatrix<f64> {
        (self.metric)(x)
    }

    pub fn inner(&self, x: &Point, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * self.metric_raw(x) * v)[(0, 0)]
    }

    pub fn norm(&self, x: &Point, v: &DVector<f64>) -> f64 {
        self.inner(x, v, v).max(0.0).sqrt()
    }

    /// Christoffel symbols at `x`, analytic when available.
    pub fn christoffel_at(&self, x: &Point) -> Result<Christoffel> {
        self.check_domain(x)?;
        Ok(self.christoffel_raw(x))
    }

    /// Central-difference Christoffel symbols with the patch FD step.
    pub fn christoffel_fd(&self, x: &Point) -> Christoffel {
        let d = self.dim;
        let h = self.fd_step;
        let g = self.metric_raw(x);
        let ginv = g
            .clone()
            .try_inverse()
            .unwrap_or_else(|| DMatrix::identity(d, d));
        // dg[m] = ∂_m g
        let dg: Vec<DMatrix<f64>> = (0..d)
            .map(|m| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[m] += h;
                xm[m] -= h;
                (self.metric_raw(&xp) - self.metric_raw(&xm)) / (2.0 * h)
            })
            .collect();
        let mut c = Christoffel::zeros(d);
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += ginv[(k, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                    }
                    c.set(k, i, j, 0.5 * s);
                    c.set(k, j, i, 0.5 * s);
                }
            }
        }
        c
    }

    #[inline]
    pub fn christoffel_raw(&self, x: &Point) -> Christoffel {
        match &self.christoffel {
            Some(f) => f(x),
            None => self.christoffel_fd(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        DVector::from_row_slice(v)
    }

    fn plane() -> (Point, Point) {
        (p(&[-5.0, -5.0]), p(&[5.0, 5.0]))
    }

    #[test]
    fn euclidean_metric_is_identity() {
        let patch = ManifoldPatch::euclidean(Region::All, plane());
        assert_eq!(patch.metric_at(&p(&[3.0, 4.0])).unwrap(), DMatrix::identity(2, 2));
        let c = patch.christoffel_at(&p(&[1.0, 2.0])).unwrap();
        assert_eq!(c.max_abs_diff(&Christoffel::zeros(2)), 0.0);
    }

    #[test]
    fn conformal_constant_factor() {
        let patch = ManifoldPatch::conformal(Region::All, plane(), Arc::new(|_| 4.0), None);
        assert_eq!(patch.metric_at(&p(&[0.3, -2.0])).unwrap(), DMatrix::identity(2, 2) * 4.0);
    }

    #[test]
    fn polar_metric_matches_pullback_of_flat_metric() {
        let patch = ManifoldPatch::polar(
            Region::HalfSpace {
                normal: vec![1.0, 0.0],
                offset: 0.0,
                closed: false,
            },
            (p(&[0.0, -4.0]), p(&[5.0, 4.0])),
        );
        let (r, phi) = (2.0_f64, 0.0_f64);
        let g = patch.metric_at(&p(&[r, phi])).unwrap();
        // Jacobian of (r, φ) -> (r cos φ, r sin φ)
        let j = DMatrix::from_row_slice(2, 2, &[phi.cos(), -r * phi.sin(), phi.sin(), r * phi.cos()]);
        let pullback = j.transpose() * j;
        assert!((g - pullback).amax() < 1e-14);
        assert_eq!(patch.metric_at(&p(&[2.0, 0.0])).unwrap()[(1, 1)], 4.0);
    }

    #[test]
    fn polar_christoffel_closed_form_and_fd() {
        let patch = ManifoldPatch::polar(Region::All, (p(&[0.5, -3.0]), p(&[4.0, 3.0])));
        let x = p(&[2.0, 0.0]);
        let c = patch.christoffel_at(&x).unwrap();
        assert_eq!(c.get(0, 1, 1), -2.0);
        assert_eq!(c.get(1, 0, 1), 0.5);
        assert_eq!(c.get(1, 1, 0), 0.5);
        assert_eq!(c.get(0, 0, 0), 0.0);
        let fd = patch.christoffel_fd(&x);
        assert!(c.max_abs_diff(&fd) < 1e-6);
    }

    #[test]
    fn conformal_christoffel_matches_fd_for_linear_log_factor() {
        // u(x) = 0.3 x1 - 0.2 x2, g = e^{2u} I
        let f: Arc<dyn Fn(&Point) -> f64 + Send + Sync> =
            Arc::new(|x: &Point| (2.0 * (0.3 * x[0] - 0.2 * x[1])).exp());
        let grad: Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync> = Arc::new(|x: &Point| {
            let f = (2.0 * (0.3 * x[0] - 0.2 * x[1])).exp();
            DVector::from_row_slice(&[0.6 * f, -0.4 * f])
        });
        let analytic = ManifoldPatch::conformal(Region::All, plane(), f.clone(), Some(grad));
        let numeric = ManifoldPatch::conformal(Region::All, plane(), f, None);
        let x = p(&[0.7, -1.1]);
        let a = analytic.christoffel_at(&x).unwrap();
        let n = numeric.christoffel_at(&x).unwrap();
        assert!(a.max_abs_diff(&n) < 1e-6);
        assert!((a.get(0, 0, 0) - 0.3).abs() < 1e-14);
        assert!((a.get(0, 1, 1) + 0.3).abs() < 1e-14);
    }

    #[test]
    fn conformal_scaling_of_a_curved_patch() {
        let sphere = ManifoldPatch::sphere_stereographic(1.0, Region::All, plane());
        let f: Arc<dyn Fn(&Point) -> f64 + Send + Sync> = Arc::new(|x: &Point| 1.0 + 0.5 * x[0] * x[0] + 0.2 * x[1]);
        let scaled = sphere.conformally_scaled("scaled", f, Arc::new(|_: &Point| 1.0));
        let x = p(&[0.4, 0.3]);
        let a = scaled.christoffel_at(&x).unwrap();
        let n = scaled.christoffel_fd(&x);
        assert!(a.max_abs_diff(&n) < 1e-5);
    }

    #[test]
    fn out_of_domain_and_degenerate() {
        let disk = ManifoldPatch::euclidean(
            Region::Ball {
                center: vec![0.0, 0.0],
                radius: 1.0,
            },
            (p(&[-1.0, -1.0]), p(&[1.0, 1.0])),
        );
        assert!(matches!(
            disk.metric_at(&p(&[2.0, 0.0])),
            Err(GeoError::OutOfDomain { .. })
        ));
        let degenerate = ManifoldPatch::new(
            "degenerate",
            Region::All,
            plane(),
            Arc::new(|_| DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 0.0]))),
        );
        assert!(matches!(
            degenerate.metric_at(&p(&[0.0, 0.0])),
            Err(GeoError::DegenerateMetric { .. })
        ));
    }
}
