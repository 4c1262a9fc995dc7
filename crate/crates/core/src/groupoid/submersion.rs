use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::geometry::Point;

pub type ProjectionFn = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

/// Relative singular-value cutoff defining the rank of a differential.
pub const RANK_TOL: f64 = 1e-9;
/// Relative singular-value cutoff for kernels computed from `JᵀJ`.
pub const KERNEL_TOL: f64 = 1e-6;

/// Submersion groupoid `M ×_N M` of a map `p: M → R^q`; orbits are the fibers.
#[derive(Clone)]
pub struct SubmersionData {
    projection: ProjectionFn,
    jacobian: Option<JacobianFn>,
    pub codim: usize,
    pub compact_fibers: bool,
}

impl fmt::Debug for SubmersionData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubmersionData")
            .field("codim", &self.codim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("compact_fibers", &self.compact_fibers)
            .finish()
    }
}

/// Kernel basis (Euclidean-orthonormal) of a `q × n` matrix.
pub fn kernel_basis(j: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = j.ncols();
    let jtj = j.transpose() * j;
    let eig = jtj.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    // eigenvalues of JᵀJ carry absolute error ~ ε·max, i.e. ~1e-8 relative in
    // singular values, so the cutoff sits above that
    let cut = (KERNEL_TOL * max.sqrt()).powi(2).max(1e-300);
    (0..n)
        .filter(|&k| eig.eigenvalues[k] <= cut)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect()
}

/// Horizontal lift at a point with metric `g` and differential `j`: the
/// `g`-minimal vector `u` with `j u = w` (least squares when `w` is not in
/// the image).
pub fn horizontal_lift(g: &DMatrix<f64>, j: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    let ginv = g.clone().try_inverse().unwrap_or_else(|| DMatrix::identity(g.nrows(), g.ncols()));
    let m = j * &ginv * j.transpose();
    let scale = m.amax().max(1e-300);
    let minv = m.pseudo_inverse(RANK_TOL * scale).unwrap_or_else(|_| DMatrix::zeros(j.nrows(), j.nrows()));
    ginv * j.transpose() * minv * w
}

impl SubmersionData {
    pub fn new(projection: ProjectionFn, jacobian: Option<JacobianFn>, codim: usize, compact_fibers: bool) -> Self {
        SubmersionData {
            projection,
            jacobian,
            codim,
            compact_fibers,
        }
    }

    pub fn project(&self, x: &Point) -> DVector<f64> {
        (self.projection)(x)
    }

    pub fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let n = x.len();
        let h = 1e-6 * (1.0 + x.amax());
        let mut j = DMatrix::zeros(self.codim, n);
        for k in 0..n {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let col = (self.project(&xp) - self.project(&xm)) / (2.0 * h);
            j.set_column(k, &col);
        }
        j
    }

    pub fn orbit_tangent_basis(&self, x: &Point) -> Vec<DVector<f64>> {
        kernel_basis(&self.jacobian(x))
    }

    /// Point of the fiber through `x` near `toward`, by Gauss–Newton from `toward`.
    pub fn fiber_point_near(&self, x: &Point, toward: &Point) -> Option<Point> {
        let target = self.project(x);
        let mut z = toward.clone();
        for _ in 0..50 {
            let r = self.project(&z) - &target;
            if r.norm() <= 1e-13 * (1.0 + target.norm()) {
                return Some(z);
            }
            let j = self.jacobian(&z);
            let scale = j.amax().max(1e-300);
            let pinv = j.pseudo_inverse(RANK_TOL * scale).ok()?;
            z -= pinv * r;
            if !z.iter().all(|c| c.is_finite()) {
                return None;
            }
        }
        let r = self.project(&z) - &target;
        (r.norm() <= 1e-10 * (1.0 + target.norm())).then_some(z)
    }
}
