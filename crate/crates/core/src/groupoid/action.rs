use nalgebra::{DMatrix, DVector};

use super::affine::{close_group, AffineMap};
use crate::error::{GeoError, Result};
use crate::geometry::Point;

const MAX_FINITE_ORDER: usize = 4096;

/// A skew-symmetric generator rotating a single 2-plane: `A = ω (v uᵀ - u vᵀ)`.
#[derive(Debug, Clone)]
pub struct Generator {
    pub matrix: DMatrix<f64>,
    u: DVector<f64>,
    v: DVector<f64>,
    omega: f64,
}

impl Generator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(GeoError::InvalidModel("generator matrix must be square".into()));
        }
        let scale = matrix.amax();
        if scale == 0.0 {
            return Err(GeoError::InvalidModel("generator matrix is zero".into()));
        }
        if (&matrix + matrix.transpose()).amax() > 1e-12 * scale {
            return Err(GeoError::InvalidModel("generator matrix must be skew-symmetric".into()));
        }
        let (j, _) = (0..matrix.ncols())
            .map(|j| (j, matrix.column(j).norm()))
            .fold((0, 0.0), |b, c| if c.1 > b.1 { c } else { b });
        let u: DVector<f64> = matrix.column(j).normalize();
        let au = &matrix * &u;
        let omega = au.norm();
        let v = au / omega;
        let rebuilt = (&v * u.transpose() - &u * v.transpose()) * omega;
        if (&rebuilt - &matrix).amax() > 1e-10 * scale {
            return Err(GeoError::InvalidModel(
                "generator must rotate a single 2-plane (rank-2 skew matrix)".into(),
            ));
        }
        Ok(Generator { matrix, u, v, omega })
    }

    pub fn field(&self, x: &Point) -> DVector<f64> {
        &self.matrix * x
    }

    /// `exp(θ A)`.
    pub fn exp(&self, theta: f64) -> DMatrix<f64> {
        plane_rotation(&self.u, &self.v, self.omega * theta)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    fn same_plane(&self, other: &Generator) -> bool {
        let proj = |w: &DVector<f64>| (w.dot(&self.u)).powi(2) + (w.dot(&self.v)).powi(2);
        (proj(&other.u) - 1.0).abs() < 1e-10 && (proj(&other.v) - 1.0).abs() < 1e-10
    }

    fn orthogonal_to(&self, other: &Generator) -> bool {
        [&other.u, &other.v]
            .iter()
            .all(|w| w.dot(&self.u).abs() < 1e-10 && w.dot(&self.v).abs() < 1e-10)
    }
}

fn plane_rotation(u: &DVector<f64>, v: &DVector<f64>, angle: f64) -> DMatrix<f64> {
    let n = u.len();
    let (s, c) = angle.sin_cos();
    DMatrix::identity(n, n) + (v * u.transpose() - u * v.transpose()) * s
        + (u * u.transpose() + v * v.transpose()) * (c - 1.0)
}

/// Plane of rotation shared by one or more generators; angles are measured in
/// the plane itself, `φ = ω θ`.
#[derive(Debug, Clone)]
struct Plane {
    u: DVector<f64>,
    v: DVector<f64>,
}

impl Plane {
    fn coords(&self, w: &DVector<f64>) -> (f64, f64) {
        (w.dot(&self.u), w.dot(&self.v))
    }
}

/// Isometric action of a finite group extended by a torus of commuting plane
/// rotations. Group elements act as `x ↦ R(φ) F x`.
#[derive(Debug, Clone)]
pub struct ActionData {
    dim: usize,
    pub finite: Vec<AffineMap>,
    pub generators: Vec<Generator>,
    planes: Vec<Plane>,
    complement: DMatrix<f64>,
}

/// Best group element matching a set of point and vector pairs.
#[derive(Debug, Clone)]
pub struct ElementFit {
    pub map: AffineMap,
    pub finite_index: usize,
    pub angles: Vec<f64>,
    pub residual: f64,
}

impl ActionData {
    pub fn new(dim: usize, finite_generators: &[AffineMap], generators: Vec<DMatrix<f64>>) -> Result<Self> {
        for f in finite_generators {
            if f.dim() != dim {
                return Err(GeoError::InvalidModel(format!(
                    "finite isometry of dimension {} on a {dim}-dimensional patch",
                    f.dim()
                )));
            }
        }
        let finite = close_group(dim, finite_generators, MAX_FINITE_ORDER)?;
        let generators = generators
            .into_iter()
            .map(|m| {
                if m.nrows() != dim {
                    Err(GeoError::InvalidModel(format!(
                        "generator of size {} on a {dim}-dimensional patch",
                        m.nrows()
                    )))
                } else {
                    Generator::new(m)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut planes: Vec<Plane> = Vec::new();
        let mut reps: Vec<&Generator> = Vec::new();
        for g in &generators {
            if reps.iter().any(|r| r.same_plane(g)) {
                continue;
            }
            if !reps.iter().all(|r| r.orthogonal_to(g)) {
                return Err(GeoError::InvalidModel(
                    "rotation generators must act on equal or orthogonal planes (commuting torus)".into(),
                ));
            }
            reps.push(g);
            planes.push(Plane {
                u: g.u.clone(),
                v: g.v.clone(),
            });
        }
        // orthonormal basis of the complement of all rotation planes
        let mut proj = DMatrix::identity(dim, dim);
        for p in &planes {
            proj -= &p.u * p.u.transpose() + &p.v * p.v.transpose();
        }
        let eig = proj.symmetric_eigen();
        let cols: Vec<DVector<f64>> = (0..dim)
            .filter(|&k| eig.eigenvalues[k] > 0.5)
            .map(|k| eig.eigenvectors.column(k).into_owned())
            .collect();
        let complement = if cols.is_empty() {
            DMatrix::zeros(dim, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Ok(ActionData {
            dim,
            finite,
            generators,
            planes,
            complement,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_continuous_part(&self) -> bool {
        !self.planes.is_empty()
    }

    pub fn is_trivial(&self) -> bool {
        self.finite.len() == 1 && self.planes.is_empty()
    }

    pub fn orbit_tangent_basis(&self, x: &Point) -> Vec<DVector<f64>> {
        self.generators.iter().map(|g| g.field(x)).collect()
    }

    fn rotation(&self, angles: &[f64]) -> DMatrix<f64> {
        let mut r = DMatrix::identity(self.dim, self.dim);
        for (p, a) in self.planes.iter().zip(angles) {
            r = plane_rotation(&p.u, &p.v, *a) * r;
        }
        r
    }

    /// Element `R(φ) F` minimizing `Σ |g·p - q|² + Σ |dg·v - w|²` over the
    /// given point pairs `(p, q)` and vector pairs `(v, w)`; angles are solved
    /// in closed form per rotation plane.
    pub fn fit(&self, points: &[(Point, Point)], vectors: &[(DVector<f64>, DVector<f64>)]) -> ElementFit {
        self.fit_restricted(points, vectors, None)
    }

    /// As [`ActionData::fit`], restricted to one finite component.
    pub fn fit_with(
        &self,
        points: &[(Point, Point)],
        vectors: &[(DVector<f64>, DVector<f64>)],
        finite_index: usize,
    ) -> ElementFit {
        self.fit_restricted(points, vectors, Some(finite_index))
    }

    /// Projector killing the rotation planes in which `x` has radius at most
    /// `tol`; there the rotation angle of a matching element is undetermined.
    pub fn free_plane_projector(&self, x: &Point, tol: f64) -> DMatrix<f64> {
        let mut proj = DMatrix::identity(self.dim, self.dim);
        for p in &self.planes {
            let (a, b) = p.coords(x);
            if a.hypot(b) <= tol {
                proj -= &p.u * p.u.transpose() + &p.v * p.v.transpose();
            }
        }
        proj
    }

    fn fit_restricted(
        &self,
        points: &[(Point, Point)],
        vectors: &[(DVector<f64>, DVector<f64>)],
        only: Option<usize>,
    ) -> ElementFit {
        let mut best: Option<ElementFit> = None;
        for (fi, f) in self.finite.iter().enumerate() {
            if only.is_some_and(|o| o != fi) {
                continue;
            }
            let mapped: Vec<(DVector<f64>, &DVector<f64>)> = points
                .iter()
                .map(|(p, q)| (f.apply(p), q))
                .chain(vectors.iter().map(|(v, w)| (f.apply_linear(v), w)))
                .collect();
            let angles: Vec<f64> = self
                .planes
                .iter()
                .map(|pl| {
                    let (mut cross, mut dot) = (0.0, 0.0);
                    for (a, b) in &mapped {
                        let (a1, a2) = pl.coords(a);
                        let (b1, b2) = pl.coords(b);
                        cross += a1 * b2 - a2 * b1;
                        dot += a1 * b1 + a2 * b2;
                    }
                    if cross.abs() + dot.abs() < 1e-300 {
                        0.0
                    } else {
                        cross.atan2(dot)
                    }
                })
                .collect();
            let r = self.rotation(&angles);
            let map = AffineMap::linear(r).compose(f);
            let residual = points
                .iter()
                .map(|(p, q)| (map.apply(p) - q).norm_squared())
                .chain(vectors.iter().map(|(v, w)| (map.apply_linear(v) - w).norm_squared()))
                .sum::<f64>()
                .sqrt();
            if best.as_ref().map_or(true, |b| residual < b.residual - 1e-14) {
                best = Some(ElementFit {
                    map,
                    finite_index: fi,
                    angles,
                    residual,
                });
            }
        }
        best.expect("finite part contains the identity")
    }

    /// Closed-form orbit invariants of the continuous part: plane radii and
    /// complement coordinates. `None` for purely finite actions.
    pub fn invariants(&self, x: &Point) -> Option<DVector<f64>> {
        if self.planes.is_empty() {
            return None;
        }
        let mut out: Vec<f64> = self
            .planes
            .iter()
            .map(|p| {
                let (a, b) = p.coords(x);
                a.hypot(b)
            })
            .collect();
        out.extend((self.complement.transpose() * x).iter());
        Some(DVector::from_vec(out))
    }

    pub fn finite_images(&self, x: &Point) -> Vec<Point> {
        self.finite.iter().map(|f| f.apply(x)).collect()
    }

    /// `(finite elements fixing x up to rotation, generators vanishing at x)`.
    pub fn isotropy(&self, x: &Point) -> (usize, usize) {
        let tol = 1e-9 * (1.0 + x.norm());
        let finite = (0..self.finite.len())
            .filter(|&fi| self.fit_restricted(&[(x.clone(), x.clone())], &[], Some(fi)).residual <= tol)
            .count();
        let vanishing = self.generators.iter().filter(|g| g.field(x).norm() <= tol).count();
        (finite, vanishing)
    }

    /// Euclidean distance from `x` to the nearest point with strictly larger isotropy.
    pub fn stratum_distance(&self, x: &Point) -> f64 {
        let tol = 1e-9 * (1.0 + x.norm());
        let mut d = f64::INFINITY;
        for p in &self.planes {
            let (a, b) = p.coords(x);
            let r = a.hypot(b);
            if r > tol {
                d = d.min(r);
            }
        }
        if self.planes.is_empty() {
            for f in &self.finite[1..] {
                if let Some(z) = f.project_to_fixed_set(x) {
                    let r = (z - x).norm();
                    if r > tol {
                        d = d.min(r);
                    }
                }
            }
        }
        d
    }
}
