use nalgebra::{DMatrix, DVector};

use crate::error::{GeoError, Result};

/// Affine map `x ↦ L x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub translation: DVector<f64>,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        if !linear.is_square() || linear.nrows() != translation.len() {
            return Err(GeoError::InvalidModel(format!(
                "affine map with {}x{} matrix and translation of length {}",
                linear.nrows(),
                linear.ncols(),
                translation.len()
            )));
        }
        Ok(AffineMap { linear, translation })
    }

    pub fn linear(linear: DMatrix<f64>) -> Self {
        let n = linear.nrows();
        AffineMap {
            linear,
            translation: DVector::zeros(n),
        }
    }

    pub fn identity(dim: usize) -> Self {
        AffineMap::linear(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.translation
    }

    pub fn apply_linear(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.linear * v
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        AffineMap {
            linear: &self.linear * &other.linear,
            translation: &self.linear * &other.translation + &self.translation,
        }
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let inv = self
            .linear
            .clone()
            .try_inverse()
            .ok_or_else(|| GeoError::InvalidModel("singular affine map".into()))?;
        let t = -(&inv * &self.translation);
        Ok(AffineMap {
            linear: inv,
            translation: t,
        })
    }

    /// Max entry difference to another map.
    pub fn distance(&self, other: &AffineMap) -> f64 {
        (&self.linear - &other.linear)
            .amax()
            .max((&self.translation - &other.translation).amax())
    }

    /// True when the linear part is orthogonal with respect to `metric`
    /// (`Lᵀ G L = G`).
    pub fn preserves(&self, metric: &DMatrix<f64>, tol: f64) -> bool {
        (self.linear.transpose() * metric * &self.linear - metric).amax() <= tol
    }

    /// Points fixed by the map: returns the projection of `x` onto the fixed
    /// affine subspace, if that subspace is nonempty.
    pub fn project_to_fixed_set(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let n = self.dim();
        let m = &self.linear - DMatrix::identity(n, n);
        let r = &m * x + &self.translation;
        if r.norm() < 1e-14 {
            return Some(x.clone());
        }
        let pinv = m.clone().pseudo_inverse(1e-10).ok()?;
        let z = x - pinv * r;
        ((&m * &z + &self.translation).norm() < 1e-9).then_some(z)
    }
}

/// Closes a set of invertible affine maps under composition and inversion.
/// The identity is always element 0. Fails beyond `cap` elements.
pub fn close_group(dim: usize, generators: &[AffineMap], cap: usize) -> Result<Vec<AffineMap>> {
    let mut elems = vec![AffineMap::identity(dim)];
    let mut frontier = vec![AffineMap::identity(dim)];
    let mut gens: Vec<AffineMap> = generators.to_vec();
    for g in generators {
        gens.push(g.inverse()?);
    }
    while let Some(e) = frontier.pop() {
        for g in &gens {
            let c = g.compose(&e);
            if !elems.iter().any(|x| x.distance(&c) < 1e-9) {
                if elems.len() >= cap {
                    return Err(GeoError::InvalidModel(format!(
                        "finite isometry set generates more than {cap} elements"
                    )));
                }
                elems.push(c.clone());
                frontier.push(c);
            }
        }
    }
    Ok(elems)
}
