//! Numerical integration: adaptive Simpson for curve lengths and fixed
//! Gauss–Legendre rules for straight chords.

use crate::error::{GeoError, Result};

/// Maximum number of leaf intervals adaptive Simpson may create.
pub const MAX_SUBDIVISIONS: usize = 1 << 16;

const MAX_DEPTH: u32 = 48;

struct Simpson<'f, F> {
    f: &'f F,
    leaves: usize,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // intervals at the floating-point resolution cannot be refined further
        let unresolvable = (b - a) <= 64.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0);
        if unresolvable || (depth >= 4 && (delta.abs() <= 15.0 * tol || depth >= MAX_DEPTH)) {
            if unresolvable {
                return Ok(left + right);
            }
            if depth >= MAX_DEPTH && delta.abs() > 15.0 * tol {
                return Err(GeoError::QuadratureFailure { a, b });
            }
            return Ok(left + right + delta / 15.0);
        }
        self.leaves += 1;
        if self.leaves > MAX_SUBDIVISIONS {
            return Err(GeoError::QuadratureFailure { a, b });
        }
        Ok(self.recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?
            + self.recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?)
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut s = Simpson { f, leaves: 1 };
    s.recurse(a, b, fa, fm, fb, whole, tol, 0)
}

/// Five-point Gauss–Legendre nodes and weights on [0, 1].
pub const GL5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_004, 0.118_463_442_528_094_54),
    (0.230_765_344_947_158_45, 0.239_314_335_249_683_23),
    (0.5, 0.284_444_444_444_444_45),
    (0.769_234_655_052_841_6, 0.239_314_335_249_683_23),
    (0.953_089_922_969_332, 0.118_463_442_528_094_54),
];

/// Integrates `f` on [0, 1] with the five-point Gauss–Legendre rule.
pub fn gauss_legendre_unit<F: FnMut(f64) -> f64>(mut f: F) -> f64 {
    GL5.iter().map(|(s, w)| w * f(*s)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_kinks() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-10).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(&|x: f64| x.abs(), -1.0, 2.0, 1e-10).unwrap();
        assert!((v - 2.5).abs() < 1e-9);
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_legendre_exact_to_degree_nine() {
        let v = gauss_legendre_unit(|s| s.powi(9));
        assert!((v - 0.1).abs() < 1e-14);
        let w: f64 = GL5.iter().map(|(_, w)| w).sum();
        assert!((w - 1.0).abs() < 1e-15);
    }
}
