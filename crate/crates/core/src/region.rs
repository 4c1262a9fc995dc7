//! Subsets of R^n used as patch domains and chart regions.
//!
//! Regions are built from a few primitives combined with complement,
//! intersection and union. Each region answers membership exactly and
//! reports a signed Euclidean clearance: positive inside (distance to the
//! complement), negative outside (minus the distance to the region). For
//! composite regions the clearance is the usual min/max bound, which is exact
//! for the primitives and a lower bound otherwise.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    /// The whole space.
    All,
    /// Closed axis-aligned box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Open ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Open spherical shell `inner < |x - center| < outer`.
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    /// Half space `normal . x >= offset` (or `>` when `closed` is false).
    HalfSpace {
        normal: Vec<f64>,
        offset: f64,
        #[serde(default = "default_true")]
        closed: bool,
    },
    /// A single point; only useful inside a complement.
    Point { at: Vec<f64> },
    /// Closed ray `origin + s * direction`, `s >= 0`; only useful inside a complement.
    Ray { origin: Vec<f64>, direction: Vec<f64> },
    Complement { of: Box<Region> },
    Intersection { of: Vec<Region> },
    Union { of: Vec<Region> },
}

fn default_true() -> bool {
    true
}

const POINT_TOL: f64 = 1e-12;

fn dist(a: &[f64], b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

fn ray_distance(origin: &[f64], direction: &[f64], x: &DVector<f64>) -> f64 {
    let norm2: f64 = direction.iter().map(|d| d * d).sum();
    let s: f64 = origin
        .iter()
        .zip(direction)
        .zip(x.iter())
        .map(|((o, d), xi)| (xi - o) * d)
        .sum::<f64>()
        / norm2;
    let s = s.max(0.0);
    origin
        .iter()
        .zip(direction)
        .zip(x.iter())
        .map(|((o, d), xi)| {
            let p = o + s * d;
            (xi - p) * (xi - p)
        })
        .sum::<f64>()
        .sqrt()
}


const SEGMENT_SAMPLES: usize = 64;

fn segment_point_distance(a: &DVector<f64>, b: &DVector<f64>, p: &[f64]) -> f64 {
    let p = DVector::from_column_slice(p);
    let d = b - a;
    let len2 = d.norm_squared();
    let s = if len2 > 0.0 { ((&p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + d * s - p).norm()
}

/// Distance between the segment `a -> b` and the ray `origin + s * direction`.
fn segment_ray_distance(a: &DVector<f64>, b: &DVector<f64>, origin: &[f64], direction: &[f64]) -> f64 {
    let o = DVector::from_column_slice(origin);
    let dir = DVector::from_column_slice(direction);
    let d1 = b - a;
    let r = a - &o;
    let (aa, ee, ff) = (d1.dot(&d1), dir.dot(&dir), dir.dot(&r));
    let point_at = |s: f64, t: f64| (a + &d1 * s - (&o + &dir * t)).norm();
    if aa <= 1e-300 {
        return point_at(0.0, (ff / ee).max(0.0));
    }
    let c = d1.dot(&r);
    let bb = d1.dot(&dir);
    let denom = aa * ee - bb * bb;
    let mut s = if denom > 1e-300 * aa * ee { ((bb * ff - c * ee) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (bb * s + ff) / ee;
    if t < 0.0 {
        t = 0.0;
        s = (-c / aa).clamp(0.0, 1.0);
    }
    let best = point_at(s, t);
    // endpoints guard against the parallel case
    let end_a = point_at(0.0, (ff / ee).max(0.0));
    let end_b = point_at(1.0, ((&(b - &o)).dot(&dir) / ee).max(0.0));
    best.min(end_a).min(end_b)
}

impl Region {
    pub fn complement(self) -> Region {
        Region::Complement { of: Box::new(self) }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            Region::All => true,
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h),
            Region::Ball { center, radius } => dist(center, x) < *radius,
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(center, x);
                r > *inner && r < *outer
            }
            Region::HalfSpace {
                normal,
                offset,
                closed,
            } => {
                let s: f64 = normal.iter().zip(x.iter()).map(|(n, v)| n * v).sum();
                if *closed {
                    s >= *offset
                } else {
                    s > *offset
                }
            }
            Region::Point { at } => dist(at, x) <= POINT_TOL,
            Region::Ray { origin, direction } => {
                ray_distance(origin, direction, x) <= POINT_TOL
            }
            Region::Complement { of } => !of.contains(x),
            Region::Intersection { of } => of.iter().all(|r| r.contains(x)),
            Region::Union { of } => of.iter().any(|r| r.contains(x)),
        }
    }

    /// Signed Euclidean clearance; see the module docs.
    pub fn clearance(&self, x: &DVector<f64>) -> f64 {
        match self {
            Region::All => f64::INFINITY,
            Region::Box { lo, hi } => {
                let mut inside = f64::INFINITY;
                let mut outside2 = 0.0;
                for ((v, l), h) in x.iter().zip(lo).zip(hi) {
                    inside = inside.min(v - l).min(h - v);
                    let o = (l - v).max(v - h).max(0.0);
                    outside2 += o * o;
                }
                if inside >= 0.0 {
                    inside
                } else {
                    -outside2.sqrt()
                }
            }
            Region::Ball { center, radius } => radius - dist(center, x),
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(center, x);
                (r - inner).min(outer - r)
            }
            Region::HalfSpace { normal, offset, .. } => {
                let norm: f64 = normal.iter().map(|n| n * n).sum::<f64>().sqrt();
                let s: f64 = normal.iter().zip(x.iter()).map(|(n, v)| n * v).sum();
                (s - offset) / norm
            }
            Region::Point { at } => -dist(at, x),
            Region::Ray { origin, direction } => -ray_distance(origin, direction, x),
            Region::Complement { of } => -of.clearance(x),
            Region::Intersection { of } => of
                .iter()
                .map(|r| r.clearance(x))
                .fold(f64::INFINITY, f64::min),
            Region::Union { of } => of
                .iter()
                .map(|r| r.clearance(x))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// True when the closed segment `a -> b` lies in the region. Exact for
    /// primitives and their complements; unions fall back to sampling.
    pub fn contains_segment(&self, a: &DVector<f64>, b: &DVector<f64>) -> bool {
        match self {
            Region::All => true,
            Region::Box { .. } | Region::Ball { .. } | Region::HalfSpace { .. } => self.contains(a) && self.contains(b),
            Region::Annulus { center, inner, .. } => {
                self.contains(a) && self.contains(b) && segment_point_distance(a, b, center) > *inner
            }
            Region::Point { .. } | Region::Ray { .. } => self.contains(a) && self.contains(b),
            Region::Complement { of } => !of.meets_segment(a, b),
            Region::Intersection { of } => of.iter().all(|r| r.contains_segment(a, b)),
            Region::Union { of } => {
                of.iter().any(|r| r.contains_segment(a, b)) || self.contains_chord(a, b, SEGMENT_SAMPLES)
            }
        }
    }

    /// True when the closed segment `a -> b` meets the region.
    pub fn meets_segment(&self, a: &DVector<f64>, b: &DVector<f64>) -> bool {
        match self {
            Region::All => true,
            Region::Box { lo, hi } => {
                let (mut s0, mut s1) = (0.0f64, 1.0f64);
                for k in 0..a.len() {
                    let d = b[k] - a[k];
                    if d.abs() < 1e-300 {
                        if a[k] < lo[k] || a[k] > hi[k] {
                            return false;
                        }
                        continue;
                    }
                    let (mut u, mut v) = ((lo[k] - a[k]) / d, (hi[k] - a[k]) / d);
                    if u > v {
                        std::mem::swap(&mut u, &mut v);
                    }
                    s0 = s0.max(u);
                    s1 = s1.min(v);
                    if s0 > s1 {
                        return false;
                    }
                }
                true
            }
            Region::Ball { center, radius } => segment_point_distance(a, b, center) < *radius,
            Region::Annulus { center, inner, outer } => {
                let far = dist(center, a).max(dist(center, b));
                segment_point_distance(a, b, center) < *outer && far > *inner
            }
            Region::HalfSpace { .. } => self.contains(a) || self.contains(b),
            Region::Point { at } => segment_point_distance(a, b, at) <= POINT_TOL,
            Region::Ray { origin, direction } => segment_ray_distance(a, b, origin, direction) <= POINT_TOL,
            Region::Complement { of } => !of.contains_segment(a, b),
            Region::Intersection { .. } => (0..=SEGMENT_SAMPLES).any(|i| {
                let s = i as f64 / SEGMENT_SAMPLES as f64;
                self.contains(&(a * (1.0 - s) + b * s))
            }),
            Region::Union { of } => of.iter().any(|r| r.meets_segment(a, b)),
        }
    }

    /// True when every sample of the straight chord `a -> b` lies in the region.
    pub fn contains_chord(&self, a: &DVector<f64>, b: &DVector<f64>, samples: usize) -> bool {
        (0..=samples).all(|i| {
            let s = i as f64 / samples as f64;
            self.contains(&(a * (1.0 - s) + b * s))
        })
    }
}
