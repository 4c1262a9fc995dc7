use nalgebra::DVector;

use super::affine::{close_group, AffineMap};
use crate::error::{GeoError, Result};
use crate::geometry::Point;
use crate::region::Region;

const MAX_ORBIT_POINTS: usize = 4096;

#[derive(Debug, Clone)]
pub struct OrbifoldChart {
    pub region: Region,
    /// Finite isometry group acting on the chart region (closed, identity first).
    pub group: Vec<AffineMap>,
}

/// Isometric embedding of part of chart `from` into chart `to`.
#[derive(Debug, Clone)]
pub struct ChartEmbedding {
    pub from: usize,
    pub to: usize,
    pub map: AffineMap,
}

/// Étale groupoid of germs generated by finite chart groups and chart embeddings.
#[derive(Debug, Clone)]
pub struct OrbifoldData {
    pub charts: Vec<OrbifoldChart>,
    pub embeddings: Vec<ChartEmbedding>,
}

/// An orbit point together with the composed local isometry reaching it.
#[derive(Debug, Clone)]
pub struct OrbitImage {
    pub point: Point,
    pub map: AffineMap,
}

impl OrbifoldData {
    pub fn new(
        dim: usize,
        charts: Vec<(Region, Vec<AffineMap>)>,
        embeddings: Vec<ChartEmbedding>,
    ) -> Result<Self> {
        let charts = charts
            .into_iter()
            .map(|(region, gens)| {
                Ok(OrbifoldChart {
                    region,
                    group: close_group(dim, &gens, 1024)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for e in &embeddings {
            if e.from >= charts.len() || e.to >= charts.len() || e.map.dim() != dim {
                return Err(GeoError::InvalidModel(format!(
                    "bad chart embedding {} -> {}",
                    e.from, e.to
                )));
            }
        }
        Ok(OrbifoldData { charts, embeddings })
    }

    /// Local isometries applicable at `x`, each with its image in a chart.
    fn local_moves(&self, x: &Point) -> Vec<AffineMap> {
        let mut out = Vec::new();
        for c in &self.charts {
            if c.region.contains(x) {
                for g in &c.group[1..] {
                    if c.region.contains(&g.apply(x)) {
                        out.push(g.clone());
                    }
                }
            }
        }
        for e in &self.embeddings {
            if self.charts[e.from].region.contains(x) {
                let y = e.map.apply(x);
                if self.charts[e.to].region.contains(&y) {
                    out.push(e.map.clone());
                }
            }
            if self.charts[e.to].region.contains(x) {
                if let Ok(inv) = e.map.inverse() {
                    let y = inv.apply(x);
                    if self.charts[e.from].region.contains(&y) {
                        out.push(inv);
                    }
                }
            }
        }
        out
    }

    /// Orbit of `x` by breadth-first closure under local moves. The first
    /// image is `x` itself with the identity map.
    pub fn orbit(&self, x: &Point) -> Vec<OrbitImage> {
        let dim = x.len();
        let mut out = vec![OrbitImage {
            point: x.clone(),
            map: AffineMap::identity(dim),
        }];
        let mut k = 0;
        while k < out.len() {
            let cur = out[k].clone();
            for m in self.local_moves(&cur.point) {
                let y = m.apply(&cur.point);
                if !out.iter().any(|o| (&o.point - &y).norm() <= 1e-9 * (1.0 + y.norm())) {
                    if out.len() >= MAX_ORBIT_POINTS {
                        log::warn!("orbit enumeration capped at {MAX_ORBIT_POINTS} points");
                        return out;
                    }
                    out.push(OrbitImage {
                        point: y,
                        map: m.compose(&cur.map),
                    });
                }
            }
            k += 1;
        }
        out
    }

    /// Distinct local isometries fixing `x` (including the identity).
    pub fn isotropy_order(&self, x: &Point) -> usize {
        let tol = 1e-9 * (1.0 + x.norm());
        let mut fixing: Vec<AffineMap> = vec![AffineMap::identity(x.len())];
        for c in &self.charts {
            if !c.region.contains(x) {
                continue;
            }
            for g in &c.group[1..] {
                if (g.apply(x) - x).norm() <= tol && !fixing.iter().any(|f| (&f.linear - &g.linear).amax() < 1e-9) {
                    fixing.push(g.clone());
                }
            }
        }
        fixing.len()
    }

    pub fn stratum_distance(&self, x: &Point) -> f64 {
        let tol = 1e-9 * (1.0 + x.norm());
        let mut d = f64::INFINITY;
        for c in &self.charts {
            if !c.region.contains(x) {
                continue;
            }
            for g in &c.group[1..] {
                if let Some(z) = g.project_to_fixed_set(x) {
                    let r = (&z - x).norm();
                    if r > tol && c.region.contains(&z) {
                        d = d.min(r);
                    }
                }
            }
        }
        d
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.charts.iter().any(|c| c.region.contains(x))
    }
}
