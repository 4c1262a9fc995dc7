use serde::Serialize;

use super::patch::{ManifoldPatch, Point};
use crate::error::{GeoError, Result};
use crate::graph::{
    dijkstra, lattice_metric_edges, polyline_length, shorten_polyline, stencil_radius, valid_chord,
    Adjacency, Lattice, SpatialHash,
};
use crate::region::Region;

#[derive(Debug, Clone, Serialize)]
pub struct DistanceEstimate {
    /// Refined upper bound on the Riemannian distance.
    pub value: f64,
    /// Raw shortest-path value before refinement.
    pub graph_value: f64,
    pub resolution: f64,
    pub hops: usize,
    #[serde(skip)]
    pub path: Vec<Point>,
}

/// Upper bound on `d(x, y)` from a lattice graph around the pair, refined by
/// discrete curve shortening.
pub fn riemannian_distance(
    patch: &ManifoldPatch,
    x: &Point,
    y: &Point,
    resolution: f64,
) -> Result<DistanceEstimate> {
    for p in [x, y] {
        if !patch.contains(p) {
            return Err(GeoError::OutOfDomain {
                point: p.iter().copied().collect(),
            });
        }
    }
    if x == y {
        return Ok(DistanceEstimate {
            value: 0.0,
            graph_value: 0.0,
            resolution,
            hops: 0,
            path: vec![x.clone()],
        });
    }
    let dim = patch.dim();
    let sep = (y - x).norm();
    let margin = (0.5 * sep).max(6.0 * resolution);
    let lo = x.zip_map(y, f64::min).add_scalar(-margin);
    let hi = x.zip_map(y, f64::max).add_scalar(margin);
    let (blo, bhi) = patch.bounds();
    let lo = lo.zip_map(blo, f64::max);
    let hi = hi.zip_map(bhi, f64::min);
    let region = Region::Intersection {
        of: vec![
            patch.region().clone(),
            Region::Box {
                lo: lo.iter().copied().collect(),
                hi: hi.iter().copied().collect(),
            },
        ],
    };
    let lattice = Lattice::build(&region, &(lo, hi), resolution);
    let delta = lattice.spacing;
    let n = lattice.points.len();
    let mut adj = Adjacency::new(n);
    lattice_metric_edges(patch, &lattice, &mut adj);
    let hash = SpatialHash::new(&lattice.points, delta);
    let attach_radius = stencil_radius(dim) * delta;
    let attach = |q: &Point| -> Vec<(usize, f64)> {
        hash.within(&lattice.points, q, attach_radius)
            .into_iter()
            .filter_map(|i| valid_chord(patch, q, &lattice.points[i], 8).map(|w| (i, w)))
            .collect()
    };
    let sources = attach(x);
    let targets = attach(y);
    let direct = valid_chord(patch, x, y, 16);
    let sp = dijkstra(&adj, &sources);
    let mut best: Option<(f64, Option<usize>)> = direct.map(|d| (d, None));
    for (j, w) in targets {
        let c = sp.dist[j] + w;
        if c.is_finite() && best.map_or(true, |b| c < b.0) {
            best = Some((c, Some(j)));
        }
    }
    let (graph_value, end) = best.ok_or(GeoError::Disconnected)?;
    let mut path = vec![x.clone()];
    if let Some(j) = end {
        path.extend(sp.path_to(j).into_iter().map(|(i, _)| lattice.points[i].clone()));
    }
    path.push(y.clone());
    let hops = path.len() - 1;
    let refined = shorten_polyline(patch, &path, 400);
    let value = polyline_length(patch, &refined).min(graph_value);
    Ok(DistanceEstimate {
        value,
        graph_value,
        resolution: delta,
        hops,
        path: refined,
    })
}
