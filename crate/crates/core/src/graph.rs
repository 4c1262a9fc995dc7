//! Point-cloud graph primitives: lattice sampling, spatial hashing, chord
//! weights, Dijkstra and discrete curve shortening.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::geometry::{ManifoldPatch, Point};
use crate::quadrature::GL5;
use crate::region::Region;

/// Hard cap on lattice nodes; coarser spacing is chosen above it.
pub const MAX_NODES: usize = 400_000;

/// Stencil radius (in lattice units) for metric edges; primitive offsets only.
pub fn stencil_radius(dim: usize) -> f64 {
    match dim {
        1 => 1.0,
        2 => 3.7,
        3 => 2.3,
        _ => 1.5,
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive integer offsets `o` with `0 < |o| <= radius` and first nonzero
/// coordinate positive (one representative per direction pair).
pub fn primitive_offsets(dim: usize, radius: f64) -> Vec<Vec<i64>> {
    let r = radius.floor() as i64;
    let mut out = Vec::new();
    let mut cur = vec![-r; dim];
    loop {
        let n2: i64 = cur.iter().map(|c| c * c).sum();
        let g = cur.iter().fold(0, |g, &c| gcd(g, c));
        let first = cur.iter().find(|c| **c != 0).copied().unwrap_or(0);
        if n2 > 0 && (n2 as f64) <= radius * radius + 1e-9 && g == 1 && first > 0 {
            out.push(cur.clone());
        }
        let mut k = 0;
        loop {
            if k == dim {
                return out;
            }
            cur[k] += 1;
            if cur[k] > r {
                cur[k] = -r;
                k += 1;
            } else {
                break;
            }
        }
    }
}

/// Lattice `spacing * Z^dim` restricted to a box and a region.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub spacing: f64,
    pub points: Vec<Point>,
    pub index: HashMap<Vec<i64>, usize>,
    pub keys: Vec<Vec<i64>>,
}

impl Lattice {
    pub fn build(region: &Region, bounds: &(Point, Point), spacing: f64) -> Lattice {
        let dim = bounds.0.len();
        let mut spacing = spacing;
        loop {
            let count: f64 = (0..dim)
                .map(|k| ((bounds.1[k] - bounds.0[k]) / spacing).floor() + 1.0)
                .product();
            if count <= MAX_NODES as f64 {
                break;
            }
            log::warn!("lattice spacing {spacing} exceeds the node cap; coarsening");
            spacing *= 1.25;
        }
        let lo: Vec<i64> = (0..dim).map(|k| (bounds.0[k] / spacing).ceil() as i64).collect();
        let hi: Vec<i64> = (0..dim).map(|k| (bounds.1[k] / spacing).floor() as i64).collect();
        let mut keys = Vec::new();
        let mut points = Vec::new();
        let mut cur = lo.clone();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Lattice {
                spacing,
                points,
                index: HashMap::new(),
                keys,
            };
        }
        loop {
            let p = DVector::from_iterator(dim, cur.iter().map(|&c| c as f64 * spacing));
            if region.contains(&p) {
                keys.push(cur.clone());
                points.push(p);
            }
            let mut k = 0;
            loop {
                if k == dim {
                    let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
                    return Lattice {
                        spacing,
                        points,
                        index,
                        keys,
                    };
                }
                cur[k] += 1;
                if cur[k] > hi[k] {
                    cur[k] = lo[k];
                    k += 1;
                } else {
                    break;
                }
            }
        }
    }
}

/// Uniform-cell spatial hash over a fixed point set.
#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl SpatialHash {
    pub fn new(points: &[Point], cell: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        SpatialHash { cell, cells }
    }

    fn key(p: &Point, cell: f64) -> Vec<i64> {
        p.iter().map(|c| (c / cell).floor() as i64).collect()
    }

    /// Indices of points within Euclidean `radius` of `x`, in ascending order.
    pub fn within(&self, points: &[Point], x: &Point, radius: f64) -> Vec<usize> {
        let dim = x.len();
        let lo: Vec<i64> = x.iter().map(|c| ((c - radius) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|c| ((c + radius) / self.cell).floor() as i64).collect();
        let mut out = Vec::new();
        let mut cur = lo.clone();
        loop {
            if let Some(ids) = self.cells.get(&cur) {
                for &i in ids {
                    if (&points[i] - x).norm() <= radius {
                        out.push(i);
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == dim {
                    out.sort_unstable();
                    return out;
                }
                cur[k] += 1;
                if cur[k] > hi[k] {
                    cur[k] = lo[k];
                    k += 1;
                } else {
                    break;
                }
            }
        }
    }

    /// The `k` nearest points to `x` (ties broken by index).
    pub fn nearest(&self, points: &[Point], x: &Point, k: usize) -> Vec<usize> {
        if points.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut radius = self.cell;
        loop {
            let found = self.within(points, x, radius);
            if found.len() >= k || found.len() == points.len() || radius > 1e9 * self.cell {
                let mut found: Vec<(f64, usize)> =
                    found.into_iter().map(|i| ((&points[i] - x).norm(), i)).collect();
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                found.truncate(k);
                return found.into_iter().map(|(_, i)| i).collect();
            }
            radius *= 2.0;
        }
    }
}

/// Riemannian length of the straight chord `a -> b` by 5-point Gauss–Legendre.
pub fn chord_length(patch: &ManifoldPatch, a: &Point, b: &Point) -> f64 {
    let d = b - a;
    GL5.iter()
        .map(|(s, w)| {
            let x = a + &d * *s;
            w * (d.transpose() * patch.metric_raw(&x) * &d)[(0, 0)].max(0.0).sqrt()
        })
        .sum()
}

/// Chord length when the chord stays in the patch domain, sampled at `samples` points.
pub fn valid_chord(patch: &ManifoldPatch, a: &Point, b: &Point, samples: usize) -> Option<f64> {
    if patch.region().contains_chord(a, b, samples) {
        Some(chord_length(patch, a, b))
    } else {
        None
    }
}

/// Sum of chord lengths of a polyline.
pub fn polyline_length(patch: &ManifoldPatch, points: &[Point]) -> f64 {
    points.windows(2).map(|w| chord_length(patch, &w[0], &w[1])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Metric,
    Orbit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: u32,
    pub weight: f64,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default)]
pub struct Adjacency {
    pub edges: Vec<Vec<Edge>>,
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        Adjacency {
            edges: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn add_undirected(&mut self, a: usize, b: usize, weight: f64, kind: EdgeKind) {
        self.edges[a].push(Edge {
            to: b as u32,
            weight,
            kind,
        });
        self.edges[b].push(Edge {
            to: a as u32,
            weight,
            kind,
        });
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorts every neighbor list so traversal order is independent of build order.
    pub fn canonicalize(&mut self) {
        for list in &mut self.edges {
            list.sort_by(|a, b| a.to.cmp(&b.to).then(a.weight.total_cmp(&b.weight)));
            list.dedup_by(|a, b| a.to == b.to && a.kind == b.kind);
        }
    }
}

/// Metric edges between lattice neighbors along primitive stencil offsets.
pub fn lattice_metric_edges(patch: &ManifoldPatch, lattice: &Lattice, adj: &mut Adjacency) {
    let dim = patch.dim();
    let offsets = primitive_offsets(dim, stencil_radius(dim));
    let found: Vec<Vec<(usize, f64)>> = lattice
        .keys
        .par_iter()
        .enumerate()
        .map(|(i, key)| {
            let mut local = Vec::new();
            for o in &offsets {
                let nk: Vec<i64> = key.iter().zip(o).map(|(a, b)| a + b).collect();
                if let Some(&j) = lattice.index.get(&nk) {
                    if let Some(w) = valid_chord(patch, &lattice.points[i], &lattice.points[j], 8) {
                        local.push((j, w));
                    }
                }
            }
            local
        })
        .collect();
    for (i, list) in found.into_iter().enumerate() {
        for (j, w) in list {
            adj.add_undirected(i, j, w, EdgeKind::Metric);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single- or multi-source shortest path tree.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub dist: Vec<f64>,
    pub pred: Vec<Option<(u32, EdgeKind)>>,
}

impl ShortestPaths {
    /// Node sequence from a source to `node`, each paired with the kind of the
    /// edge arriving at it (`None` for the source).
    pub fn path_to(&self, node: usize) -> Vec<(usize, Option<EdgeKind>)> {
        let mut out = vec![(node, None)];
        let mut cur = node;
        while let Some((p, kind)) = self.pred[cur] {
            out.last_mut().unwrap().1 = Some(kind);
            out.push((p as usize, None));
            cur = p as usize;
        }
        out.reverse();
        out
    }
}

/// Dijkstra from sources with initial costs.
pub fn dijkstra(adj: &Adjacency, sources: &[(usize, f64)]) -> ShortestPaths {
    dijkstra_until(adj, sources, f64::INFINITY, &[])
}

/// Dijkstra that stops once the frontier passes `bound` or every node in
/// `targets` is settled (when `targets` is non-empty). Unsettled nodes keep
/// tentative distances, which are upper bounds realized by their `pred` paths.
pub fn dijkstra_until(adj: &Adjacency, sources: &[(usize, f64)], bound: f64, targets: &[usize]) -> ShortestPaths {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut heap = BinaryHeap::new();
    let mut pending: HashSet<usize> = targets.iter().copied().collect();
    let track = !pending.is_empty();
    for &(s, c) in sources {
        if c < dist[s] {
            dist[s] = c;
            heap.push(HeapItem { dist: c, node: s });
        }
    }
    while let Some(HeapItem { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        if d > bound {
            break;
        }
        if track {
            pending.remove(&node);
            if pending.is_empty() {
                break;
            }
        }
        for e in &adj.edges[node] {
            let nd = d + e.weight;
            let to = e.to as usize;
            if nd < dist[to] {
                dist[to] = nd;
                pred[to] = Some((node as u32, e.kind));
                heap.push(HeapItem { dist: nd, node: to });
            }
        }
    }
    ShortestPaths { dist, pred }
}

/// Shortens a polyline with fixed endpoints by local vertex moves, keeping
/// every chord inside the patch. Returns the shortened polyline.
pub fn shorten_polyline(patch: &ManifoldPatch, points: &[Point], iterations: usize) -> Vec<Point> {
    let mut pts = points.to_vec();
    if pts.len() < 3 {
        return pts;
    }
    let seg = |a: &Point, b: &Point| valid_chord(patch, a, b, 4);
    let local = |pts: &[Point], i: usize, p: &Point| -> Option<f64> {
        Some(seg(&pts[i - 1], p)? + seg(p, &pts[i + 1])?)
    };
    let mut total = polyline_length(patch, &pts);
    for _ in 0..iterations {
        for i in 1..pts.len() - 1 {
            let Some(cur) = local(&pts, i, &pts[i]) else {
                continue;
            };
            let mid = (&pts[i - 1] + &pts[i + 1]) * 0.5;
            let mut best = (cur, pts[i].clone());
            let mut lambda = 1.0;
            for _ in 0..4 {
                let cand = &pts[i] + (&mid - &pts[i]) * lambda;
                if patch.contains(&cand) {
                    if let Some(v) = local(&pts, i, &cand) {
                        if v < best.0 - 1e-15 {
                            best = (v, cand);
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            if best.0 >= cur - 1e-15 {
                // coordinate-gradient step for curved metrics
                let h = 1e-7 * (1.0 + pts[i].norm());
                let mut grad = DVector::zeros(pts[i].len());
                for k in 0..pts[i].len() {
                    let mut xp = pts[i].clone();
                    xp[k] += h;
                    let mut xm = pts[i].clone();
                    xm[k] -= h;
                    if let (Some(a), Some(b)) = (local(&pts, i, &xp), local(&pts, i, &xm)) {
                        grad[k] = (a - b) / (2.0 * h);
                    }
                }
                let scale = (&pts[i + 1] - &pts[i - 1]).norm() * 0.25;
                if grad.norm() > 1e-12 {
                    let dir = -&grad / grad.norm();
                    let mut step = scale;
                    for _ in 0..12 {
                        let cand = &pts[i] + &dir * step;
                        if patch.contains(&cand) {
                            if let Some(v) = local(&pts, i, &cand) {
                                if v < best.0 - 1e-15 {
                                    best = (v, cand);
                                    break;
                                }
                            }
                        }
                        step *= 0.5;
                    }
                }
            }
            pts[i] = best.1;
        }
        let new_total = polyline_length(patch, &pts);
        if total - new_total <= 1e-13 * (1.0 + total) {
            total = new_total;
            break;
        }
        total = new_total;
    }
    let _ = total;
    pts
}

/// Splits every chord longer than `max_len` (Euclidean) into equal pieces.
pub fn densify(points: &[Point], max_len: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(points.len());
    for w in points.windows(2) {
        out.push(w[0].clone());
        let len = (&w[1] - &w[0]).norm();
        let n = (len / max_len).ceil() as usize;
        for k in 1..n {
            let s = k as f64 / n as f64;
            out.push(&w[0] * (1.0 - s) + &w[1] * s);
        }
    }
    if let Some(last) = points.last() {
        out.push(last.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        DVector::from_row_slice(v)
    }

    #[test]
    fn primitive_offsets_in_the_plane() {
        let o = primitive_offsets(2, 3.7);
        assert_eq!(o.len(), 16);
        assert!(o.contains(&vec![1, 0]));
        assert!(o.contains(&vec![2, 3]));
        assert!(!o.contains(&vec![2, 2]));
        assert_eq!(primitive_offsets(3, 2.3).len(), 25);
    }

    #[test]
    fn lattice_respects_region_and_symmetry() {
        let region = Region::Point { at: vec![0.0, 0.0] }.complement();
        let l = Lattice::build(&region, &(p(&[-1.0, -1.0]), p(&[1.0, 1.0])), 0.25);
        assert_eq!(l.points.len(), 81 - 1);
        assert!(l.index.contains_key(&vec![-4, 4]));
        assert!(!l.index.contains_key(&vec![0, 0]));
    }

    #[test]
    fn spatial_hash_queries() {
        let pts: Vec<Point> = (0..10).map(|i| p(&[i as f64 * 0.1, 0.0])).collect();
        let h = SpatialHash::new(&pts, 0.15);
        assert_eq!(h.within(&pts, &p(&[0.2, 0.0]), 0.11), vec![1, 2, 3]);
        assert_eq!(h.nearest(&pts, &p(&[0.94, 0.0]), 2), vec![9, 8]);
    }

    #[test]
    fn dijkstra_on_a_square() {
        let mut adj = Adjacency::new(4);
        adj.add_undirected(0, 1, 1.0, EdgeKind::Metric);
        adj.add_undirected(1, 2, 1.0, EdgeKind::Metric);
        adj.add_undirected(0, 3, 0.5, EdgeKind::Orbit);
        adj.add_undirected(3, 2, 0.5, EdgeKind::Metric);
        let sp = dijkstra(&adj, &[(0, 0.0)]);
        assert_eq!(sp.dist[2], 1.0);
        let path = sp.path_to(2);
        assert_eq!(path.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 3, 2]);
        assert_eq!(path[1].1, Some(EdgeKind::Orbit));
    }

    #[test]
    fn shortening_straightens_a_zigzag() {
        let patch = ManifoldPatch::euclidean(Region::All, (p(&[-5.0, -5.0]), p(&[5.0, 5.0])));
        let zig: Vec<Point> = (0..=10)
            .map(|i| p(&[i as f64 * 0.3, if i % 2 == 1 { 0.2 } else { 0.0 }]))
            .collect();
        let out = shorten_polyline(&patch, &zig, 500);
        assert!((polyline_length(&patch, &out) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn chord_length_polar_radial() {
        let patch = ManifoldPatch::polar(Region::All, (p(&[0.1, -3.0]), p(&[3.0, 3.0])));
        let l = chord_length(&patch, &p(&[1.0, 0.0]), &p(&[2.0, 0.0]));
        assert!((l - 1.0).abs() < 1e-14);
        // an arc of the unit circle at fixed r = 1 in polar coordinates has length |Δφ|
        let l = chord_length(&patch, &p(&[1.0, 0.0]), &p(&[1.0, 0.7]));
        assert!((l - 0.7).abs() < 1e-14);
    }
}
