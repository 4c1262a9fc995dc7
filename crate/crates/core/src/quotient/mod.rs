//! The normal pseudo-distance on the quotient: chains, the orbit graph that
//! relaxes the chain infimum into a shortest-path problem, the curve-length
//! characterization and metric-axiom checks.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::curves::{CurveRef, Polyline, StackyCurve, Transition};
use crate::error::{GeoError, Result};
use crate::geometry::{riemannian_distance, ManifoldPatch, Point};
use crate::graph::{
    chord_length, dijkstra, dijkstra_until, lattice_metric_edges, polyline_length, shorten_polyline, stencil_radius, valid_chord,
    Adjacency, EdgeKind, Lattice, SpatialHash,
};
use crate::groupoid::{Arrow, GroupoidModel, Invariants};

/// Default lattice spacing as a fraction of the patch diameter.
pub const DEFAULT_RESOLUTION_FRACTION: f64 = 1.0 / 200.0;
/// Neighbours in sorted order used for one-dimensional orbit invariants.
const SORTED_NEIGHBOURS: usize = 4;
/// Nearest neighbours in invariant space for higher-dimensional invariants.
const INVARIANT_NEIGHBOURS: usize = 6;
/// Curve-shortening sweeps applied to each run of a shortest path.
const SHORTEN_ITERATIONS: usize = 200;
/// Default vertex budget for curve realizations.
pub const DEFAULT_CURVE_BUDGET: usize = 20_000;

/// A chain `(x_0, …, x_{2n+1})`: `x_{2i} ~ x_{2i+1}` in one orbit, joined by
/// Riemannian segments `x_{2i−1} → x_{2i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub points: Vec<Point>,
}

impl Chain {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 || points.len() % 2 != 0 {
            return Err(GeoError::InvalidChain(format!(
                "a chain needs an even number of points (got {})",
                points.len()
            )));
        }
        Ok(Chain { points })
    }
}

fn orbit_tol(x: &Point) -> f64 {
    1e-8 * (1.0 + x.norm())
}

/// Sum of Riemannian distances over the metric links of a valid chain.
pub fn chain_length(model: &GroupoidModel, chain: &Chain, resolution: Option<f64>) -> Result<f64> {
    let pts = &chain.points;
    for i in (0..pts.len()).step_by(2) {
        if !model.same_orbit(&pts[i], &pts[i + 1], orbit_tol(&pts[i + 1])) {
            return Err(GeoError::InvalidChain(format!("points {i} and {} lie in different orbits", i + 1)));
        }
    }
    let res = resolution.unwrap_or_else(|| default_resolution(model.patch()));
    let mut total = 0.0;
    for i in (1..pts.len() - 1).step_by(2) {
        if pts[i] != pts[i + 1] {
            total += riemannian_distance(model.patch(), &pts[i], &pts[i + 1], res)?.value;
        }
    }
    Ok(total)
}

pub fn default_resolution(patch: &ManifoldPatch) -> f64 {
    patch.diameter() * DEFAULT_RESOLUTION_FRACTION
}

/// Lattice graph with metric edges between neighbours and orbit edges between
/// nodes whose orbits (nearly) meet. An orbit edge `i → j` stands for the
/// jump from `x_i` to the orbit point `z_ij` nearest `x_j`, followed by the
/// chord `z_ij → x_j`; its weight is that chord's length (zero for exact
/// orbit matches).
#[derive(Debug, Clone)]
pub struct OrbitGraph {
    model: GroupoidModel,
    lattice: Lattice,
    adjacency: Adjacency,
    hash: SpatialHash,
    jump_targets: HashMap<(u32, u32), Point>,
    components: usize,
}

/// Result of a pseudo-distance query.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceReport {
    /// Upper estimate (shortest path after run shortening).
    pub value: f64,
    /// Crude lower estimate `value − 2δ·hops`, clipped at zero.
    pub lower: f64,
    pub graph_value: f64,
    pub resolution: f64,
    pub hops: usize,
    /// Polyline runs in the chart; consecutive runs are joined by orbit jumps.
    #[serde(skip)]
    pub runs: Vec<Vec<Point>>,
}

impl DistanceReport {
    fn zero(x: &Point, resolution: f64) -> Self {
        DistanceReport {
            value: 0.0,
            lower: 0.0,
            graph_value: 0.0,
            resolution,
            hops: 0,
            runs: vec![vec![x.clone()]],
        }
    }
}

/// Candidate connections of a query point to graph nodes: `(node, cost, jump)`
/// where `jump` is the orbit image of the query used before the chord.
type Attachment = Vec<(usize, f64, Option<Point>)>;

impl OrbitGraph {
    pub fn build(model: &GroupoidModel, resolution: Option<f64>) -> Result<OrbitGraph> {
        let patch = model.patch();
        let spacing = resolution.unwrap_or_else(|| default_resolution(patch));
        if !(spacing > 0.0) {
            return Err(GeoError::InvalidModel(format!("graph resolution must be positive (got {spacing})")));
        }
        let lattice = Lattice::build(patch.region(), patch.bounds(), spacing);
        let delta = lattice.spacing;
        let n = lattice.points.len();
        if n == 0 {
            return Err(GeoError::Disconnected);
        }
        let mut adjacency = Adjacency::new(n);
        lattice_metric_edges(patch, &lattice, &mut adjacency);
        let hash = SpatialHash::new(&lattice.points, delta);
        let mut jump_targets = HashMap::new();
        for (i, j, w, zij, zji) in orbit_edges(model, &lattice.points, &hash, delta) {
            adjacency.add_undirected(i, j, w, EdgeKind::Orbit);
            jump_targets.insert((i as u32, j as u32), zij);
            jump_targets.insert((j as u32, i as u32), zji);
        }
        adjacency.canonicalize();
        let components = count_components(&adjacency);
        if components > 1 {
            log::warn!("orbit graph has {components} connected components at resolution {delta}");
        }
        Ok(OrbitGraph {
            model: model.clone(),
            lattice,
            adjacency,
            hash,
            jump_targets,
            components,
        })
    }

    pub fn model(&self) -> &GroupoidModel {
        &self.model
    }

    pub fn resolution(&self) -> f64 {
        self.lattice.spacing
    }

    pub fn node_count(&self) -> usize {
        self.lattice.points.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.edge_count()
    }

    pub fn orbit_edge_count(&self) -> usize {
        self.adjacency
            .edges
            .iter()
            .flatten()
            .filter(|e| e.kind == EdgeKind::Orbit)
            .count()
            / 2
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn nodes(&self) -> &[Point] {
        &self.lattice.points
    }

    fn attach(&self, q: &Point) -> Attachment {
        let patch = self.model.patch();
        let radius = stencil_radius(patch.dim()) * self.resolution();
        let mut out: Attachment = Vec::new();
        let images = self.model.discrete_images(q);
        for (k, z) in images.iter().enumerate() {
            for i in self.hash.within(&self.lattice.points, z, radius) {
                if let Some(w) = valid_chord(patch, z, &self.lattice.points[i], 8) {
                    out.push((i, w, (k > 0).then(|| z.clone())));
                }
            }
        }
        out
    }

    /// Unrefined graph distances from the class of `y`, for many cheap queries.
    pub fn distance_field(&self, y: &Point) -> DistanceField<'_> {
        let seeds: Vec<(usize, f64)> = self.attach(y).into_iter().map(|(i, w, _)| (i, w)).collect();
        DistanceField {
            graph: self,
            dist: dijkstra(&self.adjacency, &seeds).dist,
        }
    }

    /// Indices of nodes within Euclidean `radius` of `x`.
    pub fn nodes_within(&self, x: &Point, radius: f64) -> Vec<usize> {
        self.hash.within(&self.lattice.points, x, radius)
    }

    /// Shortest graph distances from weighted seed nodes.
    pub fn multi_source_distances(&self, seeds: &[(usize, f64)]) -> Vec<f64> {
        dijkstra(&self.adjacency, seeds).dist
    }

    /// Graph estimate of `d_N([x], [y])`.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<DistanceReport> {
        let model = &self.model;
        let patch = model.patch();
        for p in [x, y] {
            if !model.contains(p) {
                return Err(GeoError::OutOfDomain {
                    point: p.iter().copied().collect(),
                });
            }
        }
        let delta = self.resolution();
        if model.same_orbit(x, y, orbit_tol(y)) {
            return Ok(DistanceReport::zero(x, delta));
        }
        let mut candidates: Vec<(f64, Vec<Vec<Point>>, usize)> = Vec::new();
        if let Some(w) = valid_chord(patch, x, y, 16) {
            candidates.push((w, vec![vec![x.clone(), y.clone()]], 1));
        }
        for (from, to, flip) in [(x, y, false), (y, x, true)] {
            if let Some(arrow) = model.nearest_orbit_arrow(from, to) {
                let z = arrow.target();
                if let Some(w) = valid_chord(patch, &z, to, 16) {
                    let runs = if flip {
                        vec![vec![x.clone(), z], vec![y.clone()]]
                    } else {
                        vec![vec![x.clone()], vec![z, y.clone()]]
                    };
                    candidates.push((w, runs, 1));
                }
            }
        }
        let sources = self.attach(x);
        let targets = self.attach(y);
        let mut source_jump: HashMap<usize, Option<Point>> = HashMap::new();
        let mut seeds: Vec<(usize, f64)> = Vec::new();
        for (i, w, jump) in sources {
            if seeds.iter().all(|(s, c)| *s != i || *c > w) {
                seeds.retain(|(s, _)| *s != i);
                seeds.push((i, w));
                source_jump.insert(i, jump);
            }
        }
        let bound = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let target_nodes: Vec<usize> = targets.iter().map(|t| t.0).collect();
        let sp = dijkstra_until(&self.adjacency, &seeds, bound, &target_nodes);
        let mut best_graph: Option<(f64, usize, Option<Point>)> = None;
        for (j, w, jump) in targets {
            let c = sp.dist[j] + w;
            if c.is_finite() && best_graph.as_ref().map_or(true, |b| c < b.0) {
                best_graph = Some((c, j, jump));
            }
        }
        let graph_value = best_graph.as_ref().map_or(f64::INFINITY, |b| b.0);
        if let Some((c, j, end_jump)) = best_graph {
            let steps = sp.path_to(j);
            let first = steps[0].0;
            let mut runs: Vec<Vec<Point>> = vec![vec![x.clone()]];
            if let Some(Some(z)) = source_jump.get(&first) {
                runs.push(vec![z.clone()]);
            }
            runs.last_mut().unwrap().push(self.lattice.points[first].clone());
            for w in steps.windows(2) {
                let (a, b) = (w[0].0, w[1].0);
                match w[1].1 {
                    Some(EdgeKind::Orbit) => {
                        let z = self.jump_targets[&(a as u32, b as u32)].clone();
                        runs.push(vec![z]);
                    }
                    _ => {}
                }
                runs.last_mut().unwrap().push(self.lattice.points[b].clone());
            }
            match end_jump {
                Some(z) => {
                    runs.last_mut().unwrap().push(z);
                    runs.push(vec![y.clone()]);
                }
                None => runs.last_mut().unwrap().push(y.clone()),
            }
            candidates.push((c, runs, steps.len() + 1));
        }
        if candidates.is_empty() {
            return Err(GeoError::Disconnected);
        }
        let mut best: Option<(f64, Vec<Vec<Point>>, usize)> = None;
        for (_, runs, hops) in candidates {
            let refined: Vec<Vec<Point>> = runs
                .iter()
                .map(|r| shorten_polyline(patch, &dedup(r), SHORTEN_ITERATIONS))
                .collect();
            let len: f64 = refined.iter().map(|r| polyline_length(patch, r)).sum();
            if best.as_ref().map_or(true, |b| len < b.0) {
                best = Some((len, refined, hops));
            }
        }
        let (value, runs, hops) = best.unwrap();
        let value = value.min(graph_value);
        Ok(DistanceReport {
            value,
            lower: (value - 2.0 * delta * hops as f64).max(0.0),
            graph_value,
            resolution: delta,
            hops,
            runs,
        })
    }
}

/// Graph distances to a fixed class; see [`OrbitGraph::distance_field`].
pub struct DistanceField<'a> {
    graph: &'a OrbitGraph,
    dist: Vec<f64>,
}

impl DistanceField<'_> {
    /// Graph estimate of the distance from `z`'s class (infinite when `z`
    /// cannot be attached to the graph).
    pub fn to(&self, z: &Point) -> f64 {
        if !self.graph.model.contains(z) {
            return f64::INFINITY;
        }
        self.graph
            .attach(z)
            .into_iter()
            .map(|(i, w, _)| self.dist[i] + w)
            .fold(f64::INFINITY, f64::min)
    }
}

fn dedup(run: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(run.len());
    for p in run {
        if out.last().map_or(true, |q| (q - p).norm() > 1e-15 * (1.0 + p.norm())) {
            out.push(p.clone());
        }
    }
    out
}

fn count_components(adj: &Adjacency) -> usize {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for e in &adj.edges[u] {
                let v = e.to as usize;
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

type OrbitEdge = (usize, usize, f64, Point, Point);

/// Orbit edges: exact images for discrete symmetries, and nodes that are
/// neighbours in invariant space for continuous orbits.
fn orbit_edges(model: &GroupoidModel, points: &[Point], hash: &SpatialHash, delta: f64) -> Vec<OrbitEdge> {
    let patch = model.patch();
    let reach = stencil_radius(patch.dim()) * delta;
    let exact = |a: &Point, b: &Point| (a - b).norm() <= 1e-12 * (1.0 + b.norm());
    let weight = |z: &Point, x: &Point| -> Option<f64> {
        if exact(z, x) {
            Some(0.0)
        } else if (z - x).norm() <= reach {
            valid_chord(patch, z, x, 8)
        } else {
            None
        }
    };
    // discrete images
    let mut edges: Vec<OrbitEdge> = points
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, x)| {
            let mut local = Vec::new();
            let images = model.discrete_images(x);
            for z in images.iter().skip(1) {
                for j in hash.within(points, z, 1.5 * delta) {
                    if j <= i {
                        continue;
                    }
                    let back = model
                        .arrow_between(x, z, orbit_tol(z))
                        .and_then(|a| a.inverse().ok())
                        .map(|inv| match inv {
                            Arrow::Isometry { map, .. } => map.apply(&points[j]),
                            other => other.target(),
                        });
                    if let (Some(w), Some(zb)) = (weight(z, &points[j]), back) {
                        let wb = weight(&zb, x).unwrap_or(w);
                        local.push((i, j, w.max(wb), z.clone(), zb));
                    }
                }
            }
            local
        })
        .collect();
    // neighbours in invariant space
    let mut groups: HashMap<Option<usize>, Vec<(usize, DVector<f64>)>> = HashMap::new();
    for (i, x) in points.iter().enumerate() {
        match model.invariants(x) {
            Invariants::None => {}
            Invariants::Global(v) => groups.entry(None).or_default().push((i, v)),
            Invariants::PerChart(list) => {
                for (c, v) in list {
                    groups.entry(Some(c)).or_default().push((i, v));
                }
            }
        }
    }
    let mut keys: Vec<Option<usize>> = groups.keys().copied().collect();
    keys.sort();
    for key in keys {
        let members = &groups[&key];
        let pairs = invariant_pairs(members, delta);
        let found: Vec<OrbitEdge> = pairs
            .par_iter()
            .filter_map(|&(i, j)| {
                let (xi, xj) = (&points[i], &points[j]);
                let zij = jump_toward(model, key, xi, xj)?;
                let zji = jump_toward(model, key, xj, xi)?;
                let w = weight(&zij, xj)?;
                let wb = weight(&zji, xi)?;
                Some((i, j, w.max(wb), zij, zji))
            })
            .collect();
        edges.extend(found);
    }
    edges
}

fn jump_toward(model: &GroupoidModel, chart: Option<usize>, x: &Point, toward: &Point) -> Option<Point> {
    match (chart, model.kind()) {
        (Some(c), crate::groupoid::ModelKind::Foliation(f)) => {
            let ch = &f.charts[c];
            if !ch.region.contains(x) {
                return None;
            }
            // Euclidean projection of `toward` onto the plaque level set of `x` in chart `c`
            let a = &ch.a;
            let r = a * toward - a * x;
            let aat = a * a.transpose();
            let z = toward - a.transpose() * aat.lu().solve(&r)?;
            (ch.region.contains(&z) && model.patch().contains(&z)).then_some(z)
        }
        _ => model.nearest_orbit_arrow(x, toward).map(|a| a.target()),
    }
}

/// Candidate pairs of nodes with nearby invariants.
fn invariant_pairs(members: &[(usize, DVector<f64>)], delta: f64) -> Vec<(usize, usize)> {
    if members.is_empty() {
        return Vec::new();
    }
    let dim = members[0].1.len();
    let mut pairs = Vec::new();
    if dim == 1 {
        let mut sorted: Vec<&(usize, DVector<f64>)> = members.iter().collect();
        sorted.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]).then(a.0.cmp(&b.0)));
        for p in 0..sorted.len() {
            for q in p + 1..(p + 1 + SORTED_NEIGHBOURS).min(sorted.len()) {
                if (sorted[q].1[0] - sorted[p].1[0]).abs() <= 2.0 * delta {
                    pairs.push((sorted[p].0.min(sorted[q].0), sorted[p].0.max(sorted[q].0)));
                }
            }
        }
    } else {
        let values: Vec<Point> = members.iter().map(|m| m.1.clone()).collect();
        let cell = delta.max(1e-12);
        let hash = SpatialHash::new(&values, cell);
        for (p, v) in values.iter().enumerate() {
            for q in hash.nearest(&values, v, INVARIANT_NEIGHBOURS + 1) {
                if q != p && (&values[q] - v).norm() <= 2.0 * delta {
                    let (a, b) = (members[p].0, members[q].0);
                    pairs.push((a.min(b), a.max(b)));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Pseudo-distance with a freshly built graph.
pub fn d_n(model: &GroupoidModel, x: &Point, y: &Point, resolution: Option<f64>) -> Result<DistanceReport> {
    OrbitGraph::build(model, resolution)?.distance(x, y)
}

/// A stacky curve realizing (an upper bound for) `d_N`, with its length.
#[derive(Debug, Clone)]
pub struct CurveDistance {
    pub length: f64,
    pub graph: DistanceReport,
    pub curve: StackyCurve,
}

/// Builds a stacky curve from the runs of a shortest path: each run is a
/// polyline segment, and orbit jumps become transitions on overlaps where
/// both segments are at rest.
pub fn curve_from_runs(model: &GroupoidModel, runs: &[Vec<Point>]) -> Result<StackyCurve> {
    let pause = 1e-3;
    let mut intervals = Vec::new();
    let mut segments: Vec<CurveRef> = Vec::new();
    let mut start = 0.0;
    for run in runs {
        let run = if run.len() == 1 { vec![run[0].clone(), run[0].clone()] } else { run.clone() };
        let lengths: Vec<f64> = run.windows(2).map(|w| chord_length(model.patch(), &w[0], &w[1])).collect();
        let total: f64 = lengths.iter().sum();
        let span = total.max(pause);
        let mut times = vec![start, start + pause];
        let mut points = vec![run[0].clone(), run[0].clone()];
        let mut acc = 0.0;
        for (k, l) in lengths.iter().enumerate() {
            acc += if total > 1e-15 { l / total } else { 1.0 / lengths.len() as f64 };
            times.push(start + pause + span * acc);
            points.push(run[k + 1].clone());
        }
        let end = start + 2.0 * pause + span;
        times.push(end);
        points.push(run[run.len() - 1].clone());
        // drop zero-length pieces so vertex times increase strictly
        let mut t2 = vec![times[0]];
        let mut p2 = vec![points[0].clone()];
        for (t, p) in times.into_iter().zip(points).skip(1) {
            if t > *t2.last().unwrap() + 1e-15 {
                t2.push(t);
                p2.push(p);
            }
        }
        intervals.push((start, end));
        segments.push(Arc::new(Polyline::new(t2, p2)?));
        start = end - pause;
    }
    let mut transitions = Vec::new();
    for k in 0..runs.len().saturating_sub(1) {
        let a = runs[k].last().unwrap();
        let b = &runs[k + 1][0];
        let arrow = model
            .arrow_between(a, b, 1e-6 * (1.0 + b.norm()))
            .ok_or_else(|| GeoError::InvalidChain(format!("orbit jump {k} joins points in different orbits")))?;
        transitions.push(match arrow {
            Arrow::Isometry { map, .. } => Transition::Isometry(map),
            _ => Transition::Implied,
        });
    }
    StackyCurve::with_tolerance(model.clone(), intervals, segments, transitions, 1e-6)
}

/// Upper bound on the infimum of stacky-curve lengths joining `[x]` and `[y]`.
pub fn d_n_via_curves(graph: &OrbitGraph, x: &Point, y: &Point, budget: usize) -> Result<CurveDistance> {
    let report = graph.distance(x, y)?;
    let vertices: usize = report.runs.iter().map(Vec::len).sum();
    if vertices > budget {
        return Err(GeoError::BudgetExceeded(format!(
            "curve realization needs {vertices} vertices (budget {budget})"
        )));
    }
    let curve = curve_from_runs(graph.model(), &report.runs)?;
    let length = curve.length()?;
    Ok(CurveDistance {
        length,
        graph: report,
        curve,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomCheck {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    pub worst_excess: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomsReport {
    pub resolution: f64,
    pub proper: bool,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomsReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Tally {
    name: &'static str,
    checked: usize,
    violations: usize,
    worst: f64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            checked: 0,
            violations: 0,
            worst: 0.0,
        }
    }
    fn record(&mut self, excess: f64) {
        self.checked += 1;
        if excess > 0.0 {
            self.violations += 1;
            self.worst = self.worst.max(excess);
        }
    }
    fn finish(self) -> AxiomCheck {
        AxiomCheck {
            name: self.name.to_string(),
            checked: self.checked,
            violations: self.violations,
            worst_excess: self.worst,
            pass: self.violations == 0,
        }
    }
}

/// Symmetry, triangle inequality, `d_N ≤ d + 2δ`, vanishing on orbit pairs and
/// (for proper models) positivity on distinct orbits, over sample pairs.
pub fn metric_axioms_report(graph: &OrbitGraph, pairs: &[(Point, Point)]) -> Result<AxiomsReport> {
    let model = graph.model();
    let delta = graph.resolution();
    let slack = 2.0 * delta;
    let mut points: Vec<Point> = Vec::new();
    for (a, b) in pairs {
        for p in [a, b] {
            if !points.iter().any(|q| q == p) {
                points.push(p.clone());
            }
        }
    }
    let n = points.len();
    let mut table = vec![vec![0.0; n]; n];
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Ok(0.0) } else { graph.distance(&points[i], &points[j]).map(|r| r.value) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, row) in rows.into_iter().enumerate() {
        table[i] = row;
    }
    let mut symmetry = Tally::new("symmetry");
    let mut triangle = Tally::new("triangle_inequality");
    let mut below = Tally::new("bounded_by_ambient_distance");
    let mut orbit_zero = Tally::new("zero_on_orbit_pairs");
    let mut positive = Tally::new("positive_on_distinct_orbits");
    for i in 0..n {
        for j in i + 1..n {
            symmetry.record((table[i][j] - table[j][i]).abs() - slack);
            for k in 0..n {
                if k != i && k != j {
                    triangle.record(table[i][j] - table[i][k] - table[k][j] - slack);
                }
            }
        }
    }
    for (a, b) in pairs {
        let i = points.iter().position(|q| q == a).unwrap();
        let j = points.iter().position(|q| q == b).unwrap();
        if let Ok(d) = riemannian_distance(model.patch(), a, b, delta) {
            below.record(table[i][j] - d.value - slack);
        }
        if model.same_orbit(a, b, orbit_tol(b)) {
            orbit_zero.record(table[i][j]);
        } else if model.is_proper() && !model.same_orbit(a, b, delta) {
            positive.record(if table[i][j] > 0.0 { 0.0 } else { 1.0 });
        }
    }
    Ok(AxiomsReport {
        resolution: delta,
        proper: model.is_proper(),
        checks: vec![
            symmetry.finish(),
            triangle.finish(),
            below.finish(),
            orbit_zero.finish(),
            positive.finish(),
        ],
    })
}

/// CSV rows `x, y, d_N, δ, hops` with coordinates joined by spaces.
pub fn distance_csv(rows: &[(Point, Point, DistanceReport)]) -> String {
    let fmt = |p: &Point| p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ");
    let mut out = String::from("x,y,d_N,delta,hops\n");
    for (x, y, r) in rows {
        out.push_str(&format!("{},{},{},{},{}\n", fmt(x), fmt(y), r.value, r.resolution, r.hops));
    }
    out
}
