use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};

use super::affine::AffineMap;
use super::submersion::kernel_basis;
use crate::error::{GeoError, Result};
use crate::geometry::Point;
use crate::region::Region;

/// Maximum number of chart hops explored when deciding leaf connectivity.
pub const MAX_CHART_HOPS: usize = 64;

/// A foliation chart `f(x) = A x + b` on a region, with the transverse metric
/// on its image.
#[derive(Debug, Clone)]
pub struct FoliationChart {
    pub region: Region,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub transverse_metric: DMatrix<f64>,
}

impl FoliationChart {
    pub fn transverse(&self, x: &Point) -> DVector<f64> {
        &self.a * x + &self.b
    }

    pub fn codim(&self) -> usize {
        self.a.nrows()
    }
}

/// Simple foliation given by chart submersions glued by transverse isometries.
#[derive(Debug, Clone)]
pub struct FoliationData {
    pub charts: Vec<FoliationChart>,
    transitions: HashMap<(usize, usize), AffineMap>,
    pub proper: bool,
    plaque_step: f64,
    plaque_extent: (Point, Point),
}

/// Chain of charts realizing a leaf connection between two points.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPath {
    pub charts: Vec<usize>,
}

impl FoliationData {
    /// `transitions` lists `((j, i), γ_ji)` with `f_j = γ_ji ∘ f_i` on overlaps;
    /// missing reverse directions are filled with inverses.
    pub fn new(
        charts: Vec<FoliationChart>,
        transitions: Vec<((usize, usize), AffineMap)>,
        proper: bool,
        bounds: &(Point, Point),
    ) -> Result<Self> {
        if charts.is_empty() {
            return Err(GeoError::InvalidModel("foliation atlas has no charts".into()));
        }
        let q = charts[0].codim();
        let n = bounds.0.len();
        for (k, c) in charts.iter().enumerate() {
            if c.codim() != q || c.a.ncols() != n || c.b.len() != q || c.transverse_metric.shape() != (q, q) {
                return Err(GeoError::InvalidModel(format!("foliation chart {k} has inconsistent shapes")));
            }
        }
        let mut map = HashMap::new();
        for ((j, i), g) in transitions {
            if i >= charts.len() || j >= charts.len() || g.dim() != q {
                return Err(GeoError::InvalidModel(format!("bad transition ({j}, {i})")));
            }
            map.insert((i, j), g.inverse()?);
            map.insert((j, i), g);
        }
        for i in 0..charts.len() {
            map.insert((i, i), AffineMap::identity(q));
        }
        let diam = (&bounds.1 - &bounds.0).norm();
        Ok(FoliationData {
            charts,
            transitions: map,
            proper,
            plaque_step: diam / 400.0,
            plaque_extent: bounds.clone(),
        })
    }

    pub fn codim(&self) -> usize {
        self.charts[0].codim()
    }

    /// `γ_ji`, or `None` when the atlas has no transition between the charts.
    pub fn transition(&self, j: usize, i: usize) -> Option<&AffineMap> {
        self.transitions.get(&(j, i))
    }

    /// Composite transverse map along a chart path `[c0, c1, ..., ck]`.
    pub fn path_transition(&self, charts: &[usize]) -> Option<AffineMap> {
        let mut m = AffineMap::identity(self.codim());
        for w in charts.windows(2) {
            m = self.transition(w[1], w[0])?.compose(&m);
        }
        Some(m)
    }

    pub fn charts_containing(&self, x: &Point) -> Vec<usize> {
        (0..self.charts.len()).filter(|&c| self.charts[c].region.contains(x)).collect()
    }

    pub fn orbit_tangent_basis(&self, x: &Point) -> Option<Vec<DVector<f64>>> {
        let c = *self.charts_containing(x).first()?;
        Some(kernel_basis(&self.charts[c].a))
    }

    /// Sample points of the plaque through `x` in chart `c`: star-shaped walks
    /// from `x` along leaf directions, stopped at the first exit from the chart.
    pub fn plaque_samples(&self, c: usize, x: &Point) -> Vec<Point> {
        let chart = &self.charts[c];
        let kernel = kernel_basis(&chart.a);
        let mut dirs: Vec<DVector<f64>> = Vec::new();
        match kernel.len() {
            0 => {}
            1 => {
                dirs.push(kernel[0].clone());
                dirs.push(-&kernel[0]);
            }
            2 => {
                for k in 0..16 {
                    let a = k as f64 * std::f64::consts::PI / 8.0;
                    dirs.push(&kernel[0] * a.cos() + &kernel[1] * a.sin());
                }
            }
            _ => {
                for (i, u) in kernel.iter().enumerate() {
                    dirs.push(u.clone());
                    dirs.push(-u);
                    for w in &kernel[i + 1..] {
                        for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                            dirs.push((u * s1 + w * s2).normalize());
                        }
                    }
                }
            }
        }
        let (lo, hi) = &self.plaque_extent;
        let inside_box = |p: &Point| p.iter().zip(lo.iter().zip(hi.iter())).all(|(v, (l, h))| *v >= *l && *v <= *h);
        let mut out = vec![x.clone()];
        for d in dirs {
            let mut k = 1;
            loop {
                let p = x + &d * (k as f64 * self.plaque_step);
                if !inside_box(&p) || !chart.region.contains(&p) {
                    break;
                }
                out.push(p);
                k += 1;
            }
        }
        out
    }

    /// Leaf connection from `x` to `y`: breadth-first search over
    /// (chart, plaque) states, hopping between charts where a plaque meets
    /// another chart.
    pub fn leaf_path(&self, x: &Point, y: &Point, tol: f64) -> Option<LeafPath> {
        let key = |c: usize, w: &DVector<f64>| -> (usize, Vec<i64>) {
            (c, w.iter().map(|v| (v / 1e-9).round() as i64).collect())
        };
        let mut seen = HashSet::new();
        let mut queue: VecDeque<(usize, Point, Vec<usize>)> = VecDeque::new();
        for c in self.charts_containing(x) {
            seen.insert(key(c, &self.charts[c].transverse(x)));
            queue.push_back((c, x.clone(), vec![c]));
        }
        while let Some((c, p, path)) = queue.pop_front() {
            let chart = &self.charts[c];
            if chart.region.contains(y) && (chart.transverse(y) - chart.transverse(&p)).norm() <= tol {
                return Some(LeafPath { charts: path });
            }
            if path.len() > MAX_CHART_HOPS {
                log::warn!("leaf search exceeded {MAX_CHART_HOPS} chart hops; treating points as unrelated");
                return None;
            }
            let samples = self.plaque_samples(c, &p);
            for d in 0..self.charts.len() {
                if d == c || self.transition(d, c).is_none() {
                    continue;
                }
                if let Some(s) = samples.iter().find(|s| self.charts[d].region.contains(s)) {
                    let k = key(d, &self.charts[d].transverse(s));
                    if seen.insert(k) {
                        let mut np = path.clone();
                        np.push(d);
                        queue.push_back((d, s.clone(), np));
                    }
                }
            }
        }
        None
    }

    /// Point on the plaque of `x` nearest to `toward`, over charts containing
    /// `x` (Euclidean projection onto the affine level set).
    pub fn plaque_point_near(&self, x: &Point, toward: &Point) -> Option<(usize, Point)> {
        let mut best: Option<(f64, usize, Point)> = None;
        for c in self.charts_containing(x) {
            let chart = &self.charts[c];
            let pinv = chart.a.clone().pseudo_inverse(1e-12).ok()?;
            let z = toward - pinv * (chart.transverse(toward) - chart.transverse(x));
            if chart.region.contains(&z) {
                let d = (&z - toward).norm();
                if best.as_ref().map_or(true, |b| d < b.0) {
                    best = Some((d, c, z));
                }
            }
        }
        best.map(|(_, c, z)| (c, z))
    }

    /// Transverse coordinates of `x` in each chart containing it.
    pub fn invariants(&self, x: &Point) -> Vec<(usize, DVector<f64>)> {
        self.charts_containing(x)
            .into_iter()
            .map(|c| (c, self.charts[c].transverse(x)))
            .collect()
    }

    /// Maximum violation of `f_j = γ_ji ∘ f_i` at points of chart overlaps and
    /// of `γ_kj ∘ γ_ji = γ_ki` on triple overlaps, plus the worst transverse
    /// isometry defect, over the given sample points.
    pub fn coherence_defects(&self, samples: &[Point]) -> (f64, f64, f64) {
        let mut compat: f64 = 0.0;
        let mut cocycle: f64 = 0.0;
        for x in samples {
            let cs = self.charts_containing(x);
            for &i in &cs {
                for &j in &cs {
                    if let Some(g) = self.transition(j, i) {
                        let fi = self.charts[i].transverse(x);
                        let fj = self.charts[j].transverse(x);
                        compat = compat.max((g.apply(&fi) - fj).norm());
                    }
                    for &k in &cs {
                        if let (Some(gji), Some(gkj), Some(gki)) =
                            (self.transition(j, i), self.transition(k, j), self.transition(k, i))
                        {
                            cocycle = cocycle.max(gkj.compose(gji).distance(gki));
                        }
                    }
                }
            }
        }
        let mut isometry: f64 = 0.0;
        for (&(j, i), g) in &self.transitions {
            let hi = &self.charts[i].transverse_metric;
            let hj = &self.charts[j].transverse_metric;
            isometry = isometry.max((g.linear.transpose() * hj * &g.linear - hi).amax());
        }
        (compat, cocycle, isometry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        DVector::from_row_slice(v)
    }

    /// Vertical lines on the punctured plane with two slit charts.
    fn two_origins() -> FoliationData {
        let chart = |dir: f64| FoliationChart {
            region: Region::Ray {
                origin: vec![0.0, 0.0],
                direction: vec![0.0, dir],
            }
            .complement(),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            b: DVector::zeros(1),
            transverse_metric: DMatrix::identity(1, 1),
        };
        FoliationData::new(
            vec![chart(-1.0), chart(1.0)],
            vec![((1, 0), AffineMap::identity(1))],
            false,
            &(p(&[-3.0, -3.0]), p(&[3.0, 3.0])),
        )
        .unwrap()
    }

    #[test]
    fn leaf_connectivity_separates_the_two_origins() {
        let f = two_origins();
        assert!(f.leaf_path(&p(&[0.0, 1.0]), &p(&[0.0, 2.5]), 1e-9).is_some());
        assert!(f.leaf_path(&p(&[0.0, 1.0]), &p(&[0.0, -1.0]), 1e-9).is_none());
        assert!(f.leaf_path(&p(&[0.5, 1.0]), &p(&[0.5, -1.0]), 1e-9).is_some());
        assert!(f.leaf_path(&p(&[0.5, 1.0]), &p(&[0.6, -1.0]), 1e-9).is_none());
    }

    #[test]
    fn tangent_basis_and_plaque_projection() {
        let f = two_origins();
        let k = f.orbit_tangent_basis(&p(&[1.0, 5.0])).unwrap();
        assert_eq!(k.len(), 1);
        assert!((k[0][1].abs() - 1.0).abs() < 1e-12);
        let (_, z) = f.plaque_point_near(&p(&[1.0, 1.0]), &p(&[1.3, -2.0])).unwrap();
        assert!((z - p(&[1.0, -2.0])).norm() < 1e-12);
        assert!(f.plaque_point_near(&p(&[0.0, 1.0]), &p(&[0.1, -2.0])).is_none());
    }

    #[test]
    fn coherence_of_identity_atlas() {
        let f = two_origins();
        let samples = vec![p(&[1.0, 1.0]), p(&[-2.0, 0.5]), p(&[0.3, -1.0])];
        let (a, b, c) = f.coherence_defects(&samples);
        assert_eq!((a, b, c), (0.0, 0.0, 0.0));
    }
}
