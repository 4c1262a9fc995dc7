//! Scenario files: JSON describing a patch, a groupoid presentation, named
//! curves, graph parameters and a task list.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::Value;

use stacky_core::curves::{CurveRef, ExprCurve, StackyCurve, Transition};
use stacky_core::expr::Expr;
use stacky_core::groupoid::{AffineMap, ChartEmbedding, FoliationChart, GroupoidModel, SubmersionData};
use stacky_core::library;
use stacky_core::{ManifoldPatch, Point, Region};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// A library model by name; replaces `patch` and `groupoid`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub patch: Option<PatchSpec>,
    #[serde(default)]
    pub groupoid: Option<GroupoidSpec>,
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub graph: GraphSpec,
    #[serde(default)]
    pub tasks: Vec<Value>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub bounds: [Vec<f64>; 2],
    #[serde(default = "region_all")]
    pub region: Region,
    #[serde(default)]
    pub metric: MetricSpec,
}

fn region_all() -> Region {
    Region::All
}

#[derive(Debug, Default, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    #[default]
    #[serde(skip)]
    Default,
    Named(String),
    Matrix(Vec<Vec<String>>),
    Preset(MetricPreset),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum MetricPreset {
    Sphere { radius: f64 },
    Conformal { factor: String },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupoidSpec {
    Trivial,
    Action {
        #[serde(default)]
        finite: Vec<AffineSpec>,
        #[serde(default)]
        generators: Vec<Vec<Vec<f64>>>,
    },
    Submersion {
        projection: Vec<String>,
        #[serde(default)]
        jacobian: Option<Vec<Vec<String>>>,
        #[serde(default)]
        compact_fibers: bool,
    },
    Foliation {
        charts: Vec<FoliationChartSpec>,
        #[serde(default)]
        transitions: Vec<TransitionSpec>,
        #[serde(default)]
        proper: bool,
    },
    Orbifold {
        charts: Vec<OrbifoldChartSpec>,
        #[serde(default)]
        embeddings: Vec<TransitionSpec>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub linear: Vec<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoliationChartSpec {
    #[serde(default = "region_all")]
    pub region: Region,
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Option<Vec<f64>>,
    #[serde(default)]
    pub transverse_metric: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    pub from: usize,
    pub to: usize,
    #[serde(flatten)]
    pub map: AffineSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbifoldChartSpec {
    #[serde(default = "region_all")]
    pub region: Region,
    #[serde(default)]
    pub group: Vec<AffineSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub name: String,
    #[serde(default)]
    pub library: Option<String>,
    #[serde(default)]
    pub components: Option<Vec<String>>,
    #[serde(default)]
    pub derivatives: Option<Vec<String>>,
    #[serde(default)]
    pub domain: Option<[f64; 2]>,
    /// Cocycle form: several segments with cover intervals and transitions.
    #[serde(default)]
    pub segments: Vec<SegmentSpec>,
    #[serde(default)]
    pub transitions: Vec<TransitionKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub components: Vec<String>,
    #[serde(default)]
    pub derivatives: Option<Vec<String>>,
    pub interval: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TransitionKind {
    Identity,
    Implied,
    Isometry(AffineSpec),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A validated scenario ready to run.
pub struct Scenario {
    pub name: String,
    pub path: PathBuf,
    pub model: GroupoidModel,
    pub curves: BTreeMap<String, StackyCurve>,
    pub curve_order: Vec<String>,
    pub delta: Option<f64>,
    pub seed: u64,
    pub tasks: Vec<Value>,
    pub output: Option<PathBuf>,
    source: String,
}

/// 1-based line of the first occurrence of `needle` in `source`.
fn line_of(source: &str, needle: &str) -> usize {
    source
        .find(needle)
        .map(|i| source[..i].matches('\n').count() + 1)
        .unwrap_or(1)
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("cannot read scenario: {e}"),
        })?;
        let file: ScenarioFile = serde_json::from_str(&source).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let invalid = |needle: &str, message: String| CliError::Parse {
            path: path.to_path_buf(),
            line: line_of(&source, needle),
            message,
        };
        let model = build_model(&file).map_err(|(needle, m)| invalid(needle, m))?;
        let mut curves = BTreeMap::new();
        let mut curve_order = Vec::new();
        for spec in &file.curves {
            let anchor = format!("\"{}\"", spec.name);
            let curve = build_curve(&model, spec).map_err(|m| invalid(&anchor, format!("curve {:?}: {m}", spec.name)))?;
            if curves.insert(spec.name.clone(), curve).is_some() {
                return Err(invalid(&anchor, format!("duplicate curve name {:?}", spec.name)));
            }
            curve_order.push(spec.name.clone());
        }
        if let Some(d) = file.graph.delta {
            if !(d > 0.0) {
                return Err(invalid("\"delta\"", format!("graph delta must be positive (got {d})")));
            }
        }
        Ok(Scenario {
            name: file.name,
            path: path.to_path_buf(),
            model,
            curves,
            curve_order,
            delta: file.graph.delta,
            seed: file.graph.seed.unwrap_or(0),
            tasks: file.tasks,
            output: file.output,
            source,
        })
    }

    /// Validation error anchored at the first line mentioning `needle`.
    pub fn invalid(&self, needle: &str, message: String) -> CliError {
        CliError::Parse {
            path: self.path.clone(),
            line: line_of(&self.source, needle),
            message,
        }
    }

    pub fn curve(&self, name: Option<&str>) -> Result<(&str, &StackyCurve), CliError> {
        match name {
            Some(n) => self
                .curves
                .get_key_value(n)
                .map(|(k, v)| (k.as_str(), v))
                .ok_or_else(|| self.invalid("\"curves\"", format!("no curve named {n:?}"))),
            None => {
                let first = self
                    .curve_order
                    .first()
                    .ok_or_else(|| self.invalid("\"name\"", "the scenario defines no curves".into()))?;
                Ok((first.as_str(), &self.curves[first]))
            }
        }
    }
}

type BuildError = (&'static str, String);

fn matrix(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>, BuildError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err((what, format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn affine(spec: &AffineSpec, dim: usize, what: &'static str) -> Result<AffineMap, BuildError> {
    let lin = matrix(&spec.linear, what)?;
    let off = spec.offset.clone().unwrap_or_else(|| vec![0.0; lin.nrows()]);
    if lin.nrows() != dim || lin.ncols() != dim || off.len() != dim {
        return Err((what, format!("{what} must be {dim}x{dim} with a length-{dim} offset")));
    }
    AffineMap::new(lin, DVector::from_vec(off)).map_err(|e| (what, e.to_string()))
}

fn expr_matrix(rows: &[Vec<String>], vars: &[&str], what: &'static str) -> Result<Vec<Vec<Expr>>, BuildError> {
    rows.iter()
        .map(|r| {
            r.iter()
                .map(|s| Expr::parse(s, vars).map_err(|e| (what, e.to_string())))
                .collect()
        })
        .collect()
}

fn build_patch(spec: &PatchSpec) -> Result<ManifoldPatch, BuildError> {
    let dim = spec.bounds[0].len();
    if dim == 0 || spec.bounds[1].len() != dim || spec.bounds[0].iter().zip(&spec.bounds[1]).any(|(l, h)| !(l < h)) {
        return Err(("\"bounds\"", "bounds must be two corners [lo, hi] with lo < hi".into()));
    }
    let bounds = (DVector::from_vec(spec.bounds[0].clone()), DVector::from_vec(spec.bounds[1].clone()));
    let region = spec.region.clone();
    let names = Expr::coordinate_names(dim);
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    Ok(match &spec.metric {
        MetricSpec::Default => ManifoldPatch::euclidean(region, bounds),
        MetricSpec::Named(n) if n == "euclidean" => ManifoldPatch::euclidean(region, bounds),
        MetricSpec::Named(n) => return Err(("\"metric\"", format!("unknown metric {n:?} (expected \"euclidean\")"))),
        MetricSpec::Preset(MetricPreset::Sphere { radius }) => {
            if !(*radius > 0.0) {
                return Err(("\"radius\"", "sphere radius must be positive".into()));
            }
            ManifoldPatch::sphere_stereographic(*radius, region, bounds)
        }
        MetricSpec::Preset(MetricPreset::Conformal { factor }) => {
            let f = Expr::parse(factor, &vars).map_err(|e| ("\"factor\"", e.to_string()))?;
            ManifoldPatch::conformal(region, bounds, Arc::new(move |x: &Point| f.eval(x.as_slice())), None)
        }
        MetricSpec::Matrix(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(("\"metric\"", format!("metric must be a {dim}x{dim} matrix of expressions")));
            }
            let entries = expr_matrix(rows, &vars, "\"metric\"")?;
            ManifoldPatch::new(
                "expression",
                region,
                bounds,
                Arc::new(move |x: &Point| DMatrix::from_fn(dim, dim, |i, j| entries[i][j].eval(x.as_slice()))),
            )
        }
    })
}

fn build_model(file: &ScenarioFile) -> Result<GroupoidModel, BuildError> {
    if let Some(name) = &file.model {
        if file.patch.is_some() || file.groupoid.is_some() {
            return Err(("\"model\"", "give either a library model or a patch with a groupoid, not both".into()));
        }
        return library::model_by_name(name).ok_or_else(|| {
            (
                "\"model\"",
                format!("unknown library model {name:?}; known: {}", library::MODEL_NAMES.join(", ")),
            )
        });
    }
    let patch_spec = file
        .patch
        .as_ref()
        .ok_or(("\"name\"", "a scenario needs either \"model\" or \"patch\"".to_string()))?;
    let patch = build_patch(patch_spec)?.with_name(file.name.clone());
    let dim = patch.dim();
    let names = Expr::coordinate_names(dim);
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    let bad_model = |e: stacky_core::GeoError| ("\"groupoid\"", e.to_string());
    match file.groupoid.as_ref().unwrap_or(&GroupoidSpec::Trivial) {
        GroupoidSpec::Trivial => Ok(GroupoidModel::trivial(patch)),
        GroupoidSpec::Action { finite, generators } => {
            let finite = finite
                .iter()
                .map(|a| affine(a, dim, "\"finite\""))
                .collect::<Result<Vec<_>, _>>()?;
            let gens = generators
                .iter()
                .map(|g| matrix(g, "\"generators\""))
                .collect::<Result<Vec<_>, _>>()?;
            GroupoidModel::action(file.name.clone(), patch, &finite, gens).map_err(bad_model)
        }
        GroupoidSpec::Submersion {
            projection,
            jacobian,
            compact_fibers,
        } => {
            let comps: Vec<Expr> = projection
                .iter()
                .map(|s| Expr::parse(s, &vars).map_err(|e| ("\"projection\"", e.to_string())))
                .collect::<Result<_, _>>()?;
            let codim = comps.len();
            let jac = match jacobian {
                Some(rows) => {
                    if rows.len() != codim || rows.iter().any(|r| r.len() != dim) {
                        return Err(("\"jacobian\"", format!("jacobian must be {codim}x{dim}")));
                    }
                    let entries = expr_matrix(rows, &vars, "\"jacobian\"")?;
                    Some(Arc::new(move |x: &Point| {
                        DMatrix::from_fn(codim, dim, |i, j| entries[i][j].eval(x.as_slice()))
                    }) as stacky_core::groupoid::JacobianFn)
                }
                None => None,
            };
            let data = SubmersionData::new(
                Arc::new(move |x: &Point| DVector::from_iterator(codim, comps.iter().map(|e| e.eval(x.as_slice())))),
                jac,
                codim,
                *compact_fibers,
            );
            GroupoidModel::submersion(file.name.clone(), patch, data).map_err(bad_model)
        }
        GroupoidSpec::Foliation {
            charts,
            transitions,
            proper,
        } => {
            let charts = charts
                .iter()
                .map(|c| {
                    let a = matrix(&c.a, "\"a\"")?;
                    let q = a.nrows();
                    let tm = match &c.transverse_metric {
                        Some(m) => matrix(m, "\"transverse_metric\"")?,
                        None => DMatrix::identity(q, q),
                    };
                    Ok(FoliationChart {
                        region: c.region.clone(),
                        b: DVector::from_vec(c.b.clone().unwrap_or_else(|| vec![0.0; q])),
                        a,
                        transverse_metric: tm,
                    })
                })
                .collect::<Result<Vec<_>, BuildError>>()?;
            let q = charts.first().map_or(0, |c| c.a.nrows());
            let transitions = transitions
                .iter()
                .map(|t| Ok(((t.from, t.to), affine(&t.map, q, "\"transitions\"")?)))
                .collect::<Result<Vec<_>, BuildError>>()?;
            GroupoidModel::foliation(file.name.clone(), patch, charts, transitions, *proper).map_err(bad_model)
        }
        GroupoidSpec::Orbifold { charts, embeddings } => {
            let charts = charts
                .iter()
                .map(|c| {
                    let group = c
                        .group
                        .iter()
                        .map(|g| affine(g, dim, "\"group\""))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok((c.region.clone(), group))
                })
                .collect::<Result<Vec<_>, BuildError>>()?;
            let embeddings = embeddings
                .iter()
                .map(|e| {
                    Ok(ChartEmbedding {
                        from: e.from,
                        to: e.to,
                        map: affine(&e.map, dim, "\"embeddings\"")?,
                    })
                })
                .collect::<Result<Vec<_>, BuildError>>()?;
            GroupoidModel::orbifold(file.name.clone(), patch, charts, embeddings).map_err(bad_model)
        }
    }
}

fn library_curve(name: &str) -> Option<CurveRef> {
    Some(match name {
        "parabola" => library::parabola(),
        "flat_branch_plus" => library::flat_branch(1.0),
        "flat_branch_minus" => library::flat_branch(-1.0),
        "horizontal_line_up" => library::horizontal_line(1.0),
        "horizontal_line_down" => library::horizontal_line(-1.0),
        "unit_circle" => library::circle(1.0),
        "circle_1_5" => library::circle(1.5),
        _ => return None,
    })
}

const LIBRARY_CURVES: &str =
    "parabola, flat_branch_plus, flat_branch_minus, horizontal_line_up, horizontal_line_down, unit_circle, circle_1_5";

fn expr_curve(components: &[String], derivatives: Option<&[String]>, domain: (f64, f64), dim: usize) -> Result<CurveRef, String> {
    if components.len() != dim {
        return Err(format!("{} components for a {dim}-dimensional patch", components.len()));
    }
    if !(domain.0 < domain.1) {
        return Err(format!("empty domain [{}, {}]", domain.0, domain.1));
    }
    Ok(Arc::new(ExprCurve::parse(components, derivatives, domain).map_err(|e| e.to_string())?))
}

fn build_curve(model: &GroupoidModel, spec: &CurveSpec) -> Result<StackyCurve, String> {
    let dim = model.dim();
    let single = |c: CurveRef| StackyCurve::single(model.clone(), c).map_err(|e| e.to_string());
    if let Some(name) = &spec.library {
        let c = library_curve(name).ok_or_else(|| format!("unknown library curve {name:?}; known: {LIBRARY_CURVES}"))?;
        return single(c);
    }
    if let Some(components) = &spec.components {
        let [a, b] = spec.domain.ok_or("an expression curve needs a \"domain\"")?;
        return single(expr_curve(components, spec.derivatives.as_deref(), (a, b), dim)?);
    }
    if spec.segments.is_empty() {
        return Err("give \"library\", \"components\" or \"segments\"".into());
    }
    let mut intervals = Vec::new();
    let mut segments = Vec::new();
    for s in &spec.segments {
        let (a, b) = (s.interval[0], s.interval[1]);
        intervals.push((a, b));
        segments.push(expr_curve(&s.components, s.derivatives.as_deref(), (a, b), dim)?);
    }
    let transitions = spec
        .transitions
        .iter()
        .map(|t| {
            Ok(match t {
                TransitionKind::Identity => Transition::Identity,
                TransitionKind::Implied => Transition::Implied,
                TransitionKind::Isometry(a) => Transition::Isometry(affine(a, dim, "\"transitions\"").map_err(|e| e.1)?),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    StackyCurve::new(model.clone(), intervals, segments, transitions).map_err(|e| e.to_string())
}
