//! Subcommand implementations. Each returns a JSON summary plus CSV tables;
//! `main` decides where they go.

use std::cell::OnceCell;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use stacky_core::curves::{CurveRef, FnCurve, StackyCurve};
use stacky_core::geodesics::{
    completeness_probe, conformal_completion, escape_time, gauss_check, is_minimizing_at, is_minimizing_on_window, random_specs,
    realize_minimizer, shoot, shoot_with_step, stratum_trace, GeodesicSpec, DEFAULT_T_MAX,
};
use stacky_core::groupoid::GroupoidModel;
use stacky_core::quotient::OrbitGraph;
use stacky_core::{GeoError, Point};

use crate::output::{coord_columns, coords, num, Table};
use crate::scenario::Scenario;
use crate::CliError;

pub const COMMANDS: [&str; 10] = [
    "speed", "length", "dist", "geodesic", "gauss", "minimize", "realize", "complete", "conformal", "report",
];

/// A point given either as `[x1, x2]` or as a list of such points.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Points {
    One(Vec<f64>),
    Many(Vec<Vec<f64>>),
}

impl Points {
    fn into_vec(self) -> Vec<Vec<f64>> {
        match self {
            Points::One(p) => vec![p],
            Points::Many(ps) => ps,
        }
    }
}

fn de_points<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
    Ok(Points::deserialize(d)?.into_vec())
}

fn de_times<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Times {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match Times::deserialize(d)? {
        Times::One(t) => vec![t],
        Times::Many(ts) => ts,
    })
}

/// Per-command arguments, shared between command-line flags and scenario
/// task entries.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskArgs {
    #[serde(default)]
    pub curve: Option<String>,
    #[serde(default, deserialize_with = "de_times")]
    pub t: Vec<f64>,
    #[serde(default, deserialize_with = "de_points")]
    pub from: Vec<Vec<f64>>,
    #[serde(default, deserialize_with = "de_points")]
    pub to: Vec<Vec<f64>>,
    #[serde(default)]
    pub velocity: Option<Vec<f64>>,
    #[serde(default)]
    pub span: Option<[f64; 2]>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub budget: Option<usize>,
    /// `minimize`: compare every pair of window times, not just pairs with t0.
    #[serde(default)]
    pub window: bool,
}

/// Flags that apply to every command.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub step: Option<f64>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
}

pub struct CommandOutput {
    pub summary: Value,
    /// `(file stem, table)`; the first table is the primary one.
    pub tables: Vec<(String, Table)>,
}

struct Ctx<'a> {
    sc: &'a Scenario,
    g: &'a Globals,
    graph: OnceCell<OrbitGraph>,
}

impl<'a> Ctx<'a> {
    fn seed(&self) -> u64 {
        self.g.seed.unwrap_or(self.sc.seed)
    }

    fn model(&self) -> &GroupoidModel {
        &self.sc.model
    }

    fn graph(&self) -> Result<&OrbitGraph, CliError> {
        if self.graph.get().is_none() {
            let delta = self.g.delta.or(self.sc.delta);
            let g = OrbitGraph::build(&self.sc.model, delta).map_err(|e| self.fail("graph", e))?;
            let _ = self.graph.set(g);
        }
        Ok(self.graph.get().expect("graph built above"))
    }

    fn fail(&self, what: &str, e: GeoError) -> CliError {
        CliError::Compute {
            context: format!("{} ({what})", self.sc.name),
            source: e,
        }
    }

    fn point(&self, v: &[f64], what: &str) -> Result<Point, CliError> {
        let dim = self.model().dim();
        if v.len() != dim {
            return Err(self.sc.invalid(
                &format!("\"{what}\""),
                format!("{what} point {v:?} has {} coordinates, the patch has {dim}", v.len()),
            ));
        }
        Ok(DVector::from_column_slice(v))
    }

    fn points(&self, vs: &[Vec<f64>], what: &str) -> Result<Vec<Point>, CliError> {
        vs.iter().map(|v| self.point(v, what)).collect()
    }

    fn samples(&self, a: &TaskArgs, default: usize) -> usize {
        a.samples.or(self.g.samples).unwrap_or(default).max(1)
    }

    /// `count` graph nodes chosen with the seed.
    fn random_nodes(&self, count: usize, salt: u64) -> Result<Vec<Point>, CliError> {
        let seed = self.seed() ^ salt;
        let nodes = self.graph()?.nodes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(nodes.choose_multiple(&mut rng, count.min(nodes.len())).cloned().collect())
    }

    fn geodesic_spec(&self, a: &TaskArgs) -> Result<GeodesicSpec, CliError> {
        let start = self.point(
            a.from
                .first()
                .ok_or_else(|| self.sc.invalid("\"tasks\"", "a geodesic needs a start point (--from)".into()))?,
            "from",
        )?;
        let v = self.point(
            a.velocity
                .as_deref()
                .ok_or_else(|| self.sc.invalid("\"tasks\"", "a geodesic needs an initial velocity (--velocity)".into()))?,
            "velocity",
        )?;
        let [s0, s1] = a.span.unwrap_or([0.0, 1.0]);
        GeodesicSpec::projected(self.model(), start, v, (s0, s1)).map_err(|e| self.fail("geodesic spec", e))
    }

    fn shoot(&self, spec: &GeodesicSpec) -> Result<StackyCurve, CliError> {
        let r = match self.g.step {
            Some(h) => shoot_with_step(self.model(), spec, h),
            None => shoot(self.model(), spec),
        };
        r.map_err(|e| self.fail("shoot", e))
    }
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn vec_json(p: &Point) -> Value {
    json!(p.iter().copied().collect::<Vec<_>>())
}

fn label_text(l: &stacky_core::groupoid::IsotropyLabel) -> String {
    format!("{}:{}", l.finite_order, l.vanishing_generators)
}

fn trajectory_table(model: &GroupoidModel, curve: &StackyCurve, n: usize) -> Result<Table, GeoError> {
    let dim = model.dim();
    let mut header = vec!["t".to_string()];
    header.extend(coord_columns("x", dim));
    header.extend(coord_columns("v", dim));
    header.extend(["normal_speed".to_string(), "stratum".to_string()]);
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    let (a, b) = curve.domain();
    let ts = grid(a, b, n);
    let labels = stratum_trace(curve, &ts);
    for (t, (_, label)) in ts.iter().zip(labels) {
        let mut row = vec![num(*t)];
        row.extend(coords(curve.point(*t).iter().copied()));
        row.extend(coords(curve.ambient_velocity(*t).iter().copied()));
        row.push(num(curve.normal_speed(*t)?));
        row.push(label_text(&label));
        table.push(row);
    }
    Ok(table)
}

pub fn run(command: &str, sc: &Scenario, args: &TaskArgs, globals: &Globals) -> Result<CommandOutput, CliError> {
    let ctx = Ctx {
        sc,
        g: globals,
        graph: OnceCell::new(),
    };
    let mut out = dispatch(&ctx, command, args)?;
    if let Value::Object(m) = &mut out.summary {
        let mut head = serde_json::Map::new();
        head.insert("schema".into(), json!(crate::output::SCHEMA_VERSION));
        head.insert("command".into(), json!(command));
        head.insert("scenario".into(), json!(sc.name));
        head.insert("model".into(), json!(sc.model.name()));
        head.append(m);
        out.summary = Value::Object(head);
    }
    Ok(out)
}

fn dispatch(ctx: &Ctx, command: &str, args: &TaskArgs) -> Result<CommandOutput, CliError> {
    match command {
        "speed" => speed(ctx, args),
        "length" => length(ctx, args),
        "dist" => dist(ctx, args),
        "geodesic" => geodesic(ctx, args),
        "gauss" => gauss(ctx, args),
        "minimize" => minimize(ctx, args),
        "realize" => realize(ctx, args),
        "complete" => complete(ctx, args),
        "conformal" => conformal(ctx, args),
        "report" => report(ctx),
        other => Err(ctx.sc.invalid(
            "\"tasks\"",
            format!("unknown command {other:?}; expected one of {}", COMMANDS.join(", ")),
        )),
    }
}

fn speed(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let (name, curve) = ctx.sc.curve(a.curve.as_deref())?;
    let (lo, hi) = curve.domain();
    let ts = if a.t.is_empty() { grid(lo, hi, ctx.samples(a, 101)) } else { a.t.clone() };
    if let Some(t) = ts.iter().find(|t| !(lo..=hi).contains(*t)) {
        return Err(ctx.sc.invalid(
            &format!("\"{name}\""),
            format!("parameter {t} is outside the domain [{lo}, {hi}] of curve {name:?}"),
        ));
    }
    let rows = ts
        .par_iter()
        .map(|&t| Ok((t, curve.normal_speed(t)?, curve.ambient_speed(t), curve.normal_angle(t))))
        .collect::<Result<Vec<_>, GeoError>>()
        .map_err(|e| ctx.fail("normal speed", e))?;
    let mut table = Table::new(&["t", "normal_speed", "ambient_speed", "angle"]);
    for (t, s, amb, ang) in &rows {
        table.push(vec![num(*t), num(*s), num(*amb), num(*ang)]);
    }
    let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(CommandOutput {
        summary: json!({
            "curve": name,
            "samples": rows.len(),
            "min_normal_speed": min,
            "max_normal_speed": max,
            "speeds": rows.iter().map(|r| json!({"t": r.0, "normal_speed": r.1})).collect::<Vec<_>>(),
        }),
        tables: vec![("speed".into(), table)],
    })
}

fn length(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let names: Vec<&str> = match &a.curve {
        Some(n) => vec![ctx.sc.curve(Some(n))?.0],
        None => ctx.sc.curve_order.iter().map(String::as_str).collect(),
    };
    if names.is_empty() {
        return Err(ctx.sc.invalid("\"name\"", "the scenario defines no curves".into()));
    }
    let mut table = Table::new(&["curve", "length", "segments", "t_start", "t_end"]);
    let mut entries = Vec::new();
    for name in names {
        let c = &ctx.sc.curves[name];
        let l = c.length().map_err(|e| ctx.fail(&format!("length of {name}"), e))?;
        let (lo, hi) = c.domain();
        table.push(vec![name.to_string(), num(l), c.segments().len().to_string(), num(lo), num(hi)]);
        entries.push(json!({"curve": name, "length": l, "segments": c.segments().len()}));
    }
    Ok(CommandOutput {
        summary: json!({ "lengths": entries }),
        tables: vec![("length".into(), table)],
    })
}

fn dist(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let pairs: Vec<(Point, Point)> = if a.from.is_empty() && a.to.is_empty() {
        let n = ctx.samples(a, 10);
        let xs = ctx.random_nodes(n, 0x11)?;
        let ys = ctx.random_nodes(n, 0x22)?;
        xs.into_iter().zip(ys).collect()
    } else {
        let xs = ctx.points(&a.from, "from")?;
        let ys = ctx.points(&a.to, "to")?;
        if xs.is_empty() || ys.is_empty() {
            return Err(ctx.sc.invalid("\"tasks\"", "dist needs both --from and --to".into()));
        }
        // All from/to combinations, in order.
        xs.iter().flat_map(|x| ys.iter().map(move |y| (x.clone(), y.clone()))).collect()
    };
    let graph = ctx.graph()?;
    let reports = pairs
        .par_iter()
        .map(|(x, y)| graph.distance(x, y))
        .collect::<Result<Vec<_>, GeoError>>()
        .map_err(|e| ctx.fail("d_N", e))?;
    let dim = ctx.model().dim();
    let mut header = coord_columns("from", dim);
    header.extend(coord_columns("to", dim));
    header.extend(["d_N", "lower", "graph_value", "delta", "hops"].map(String::from));
    let mut table = Table { header, rows: vec![] };
    let mut queries = Vec::new();
    for ((x, y), r) in pairs.iter().zip(&reports) {
        let mut row = coords(x.iter().copied());
        row.extend(coords(y.iter().copied()));
        row.extend([num(r.value), num(r.lower), num(r.graph_value), num(r.resolution), r.hops.to_string()]);
        table.push(row);
        queries.push(json!({"from": vec_json(x), "to": vec_json(y), "d_N": r.value, "lower": r.lower, "hops": r.hops}));
    }
    Ok(CommandOutput {
        summary: json!({
            "resolution": graph.resolution(),
            "nodes": graph.node_count(),
            "queries": queries,
        }),
        tables: vec![("dist".into(), table)],
    })
}

fn geodesic(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let spec = ctx.geodesic_spec(a)?;
    let curve = ctx.shoot(&spec)?;
    let n = ctx.samples(a, 201);
    let table = trajectory_table(ctx.model(), &curve, n).map_err(|e| ctx.fail("trajectory", e))?;
    let (s0, s1) = curve.domain();
    let len = curve.length().map_err(|e| ctx.fail("length", e))?;
    let speed = curve.normal_speed(s0).map_err(|e| ctx.fail("normal speed", e))?;
    Ok(CommandOutput {
        summary: json!({
            "start": vec_json(&spec.start),
            "velocity": vec_json(&spec.velocity),
            "span": [s0, s1],
            "normal_speed": speed,
            "length": len,
            "end": vec_json(&curve.point(s1)),
        }),
        tables: vec![("geodesic".into(), table)],
    })
}

fn gauss(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let bases = if a.from.is_empty() { ctx.random_nodes(3, 0x33)? } else { ctx.points(&a.from, "from")? };
    let eps = a.eps.unwrap_or(0.3);
    let n = ctx.samples(a, 100);
    let seed = ctx.seed();
    let graph = ctx.graph()?;
    let reports = bases
        .par_iter()
        .enumerate()
        .map(|(i, x)| gauss_check(graph, x, eps, n, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>, GeoError>>()
        .map_err(|e| ctx.fail("gauss check", e))?;
    let dim = ctx.model().dim();
    let mut header = vec!["base".to_string()];
    header.extend(coord_columns("v", dim));
    header.extend(["norm", "distance", "relative_error"].map(String::from));
    let mut table = Table { header, rows: vec![] };
    for (i, r) in reports.iter().enumerate() {
        for s in &r.samples {
            let mut row = vec![i.to_string()];
            row.extend(coords(s.velocity.iter().copied()));
            row.extend([num(s.norm), num(s.distance), num(s.relative_error)]);
            table.push(row);
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok(CommandOutput {
        summary: json!({
            "eps": eps,
            "pass": pass,
            "bases": reports.iter().map(|r| json!({
                "base": r.base, "max_relative_error": r.max_relative_error,
                "tolerance": r.tolerance, "pass": r.pass,
            })).collect::<Vec<_>>(),
        }),
        tables: vec![("gauss".into(), table)],
    })
}

fn minimize(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let (label, curve) = if a.from.is_empty() {
        let (name, c) = ctx.sc.curve(a.curve.as_deref())?;
        (name.to_string(), c.clone())
    } else {
        let spec = ctx.geodesic_spec(a)?;
        ("geodesic".to_string(), ctx.shoot(&spec)?)
    };
    let (lo, hi) = curve.domain();
    let times: Vec<f64> = if a.t.is_empty() {
        let n = ctx.samples(a, 10);
        (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect()
    } else {
        a.t.clone()
    };
    let eps = a.eps;
    let graph = ctx.graph()?;
    let reports = times
        .par_iter()
        .map(|&t| {
            if a.window {
                is_minimizing_on_window(graph, &curve, t, eps)
            } else {
                is_minimizing_at(graph, &curve, t, eps)
            }
        })
        .collect::<Result<Vec<_>, GeoError>>()
        .map_err(|e| ctx.fail("minimizing check", e))?;
    let labels = stratum_trace(&curve, &times);
    let mut table = Table::new(&["t0", "eps", "max_error", "tolerance", "minimizing", "stratum"]);
    for (r, (_, l)) in reports.iter().zip(&labels) {
        table.push(vec![
            num(r.t0),
            num(r.eps),
            num(r.max_error),
            num(r.tolerance),
            r.minimizing.to_string(),
            label_text(l),
        ]);
    }
    let all = reports.iter().all(|r| r.minimizing);
    Ok(CommandOutput {
        summary: json!({
            "curve": label,
            "mode": if a.window { "window" } else { "from_center" },
            "minimizing_everywhere": all,
            "failures": reports.iter().filter(|r| !r.minimizing).map(|r| r.t0).collect::<Vec<_>>(),
            "checks": serde_json::to_value(&reports).expect("reports serialize"),
        }),
        tables: vec![("minimize".into(), table)],
    })
}

fn realize(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let x = ctx.point(
        a.from.first().ok_or_else(|| ctx.sc.invalid("\"tasks\"", "realize needs --from".into()))?,
        "from",
    )?;
    let y = ctx.point(
        a.to.first().ok_or_else(|| ctx.sc.invalid("\"tasks\"", "realize needs --to".into()))?,
        "to",
    )?;
    let budget = a.budget.unwrap_or(10_000);
    let n = ctx.samples(a, 201);
    let graph = ctx.graph()?;
    let r = realize_minimizer(graph, &x, &y, budget).map_err(|e| ctx.fail("realize minimizer", e))?;
    let table = trajectory_table(ctx.model(), &r.curve, n).map_err(|e| ctx.fail("trajectory", e))?;
    let (_, s1) = r.curve.domain();
    Ok(CommandOutput {
        summary: json!({
            "from": vec_json(&x),
            "to": vec_json(&y),
            "distance": r.distance,
            "length": r.length,
            "landing_error": r.landing_error,
            "tolerance": r.tolerance,
            "initial_velocity": vec_json(&r.initial_velocity),
            "end": vec_json(&r.curve.point(s1)),
        }),
        tables: vec![("realize".into(), table)],
    })
}

fn completeness_table(dim: usize, report: &stacky_core::geodesics::CompletenessReport) -> Table {
    let mut header = coord_columns("x", dim);
    header.extend(coord_columns("v", dim));
    header.extend(["forward_time", "backward_time", "stop"].map(String::from));
    let mut table = Table { header, rows: vec![] };
    for e in &report.extensions {
        let mut row = coords(e.start.iter().copied());
        row.extend(coords(e.velocity.iter().copied()));
        row.extend([
            num(e.forward_time),
            num(e.backward_time),
            e.stop.map_or("none".to_string(), |s| format!("{s:?}")),
        ]);
        table.push(row);
    }
    table
}

fn complete(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let t_max = a.t_max.unwrap_or(DEFAULT_T_MAX);
    let count = ctx.samples(a, 6);
    let seed = ctx.seed();
    let graph = ctx.graph()?;
    let specs = random_specs(graph, count, t_max, seed);
    let report = completeness_probe(graph, &specs, t_max, seed);
    let table = completeness_table(ctx.model().dim(), &report);
    Ok(CommandOutput {
        summary: serde_json::to_value(&report).expect("report serializes"),
        tables: vec![("complete".into(), table)],
    })
}

fn conformal(ctx: &Ctx, a: &TaskArgs) -> Result<CommandOutput, CliError> {
    let t_max = a.t_max.unwrap_or(DEFAULT_T_MAX);
    let count = ctx.samples(a, 6);
    let rel_tol = ctx.g.tol.unwrap_or(0.05);
    let seed = ctx.seed();
    let delta = ctx.g.delta.or(ctx.sc.delta);
    let graph = ctx.graph()?;
    let cc = conformal_completion(graph).map_err(|e| ctx.fail("conformal completion", e))?;
    let model = ctx.model();
    let dim = model.dim();

    // Escape times along the same directions, before and after; velocities are
    // rescaled so the initial speed stays the same.
    let specs = random_specs(graph, count, t_max, seed);
    let escapes: Vec<(f64, f64)> = specs
        .par_iter()
        .map(|s| {
            let before = escape_time(model, &s.start, &s.velocity, t_max);
            let after = escape_time(&cc.model, &s.start, &(&s.velocity / cc.factor(&s.start)), t_max);
            (before, after)
        })
        .collect();

    // Straight test chords between seeded nodes.
    let xs = ctx.random_nodes(count, 0x44)?;
    let ys = ctx.random_nodes(count, 0x55)?;
    let curves: Vec<CurveRef> = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| -> CurveRef { std::sync::Arc::new(FnCurve::line(x.clone(), y - x, (0.0, 1.0), 0.0)) })
        .collect();
    let bounds = cc
        .length_bound_check(model, &curves, rel_tol)
        .map_err(|e| ctx.fail("length bound", e))?;

    let completed_graph = OrbitGraph::build(&cc.model, delta).map_err(|e| ctx.fail("graph of completion", e))?;
    let new_specs = random_specs(&completed_graph, count, t_max, seed);
    let after = completeness_probe(&completed_graph, &new_specs, t_max, seed);

    let mut header = coord_columns("x", dim);
    header.extend(coord_columns("v", dim));
    header.extend(["escape_before", "escape_after", "factor"].map(String::from));
    let mut table = Table { header, rows: vec![] };
    for (s, (b, e)) in specs.iter().zip(&escapes) {
        let mut row = coords(s.start.iter().copied());
        row.extend(coords(s.velocity.iter().copied()));
        row.extend([num(*b), num(*e), num(cc.factor(&s.start))]);
        table.push(row);
    }
    let mut bound_table = Table::new(&["curve", "length", "scaled_length", "radius", "bound", "pass"]);
    for (i, b) in bounds.iter().enumerate() {
        bound_table.push(vec![
            i.to_string(),
            num(b.length),
            num(b.scaled_length),
            num(b.radius),
            num(b.bound),
            b.pass.to_string(),
        ]);
    }
    Ok(CommandOutput {
        summary: json!({
            "min_radius": cc.min_radius,
            "frontier_nodes": cc.frontier_nodes,
            "bound_tolerance": rel_tol,
            "bound_pass": bounds.iter().all(|b| b.pass),
            "escape": escapes.iter().map(|(b, e)| json!({"before": b, "after": e})).collect::<Vec<_>>(),
            "completed": serde_json::to_value(&after).expect("report serializes"),
        }),
        tables: vec![
            ("conformal".into(), table),
            ("conformal_bounds".into(), bound_table),
            ("conformal_complete".into(), completeness_table(dim, &after)),
        ],
    })
}

#[derive(Deserialize)]
struct TaskEntry {
    command: String,
    #[serde(flatten)]
    args: Value,
}

fn report(ctx: &Ctx) -> Result<CommandOutput, CliError> {
    if ctx.sc.tasks.is_empty() {
        return Err(ctx.sc.invalid("\"name\"", "report needs a non-empty \"tasks\" list".into()));
    }
    let mut summaries = Vec::new();
    let mut tables = Vec::new();
    for (i, raw) in ctx.sc.tasks.iter().enumerate() {
        let bad = |m: String| ctx.sc.invalid("\"tasks\"", format!("task {i}: {m}"));
        let entry: TaskEntry = serde_json::from_value(raw.clone()).map_err(|e| bad(e.to_string()))?;
        if entry.command == "report" {
            return Err(bad("a task cannot be \"report\"".into()));
        }
        let args: TaskArgs = serde_json::from_value(entry.args).map_err(|e| bad(e.to_string()))?;
        let out = dispatch(ctx, &entry.command, &args)?;
        let mut s = json!({"task": i, "command": entry.command});
        if let (Value::Object(head), Value::Object(mut body)) = (&mut s, out.summary) {
            head.append(&mut body);
        }
        summaries.push(s);
        for (stem, t) in out.tables {
            tables.push((format!("task{i:02}_{stem}"), t));
        }
    }
    Ok(CommandOutput {
        summary: json!({ "tasks": summaries }),
        tables,
    })
}
