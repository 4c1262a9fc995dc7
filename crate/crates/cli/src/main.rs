//! `stacky-geo`: scenario-driven batch front end for the quotient geometry
//! library.

mod commands;
mod output;
mod scenario;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use stacky_core::GeoError;

use commands::{Globals, TaskArgs};
use output::Artifacts;
use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source} [in {context}]", source.name())]
    Compute { context: String, source: GeoError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } => 2,
            CliError::Compute { .. } | CliError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Speed,
    Length,
    Dist,
    Geodesic,
    Gauss,
    Minimize,
    Realize,
    Complete,
    Conformal,
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        commands::COMMANDS[self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Comma-separated coordinates, e.g. `1,0` or `-0.5,2`.
#[derive(Debug, Clone)]
struct Floats(Vec<f64>);

fn parse_floats(s: &str) -> Result<Floats, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Floats)
}

fn parse_span(s: &str) -> Result<[f64; 2], String> {
    match parse_floats(s)?.0.as_slice() {
        [a, b] if a < b => Ok([*a, *b]),
        _ => Err("expected A,B with A < B".into()),
    }
}

/// Quotient-space geometry runs driven by JSON scenario files.
#[derive(Debug, Parser)]
#[command(name = "stacky-geo", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (JSON).
    scenario: PathBuf,

    /// Write the JSON report and CSV tables into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// What to print on stdout: the JSON report or the primary CSV table.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// RNG seed (overrides the scenario's graph seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Orbit-graph resolution.
    #[arg(long)]
    delta: Option<f64>,
    /// Integrator step for geodesic shooting.
    #[arg(long)]
    step: Option<f64>,
    /// Relative tolerance for the conformal length bound.
    #[arg(long)]
    tol: Option<f64>,
    /// Sample count (grid size, query pairs, probe count; depends on the command).
    #[arg(long)]
    samples: Option<usize>,

    /// Curve name (defaults to the first curve).
    #[arg(long)]
    curve: Option<String>,
    /// Curve parameter(s), comma separated.
    #[arg(long, value_parser = parse_floats)]
    t: Option<Floats>,
    /// Start point(s) as comma-separated coordinates; repeatable.
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true)]
    from: Vec<Floats>,
    /// Target point(s); repeatable.
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true)]
    to: Vec<Floats>,
    /// Initial velocity of a geodesic.
    #[arg(long, value_parser = parse_floats, allow_hyphen_values = true)]
    velocity: Option<Floats>,
    /// Parameter span A,B of a geodesic.
    #[arg(long, value_parser = parse_span, allow_hyphen_values = true)]
    span: Option<[f64; 2]>,
    /// Radius (gauss) or window half-width (minimize).
    #[arg(long)]
    eps: Option<f64>,
    /// Extension horizon for completeness probes.
    #[arg(long)]
    t_max: Option<f64>,
    /// Trial-shot budget for `realize`.
    #[arg(long)]
    budget: Option<usize>,
    /// `minimize`: check all pairs in the window, not only pairs with t0.
    #[arg(long)]
    window: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let sc = Scenario::load(&cli.scenario)?;
    let args = TaskArgs {
        curve: cli.curve,
        t: cli.t.map(|f| f.0).unwrap_or_default(),
        from: cli.from.into_iter().map(|f| f.0).collect(),
        to: cli.to.into_iter().map(|f| f.0).collect(),
        velocity: cli.velocity.map(|f| f.0),
        span: cli.span,
        eps: cli.eps,
        t_max: cli.t_max,
        samples: None,
        budget: cli.budget,
        window: cli.window,
    };
    let globals = Globals {
        seed: cli.seed,
        delta: cli.delta,
        step: cli.step,
        tol: cli.tol,
        samples: cli.samples,
    };
    let name = cli.command.name();
    log::info!("running {name} on {}", cli.scenario.display());
    let out = commands::run(name, &sc, &args, &globals)?;

    let out_dir = cli.out.or_else(|| {
        sc.output.as_ref().map(|o| {
            let base = cli.scenario.parent().map(PathBuf::from).unwrap_or_default();
            base.join(o)
        })
    });
    if let Some(dir) = out_dir {
        let mut art = Artifacts::default();
        art.add_json(format!("{name}.json"), &out.summary);
        for (stem, t) in &out.tables {
            art.add_csv(format!("{stem}.csv"), t);
        }
        for p in art.write_all(&dir)? {
            log::info!("wrote {}", p.display());
        }
    }
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(&out.summary).expect("json values serialize") + "\n",
        Format::Csv => out.tables.first().map(|(_, t)| t.to_csv()).unwrap_or_default(),
    };
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("STACKY_GEO_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("cannot set thread count: {e}");
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
