use clap::{Args, Parser, Subcommand, ValueEnum};
use gaugework::driver::{self, ActionKind, GradientMode, RunConfig, Task};
use gaugework::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gaugework", version, about = "Gauge-theory invariant checks, minimization and vacuum classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every module's invariant suite.
    Verify(Common),
    MatrixModel(Common),
    Lattice(Common),
    Algebroid(Common),
    Spectral(Common),
    Gravity(Common),
    /// Gradient descent on an action, then classify the end point.
    Minimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    MatrixModel,
    LatticeYmh,
    Algebroid,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradientArg {
    Analytic,
    Fd,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Matrix sizes, e.g. `2,3`.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Lattices, e.g. `8x8,6x6x6`.
    #[arg(long, value_delimiter = ',', value_parser = parse_grid)]
    grid: Option<Vec<Vec<usize>>>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gradient-norm stopping tolerance of the optimizer.
    #[arg(long)]
    tol: Option<f64>,
    /// Result file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    gradient: Option<GradientArg>,
    /// Threads for inner loops; does not change the result file.
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock time in `timing_ms`.
    #[arg(long)]
    timing: bool,
}

fn parse_grid(s: &str) -> Result<Vec<usize>, String> {
    s.split('x').map(|e| e.trim().parse::<usize>().map_err(|err| format!("bad extent `{e}` in `{s}`: {err}"))).collect()
}

fn build_config(task: Task, c: &Common, kind: Option<KindArg>) -> gaugework::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config { field: "--config".into(), message: format!("{}: {e}", path.display()) })?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    cfg.task = task;
    if let Some(n) = &c.n {
        cfg.n = n.clone();
    }
    if let Some(g) = &c.grid {
        cfg.grids = g.clone();
    }
    if let Some(mu) = c.mu {
        cfg.mu = mu;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = c.tol {
        cfg.optimizer.tol = tol;
    }
    if let Some(out) = &c.out {
        cfg.out = Some(out.clone());
    }
    if let Some(g) = c.gradient {
        cfg.optimizer.gradient = match g {
            GradientArg::Analytic => GradientMode::Analytic,
            GradientArg::Fd => GradientMode::Fd,
        };
    }
    if let Some(w) = c.workers {
        cfg.workers = Some(w);
    }
    if c.timing {
        cfg.timing = true;
    }
    if let Some(k) = kind {
        cfg.minimize.kind = match k {
            KindArg::MatrixModel => ActionKind::MatrixModel,
            KindArg::LatticeYmh => ActionKind::LatticeYmh,
            KindArg::Algebroid => ActionKind::Algebroid,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(task: Task, c: &Common, kind: Option<KindArg>) -> gaugework::Result<i32> {
    let cfg = build_config(task, c, kind)?;
    let res = driver::run(&cfg)?;
    let json = res.to_json();
    match &cfg.out {
        Some(path) => std::fs::write(path, &json)
            .map_err(|e| Error::Config { field: "out".into(), message: format!("{}: {e}", path.display()) })?,
        None => print!("{json}"),
    }
    for f in res.checks.iter().filter(|c| !c.passed()) {
        eprintln!("FAIL {} residual {:e} tolerance {:e}", f.name, f.residual, f.tolerance);
    }
    Ok(res.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, common, kind) = match &cli.command {
        Command::Verify(c) => (Task::Verify, c, None),
        Command::MatrixModel(c) => (Task::MatrixModel, c, None),
        Command::Lattice(c) => (Task::Lattice, c, None),
        Command::Algebroid(c) => (Task::Algebroid, c, None),
        Command::Spectral(c) => (Task::Spectral, c, None),
        Command::Gravity(c) => (Task::Gravity, c, None),
        Command::Minimize { common, kind } => (Task::Minimize, common, *kind),
    };
    match execute(task, common, kind) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let body = match &e {
                Error::OptimizationFailure { iterations, message, trace } => serde_json::json!({
                    "error": "optimization-failure", "iterations": iterations, "message": message, "trace": trace
                }),
                Error::Config { field, message } => serde_json::json!({ "error": "config", "field": field, "message": message }),
                other => serde_json::json!({ "error": "numerical", "message": other.to_string() }),
            };
            eprintln!("{body}");
            ExitCode::from(driver::error_exit_code(&e) as u8)
        }
    }
}
