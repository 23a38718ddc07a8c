//! `wbipm` command-line front end: problem generation, solves, evaluation
//! and sweeps. Exit codes: 0 success, 2 invalid input, 3 numerical failure.

pub mod evaluate;
pub mod record;
pub mod solve;
pub mod sweep;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wbipm_core::{mm, ConfigMap, Error, Problem, ProblemConfig, Result, SolveConfig, WarmBasisMode, WarmBasisSpec};

pub use record::{Method, RunRecord};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub fn exit_code(err: &Error) -> u8 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

#[derive(Debug, Parser)]
#[command(name = "wbipm", version, about = "Warm-basis iterative projection for l1-regularized inverse problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic problem bundle (A, x*, b, noise, metadata).
    Generate(GenerateArgs),
    /// Solve a bundle and write a run record, or replay a record.
    Solve(SolveArgs),
    /// Compare run records against the ground truth.
    Evaluate(EvaluateArgs),
    /// Run a noise x angle x method x seed matrix of solves.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem bundle directory.
    #[arg(long, required_unless_present = "replay")]
    pub bundle: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "replay")]
    pub method: Option<Method>,
    /// exact, random, angle:<deg> or file:<path>.
    #[arg(long, value_name = "MODE")]
    pub warm_basis: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub warm_seed: u64,
    /// Solver settings (`solver.*` keys).
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Attach the error-bound report (wbipm, N <= 2000).
    #[arg(long)]
    pub bound: bool,
    /// Also write the final U, V, Z, G, T matrices.
    #[arg(long)]
    pub dump_basis: bool,
    /// Re-run a record from its embedded config and compare histories.
    #[arg(long, value_name = "RECORD", conflicts_with_all = ["method", "warm_basis", "dump_basis", "bound"])]
    pub replay: Option<PathBuf>,
    /// Output directory.
    #[arg(long, required_unless_present = "replay")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground truth: an `x_star.mtx` file or a bundle directory.
    #[arg(long)]
    pub truth: PathBuf,
    /// Iterations to tabulate.
    #[arg(long, value_delimiter = ',', default_values_t = solve::EVAL_ITERATIONS)]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Run records; the first is the baseline.
    #[arg(required = true)]
    pub records: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Problem, `solver.*` and `sweep.*` keys.
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_config(args: &ConfigArgs) -> Result<ConfigMap> {
    let mut map = match &args.config {
        Some(p) => ConfigMap::load(p)?,
        None => ConfigMap::default(),
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Validation(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        map.set(k.trim(), v.trim());
    }
    Ok(map)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Validation(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<Problem> {
    let mut map = load_config(&args.cfg)?;
    let cfg = ProblemConfig::take_from(&mut map)?;
    map.finish()?;
    let p = Problem::generate(&cfg)?;
    p.write(&args.out)?;
    println!(
        "wrote {} (M = {}, N = {})",
        args.out.display(),
        p.operator.matrix().nrows(),
        p.operator.matrix().ncols()
    );
    Ok(p)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<RunRecord> {
    if let Some(rec_path) = &args.replay {
        let rec = RunRecord::load(rec_path)?;
        let rep = solve::replay(&rec, args.bundle.as_deref())?;
        if !rep.fingerprint_matches {
            return Err(Error::Validation(
                "replayed problem data differ from the recorded fingerprint".into(),
            ));
        }
        if !rep.history_identical {
            return Err(Error::NoConvergence("replayed history differs from the record".into()));
        }
        println!("replay of {}: history identical", rec_path.display());
        if let Some(out) = &args.out {
            fs::create_dir_all(out).map_err(io_err(out))?;
            rep.replayed.save(&out.join("record.json"))?;
        }
        return Ok(rep.replayed);
    }
    let bundle = args.bundle.as_ref().expect("clap enforces --bundle");
    let method = args.method.expect("clap enforces --method");
    let out = args.out.as_ref().expect("clap enforces --out");

    let mut map = load_config(&args.cfg)?;
    let solver = SolveConfig::take_from(&mut map)?;
    map.finish()?;
    let warm = match &args.warm_basis {
        Some(s) => Some(WarmBasisSpec {
            mode: s.parse::<WarmBasisMode>()?,
            seed: args.warm_seed,
        }),
        None if method.needs_warm_basis() => {
            return Err(Error::Validation(format!(
                "method {} needs --warm-basis",
                method.name()
            )))
        }
        None => None,
    };
    let problem = Problem::read(bundle)?;
    let (rec, result) = solve::execute(
        solve::Instance::of(&problem),
        method,
        warm.as_ref(),
        &solver,
        solve::SolveOptions { bound: args.bound },
    )?;

    fs::create_dir_all(out).map_err(io_err(out))?;
    rec.save(&out.join("record.json"))?;
    write_csv(&out.join("history.csv"), &rec.history)?;
    mm::write_vector(&out.join("x.mtx"), &result.x)?;
    if args.dump_basis {
        if let Some(state) = &result.basis {
            let dir = out.join("basis");
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let n = problem.operator.matrix().ncols();
            let m = problem.operator.matrix().nrows();
            mm::write_matrix(&dir.join("U.mtx"), &wbipm_core::linalg::hstack(state.u(), m))?;
            mm::write_matrix(&dir.join("V.mtx"), &wbipm_core::linalg::hstack(state.v(), n))?;
            mm::write_matrix(&dir.join("Z.mtx"), &state.z_matrix())?;
            mm::write_matrix(&dir.join("G.mtx"), &state.g())?;
            mm::write_matrix(&dir.join("T.mtx"), &state.t())?;
        }
    }
    println!(
        "{}: {} iterations ({:?}), relative error {:.6}",
        method.name(),
        rec.metrics.iterations,
        rec.stop,
        rec.metrics.relative_error.unwrap_or(f64::NAN)
    );
    Ok(rec)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<evaluate::Evaluation> {
    let truth_path = if args.truth.is_dir() {
        args.truth.join("x_star.mtx")
    } else {
        args.truth.clone()
    };
    let x_star = mm::read_vector(&truth_path)?;
    let records = args
        .records
        .iter()
        .map(|p| RunRecord::load(p))
        .collect::<Result<Vec<_>>>()?;
    let ev = evaluate::evaluate(&records, &x_star, &args.ks)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    write_json(&args.out.join("evaluation.json"), &ev)?;
    write_csv(&args.out.join("series.csv"), &ev.series)?;
    write_csv(&args.out.join("rmse.csv"), &ev.rmse)?;
    for w in &ev.warnings {
        log::warn!("{w}");
    }
    println!("wrote {}", args.out.display());
    Ok(ev)
}

#[derive(Debug, Serialize)]
struct CellRow {
    index: usize,
    sigma: f64,
    angle: f64,
    method: &'static str,
    seed: u64,
    status: &'static str,
    iterations: Option<usize>,
    final_relative_error: Option<f64>,
    error: Option<String>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<sweep::AggregateRow>> {
    let mut map = load_config(&args.cfg)?;
    let base_cfg = ProblemConfig::take_from(&mut map)?;
    let solver = SolveConfig::take_from(&mut map)?;
    let spec = sweep::SweepSpec::take_from(&mut map)?;
    map.finish()?;
    let base = Problem::generate(&base_cfg)?;
    let outcomes = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Validation(e.to_string()))?
            .install(|| sweep::run_sweep(&base, &spec, &solver))?,
        None => sweep::run_sweep(&base, &spec, &solver)?,
    };

    let rec_dir = args.out.join("records");
    fs::create_dir_all(&rec_dir).map_err(io_err(&rec_dir))?;
    let mut rows = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        let c = &o.cell;
        let row = match &o.outcome {
            Ok(rec) => {
                rec.save(&rec_dir.join(format!("cell_{:04}.json", c.index)))?;
                CellRow {
                    index: c.index,
                    sigma: c.sigma,
                    angle: c.angle,
                    method: c.method.name(),
                    seed: c.seed,
                    status: "ok",
                    iterations: Some(rec.metrics.iterations),
                    final_relative_error: rec.final_relative_error(),
                    error: None,
                }
            }
            Err(msg) => CellRow {
                index: c.index,
                sigma: c.sigma,
                angle: c.angle,
                method: c.method.name(),
                seed: c.seed,
                status: "failed",
                iterations: None,
                final_relative_error: None,
                error: Some(msg.clone()),
            },
        };
        rows.push(row);
    }
    write_csv(&args.out.join("cells.csv"), &rows)?;
    let agg = sweep::aggregate(&outcomes);
    write_csv(&args.out.join("aggregate.csv"), &agg)?;
    println!(
        "{} cells ({} failed), {} aggregate rows -> {}",
        outcomes.len(),
        outcomes.iter().filter(|o| o.outcome.is_err()).count(),
        agg.len(),
        args.out.display()
    );
    Ok(agg)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(drop),
        Command::Solve(a) => cmd_solve(a).map(drop),
        Command::Evaluate(a) => cmd_evaluate(a).map(drop),
        Command::Sweep(a) => cmd_sweep(a).map(drop),
    }
}
