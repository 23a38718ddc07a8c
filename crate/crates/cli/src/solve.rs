//! One solve of a problem instance, packaged as a [`RunRecord`].

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;

use wbipm_core::analysis::{default_sections, relative_error, rmse_by_zsection, theorem_bound};
use wbipm_core::warmbasis::WarmBasisMode;
use wbipm_core::{
    fhybr_solve, warmstart_solve, wbipm_solve, DenseMatrixOperator, Error, LinearOperator, Preconditioner, Problem,
    ProblemConfig, Result, SolveConfig, SolveResult, WarmBasis, WarmBasisSpec,
};

use crate::record::{fingerprint, section_rmse, sha256_file, FinalMetrics, Method, RunRecord, StoredSnapshot, Timings, TOOL};

/// Iterations whose iterates are kept for depth-resolved comparison.
pub const EVAL_ITERATIONS: [usize; 3] = [20, 50, 120];

/// Largest problem for which the dense bound report is computed.
pub const BOUND_MAX_COLS: usize = 2000;

/// Operator, data and truth for one solve. `config` must regenerate
/// exactly this data.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub config: &'a ProblemConfig,
    pub operator: &'a DenseMatrixOperator,
    pub x_star: &'a DVector<f64>,
    pub b: &'a DVector<f64>,
}

impl<'a> Instance<'a> {
    pub fn of(p: &'a Problem) -> Self {
        Self {
            config: &p.config,
            operator: &p.operator,
            x_star: &p.x_star,
            b: &p.b,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Attach the error-bound report (warm-basis method, dense scale only).
    pub bound: bool,
}

pub fn execute(
    inst: Instance,
    method: Method,
    warm: Option<&WarmBasisSpec>,
    solver: &SolveConfig,
    opts: SolveOptions,
) -> Result<(RunRecord, SolveResult)> {
    let t0 = Instant::now();
    let (m, n) = (inst.operator.nrows(), inst.operator.ncols());
    if inst.b.len() != m || inst.x_star.len() != n || inst.config.grid.len() != n {
        return Err(Error::Validation(format!(
            "instance shapes disagree: A is {m}x{n}, b has {}, x* has {}, grid has {}",
            inst.b.len(),
            inst.x_star.len(),
            inst.config.grid.len()
        )));
    }
    if method.needs_warm_basis() && warm.is_none() {
        return Err(Error::Validation(format!("method {} needs a warm basis", method.name())));
    }
    if opts.bound && (method != Method::Wbipm || n > BOUND_MAX_COLS) {
        return Err(Error::Validation(format!(
            "the bound report needs the wbipm method and N <= {BOUND_MAX_COLS}"
        )));
    }

    let mut cfg = solver.clone();
    for k in EVAL_ITERATIONS {
        if !cfg.snapshots.contains(&k) {
            cfg.snapshots.push(k);
        }
    }
    cfg.snapshots.sort_unstable();

    let warm_vec = match (method.needs_warm_basis(), warm) {
        (true, Some(spec)) => Some(spec.resolve(Some(inst.x_star), n)?),
        _ => None,
    };
    let warm_sha = match warm.map(|w| &w.mode) {
        Some(WarmBasisMode::File(p)) if method.needs_warm_basis() => Some(sha256_file(p)?),
        _ => None,
    };
    let op = inst.operator;
    let mut wb = None;
    let setup = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let result = match method {
        Method::Fhybr => fhybr_solve(op, inst.b, &cfg, Some(inst.x_star))?,
        Method::Wbipm => {
            let w = WarmBasis::new(op, warm_vec.as_ref().expect("resolved above"))?;
            let r = wbipm_solve(op, inst.b, &w, &cfg, Some(inst.x_star))?;
            wb = Some(w);
            r
        }
        Method::Warmstart => {
            // best multiple of the unit prior, so the first reweighting sees
            // a sensible magnitude
            let v = warm_vec.as_ref().expect("resolved above");
            let av = op.apply(v);
            let scale = av.dot(inst.b) / av.norm_squared();
            if !scale.is_finite() {
                return Err(Error::WarmBasisInKernel);
            }
            warmstart_solve(op, inst.b, &(v * scale), &cfg, Some(inst.x_star))?
        }
    };
    let solve_seconds = t1.elapsed().as_secs_f64();

    let grid = &inst.config.grid;
    let table = rmse_by_zsection(&result.x, &result.x, inst.x_star, grid, &default_sections(grid))?;
    let last = result.history.last().expect("solver always records a row");
    let bound = if opts.bound {
        let w = wb.as_ref().expect("wbipm checked above");
        let eta = inst.b - op.apply(inst.x_star);
        Some(theorem_bound(
            inst.x_star,
            w,
            op.matrix(),
            last.lambda,
            last.alpha,
            &Preconditioner::identity(n),
            &eta,
        )?)
    } else {
        None
    };
    let mut snapshots: Vec<StoredSnapshot> = result
        .snapshots
        .iter()
        .map(|s| StoredSnapshot {
            k: s.k,
            x: s.x.as_slice().to_vec(),
        })
        .collect();
    if snapshots.last().map(|s| s.k) != Some(last.k) {
        snapshots.push(StoredSnapshot {
            k: last.k,
            x: result.x.as_slice().to_vec(),
        });
    }

    let record = RunRecord {
        tool: TOOL.to_string(),
        method,
        problem: inst.config.clone(),
        fingerprint: fingerprint(op.matrix(), inst.b),
        solver: cfg,
        warm_basis: if method.needs_warm_basis() { warm.cloned() } else { None },
        warm_basis_sha256: warm_sha,
        rows: m,
        cols: n,
        history: result.history.clone(),
        stop: result.stop,
        breakdown: result.breakdown.map(|b| format!("{b:?}")),
        metrics: FinalMetrics {
            iterations: result.iterations(),
            relative_error: Some(relative_error(&result.x, inst.x_star)?),
            residual: last.residual,
            c: result.c,
            gamma: wb.as_ref().map(|w| w.gamma()),
            rmse_by_section: section_rmse(&table),
        },
        bound,
        snapshots,
        timings: Timings {
            setup_seconds: setup,
            solve_seconds,
            per_iteration: result.timings.clone(),
        },
    };
    Ok((record, result))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub fingerprint_matches: bool,
    pub history_identical: bool,
    pub replayed: RunRecord,
}

/// Re-run a record from its embedded configuration. With `bundle`, the
/// data come from disk instead of being regenerated.
pub fn replay(record: &RunRecord, bundle: Option<&Path>) -> Result<ReplayReport> {
    let problem = match bundle {
        Some(dir) => Problem::read(dir)?,
        None => Problem::generate(&record.problem)?,
    };
    let opts = SolveOptions {
        bound: record.bound.is_some(),
    };
    let (replayed, _) = execute(
        Instance::of(&problem),
        record.method,
        record.warm_basis.as_ref(),
        &record.solver,
        opts,
    )?;
    Ok(ReplayReport {
        fingerprint_matches: replayed.fingerprint == record.fingerprint,
        history_identical: replayed.history_json() == record.history_json(),
        replayed,
    })
}
