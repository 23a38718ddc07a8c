//! The warm-basis alternating solver and the flexible hybrid baselines.
//!
//! Each outer iteration grows the AFGK basis by one column using the
//! preconditioner built from the previous iterate, solves the projected
//! Tikhonov problem for the complement `z`, then updates the scalar
//! coefficient `c` of the warm direction in closed form.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::gk::{afgk_init, solve_c, solve_projected, AfgkState, Breakdown, DeflatedSystem};
use crate::operator::LinearOperator;
use crate::reg::{build_preconditioner, wgcv_select, wgcv_select_scalar, MmConfig, ParamRule, Preconditioner};

/// Normalized prior direction with its image under `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmBasis {
    x_hat: DVector<f64>,
    gamma: f64,
    y: DVector<f64>,
}

impl WarmBasis {
    pub fn new<A: LinearOperator + ?Sized>(op: &A, x_nn: &DVector<f64>) -> Result<Self> {
        check_len("warm basis", op.ncols(), x_nn.len())?;
        let norm = x_nn.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector("warm basis"));
        }
        let x_hat = x_nn / norm;
        let ax = op.apply(&x_hat);
        let gamma = ax.norm();
        if gamma == 0.0 || gamma <= 1e-12 * norm_estimate(op) {
            return Err(Error::WarmBasisInKernel);
        }
        Ok(Self {
            y: ax / gamma,
            x_hat,
            gamma,
        })
    }

    pub fn x_hat(&self) -> &DVector<f64> {
        &self.x_hat
    }

    /// `||A x̂||`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `A x̂ / gamma`.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
}

/// Lower estimate of `||A||_2` from a few power iterations.
fn norm_estimate<A: LinearOperator + ?Sized>(op: &A) -> f64 {
    let n = op.ncols();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..6 {
        let w = op.apply_adjoint(&op.apply(&v));
        let nw = w.norm();
        if nw == 0.0 {
            return est;
        }
        est = nw.sqrt();
        v = w / nw;
    }
    est
}

/// Split of a reference solution along the warm direction:
/// `x* = c* x̂ + z*` with `z* ⊥ x̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub c_star: f64,
    pub z_star: DVector<f64>,
}

pub fn decompose(x_star: &DVector<f64>, wb: &WarmBasis) -> Result<Decomposition> {
    check_len("reference solution", wb.x_hat().len(), x_star.len())?;
    let c_star = x_star.dot(wb.x_hat());
    let mut z_star = x_star - wb.x_hat() * c_star;
    // second projection keeps z* orthogonal to rounding level
    let r = z_star.dot(wb.x_hat());
    z_star.axpy(-r, wb.x_hat(), 1.0);
    Ok(Decomposition { c_star, z_star })
}

/// `Ã`, `b̃` and the warm-basis data for a solve.
pub fn deflate<'a>(op: &'a dyn LinearOperator, b: &DVector<f64>, wb: &'a WarmBasis) -> Result<DeflatedSystem<'a>> {
    DeflatedSystem::new(op, b, Some(wb))
}

/// Which iterate the reweighting preconditioner is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerPolicy {
    /// `L_k = L(z^(k))`, the complement iterate.
    Complement,
    /// `L_k = L(x^(k))`, the full iterate.
    Full,
    /// `L_k = I` throughout.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub mm: MmConfig,
    pub preconditioner: PreconditionerPolicy,
    /// Iterations at which to keep a copy of `x`.
    pub snapshots: Vec<usize>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mm: MmConfig::default(),
            preconditioner: PreconditionerPolicy::Complement,
            snapshots: Vec::new(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        self.mm.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub omega: f64,
    /// True when the WGCV search degenerated and a default was used.
    pub lambda_fallback: bool,
    pub c: f64,
    /// `||G d - beta e1||`.
    pub projected_residual: f64,
    /// `||A x - b||`.
    pub residual: f64,
    /// `||x - x*|| / ||x*||` when a reference is supplied.
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxOuter,
    Stagnation,
    Breakdown,
    /// `b̃ = 0`: the data lie along the warm direction (or are zero).
    DataExplained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub k: usize,
    pub x: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: DVector<f64>,
    pub c: f64,
    pub z: DVector<f64>,
    pub history: Vec<IterationRecord>,
    /// Wall time (seconds) elapsed at each history row.
    pub timings: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub stop: StopReason,
    pub breakdown: Option<Breakdown>,
    /// Final projection basis; `None` when no recursion was started.
    pub basis: Option<AfgkState>,
}

impl SolveResult {
    pub fn iterations(&self) -> usize {
        self.history.last().map_or(0, |r| r.k)
    }

    pub fn final_relative_error(&self) -> Option<f64> {
        self.history.last().and_then(|r| r.relative_error)
    }
}

/// Warm-basis iterative projection solve.
pub fn wbipm_solve<A: LinearOperator>(
    op: &A,
    b: &DVector<f64>,
    wb: &WarmBasis,
    cfg: &SolveConfig,
    ground_truth: Option<&DVector<f64>>,
) -> Result<SolveResult> {
    let n = op.ncols();
    run(op, b, Some(wb), cfg, ground_truth, Preconditioner::identity(n))
}

/// Flexible hybrid baseline: no warm basis, `c = 0`, `L_k = L(x^(k))`.
pub fn fhybr_solve<A: LinearOperator>(
    op: &A,
    b: &DVector<f64>,
    cfg: &SolveConfig,
    ground_truth: Option<&DVector<f64>>,
) -> Result<SolveResult> {
    let n = op.ncols();
    run(op, b, None, &baseline_config(cfg), ground_truth, Preconditioner::identity(n))
}

/// Flexible hybrid baseline started from `x^(0) = x_nn`, so `L_1 = L(x_nn)`.
pub fn warmstart_solve<A: LinearOperator>(
    op: &A,
    b: &DVector<f64>,
    x_nn: &DVector<f64>,
    cfg: &SolveConfig,
    ground_truth: Option<&DVector<f64>>,
) -> Result<SolveResult> {
    check_len("initial guess", op.ncols(), x_nn.len())?;
    let l1 = build_preconditioner(x_nn, cfg.mm.epsilon);
    run(op, b, None, &baseline_config(cfg), ground_truth, l1)
}

/// Without a warm basis `z = x`, so the complement policy means `L(x)`.
fn baseline_config(cfg: &SolveConfig) -> SolveConfig {
    let mut c = cfg.clone();
    if c.preconditioner == PreconditionerPolicy::Complement {
        c.preconditioner = PreconditionerPolicy::Full;
    }
    c
}

/// `b̃` below this fraction of `||b||` counts as zero.
const EXPLAINED_TOL: f64 = 1e-12;

struct Recorder<'a> {
    op: &'a dyn LinearOperator,
    b: &'a DVector<f64>,
    truth: Option<(&'a DVector<f64>, f64)>,
    start: Instant,
    history: Vec<IterationRecord>,
    timings: Vec<f64>,
}

impl Recorder<'_> {
    fn push(&mut self, mut rec: IterationRecord, x: &DVector<f64>) {
        rec.residual = (self.op.apply(x) - self.b).norm();
        rec.relative_error = self.truth.map(|(t, tn)| (x - t).norm() / tn);
        self.history.push(rec);
        self.timings.push(self.start.elapsed().as_secs_f64());
    }
}

fn run(
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    warm: Option<&WarmBasis>,
    cfg: &SolveConfig,
    ground_truth: Option<&DVector<f64>>,
    initial_precond: Preconditioner,
) -> Result<SolveResult> {
    cfg.validate()?;
    let (m, n) = (op.nrows(), op.ncols());
    check_len("measurement vector", m, b.len())?;
    let truth = match ground_truth {
        Some(t) => {
            check_len("ground truth", n, t.len())?;
            let tn = t.norm();
            if tn == 0.0 {
                return Err(Error::ZeroVector("ground truth"));
            }
            Some((t, tn))
        }
        None => None,
    };
    let mm = &cfg.mm;
    let ds = DeflatedSystem::new(op, b, warm)?;
    let mut rec = Recorder {
        op,
        b,
        truth,
        start: Instant::now(),
        history: Vec::new(),
        timings: Vec::new(),
    };
    let t_data = ds.y_dot_b();
    let gamma = warm.map_or(1.0, |w| w.gamma());

    let choose_alpha = |resid: f64, omega: f64| -> Result<f64> {
        if warm.is_none() {
            return Ok(0.0);
        }
        match mm.alpha_rule {
            ParamRule::Fixed(a) => Ok(a),
            ParamRule::Wgcv => Ok(wgcv_select_scalar(gamma, resid, omega)?.lambda),
        }
    };
    let assemble = |c: f64, z: &DVector<f64>| match warm {
        Some(wb) => z + wb.x_hat() * c,
        None => z.clone(),
    };

    let beta = ds.b_tilde().norm();
    if beta <= EXPLAINED_TOL * b.norm() || beta == 0.0 {
        let alpha = choose_alpha(t_data, mm.omega)?;
        let c = if warm.is_some() { solve_c(gamma, 0.0, t_data, alpha) } else { 0.0 };
        let z = DVector::zeros(n);
        let x = assemble(c, &z);
        rec.push(
            IterationRecord {
                k: 0,
                lambda: 0.0,
                alpha,
                omega: mm.omega,
                lambda_fallback: false,
                c,
                projected_residual: 0.0,
                residual: 0.0,
                relative_error: None,
            },
            &x,
        );
        return Ok(SolveResult {
            snapshots: snapshot_if(&cfg.snapshots, 0, &x),
            x,
            c,
            z,
            history: rec.history,
            timings: rec.timings,
            stop: StopReason::DataExplained,
            breakdown: None,
            basis: None,
        });
    }

    let mut state = afgk_init(&ds)?;
    let mut precond = initial_precond;
    check_len("initial preconditioner", n, precond.len())?;
    let mut omega = mm.omega;
    let mut omega_hints = Vec::new();
    let mut snapshots = Vec::new();
    let mut current: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    let mut stop = StopReason::MaxOuter;
    let mut breakdown = None;

    for k in 1..=mm.max_outer {
        let outcome = state.step(&ds, &precond)?;
        if !outcome.grew() {
            stop = StopReason::Breakdown;
            breakdown = outcome.breakdown();
            break;
        }
        let omega_used = omega;
        let (lambda, lambda_fallback) = match mm.lambda_rule {
            ParamRule::Fixed(l) => (l, false),
            ParamRule::Wgcv => {
                let choice = wgcv_select(&state.g(), state.r_z(), state.beta(), omega)?;
                if choice.fallback {
                    log::warn!("iteration {k}: WGCV search degenerated, using lambda = {:.3e}", choice.lambda);
                }
                if mm.adaptive_omega && !choice.fallback {
                    omega_hints.push(choice.omega_hint);
                    omega = omega_hints.iter().sum::<f64>() / omega_hints.len() as f64;
                }
                (choice.lambda, choice.fallback)
            }
        };
        let proj = solve_projected(&state, lambda)?;
        let z = state.combine_z(&proj.d);
        let s: f64 = state.y_az().iter().zip(proj.d.iter()).map(|(w, d)| w * d).sum();
        let alpha = choose_alpha(t_data - s, omega_used)?;
        let c = if warm.is_some() { solve_c(gamma, s, t_data, alpha) } else { 0.0 };
        let x = assemble(c, &z);
        rec.push(
            IterationRecord {
                k,
                lambda,
                alpha,
                omega: omega_used,
                lambda_fallback,
                c,
                projected_residual: proj.residual,
                residual: 0.0,
                relative_error: None,
            },
            &x,
        );
        if cfg.snapshots.contains(&k) {
            snapshots.push(Snapshot { k, x: x.clone() });
        }
        precond = match cfg.preconditioner {
            PreconditionerPolicy::Complement => build_preconditioner(&z, mm.epsilon),
            PreconditionerPolicy::Full => build_preconditioner(&x, mm.epsilon),
            PreconditionerPolicy::Identity => Preconditioner::identity(n),
        };
        current = Some((c, z, x));

        if let Some(b) = outcome.breakdown() {
            stop = StopReason::Breakdown;
            breakdown = Some(b);
            break;
        }
        let h = &rec.history;
        if h.len() > mm.stagnation_window {
            let now = h[h.len() - 1].residual;
            let then = h[h.len() - 1 - mm.stagnation_window].residual;
            if (now - then).abs() <= mm.stagnation_tol * then {
                stop = StopReason::Stagnation;
                break;
            }
        }
    }

    let (c, z, x) = match current {
        Some(v) => v,
        None => {
            // broke down before producing a basis vector: only the warm
            // direction is available
            let alpha = choose_alpha(t_data, mm.omega)?;
            let c = if warm.is_some() { solve_c(gamma, 0.0, t_data, alpha) } else { 0.0 };
            let z = DVector::zeros(n);
            let x = assemble(c, &z);
            rec.push(
                IterationRecord {
                    k: 0,
                    lambda: 0.0,
                    alpha,
                    omega: mm.omega,
                    lambda_fallback: false,
                    c,
                    projected_residual: beta,
                    residual: 0.0,
                    relative_error: None,
                },
                &x,
            );
            snapshots = snapshot_if(&cfg.snapshots, 0, &x);
            (c, z, x)
        }
    };
    Ok(SolveResult {
        x,
        c,
        z,
        history: rec.history,
        timings: rec.timings,
        snapshots,
        stop,
        breakdown,
        basis: Some(state),
    })
}

fn snapshot_if(wanted: &[usize], k: usize, x: &DVector<f64>) -> Vec<Snapshot> {
    if wanted.contains(&k) {
        vec![Snapshot { k, x: x.clone() }]
    } else {
        Vec::new()
    }
}
