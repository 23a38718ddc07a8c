//! Majorization–minimization smoothing of the l1 penalty, the reweighting
//! preconditioner, and weighted GCV selection of regularization parameters
//! on projected problems.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{golden_section, logspace};
use crate::operator::LinearOperator;

/// How a regularization parameter is chosen each outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRule {
    Fixed(f64),
    Wgcv,
}

impl ParamRule {
    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            ParamRule::Fixed(v) if !(v >= 0.0 && v.is_finite()) => Err(Error::validation(format!(
                "{name} must be a finite value >= 0, got {v}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmConfig {
    pub epsilon: f64,
    pub lambda_rule: ParamRule,
    pub alpha_rule: ParamRule,
    /// Initial WGCV weight in (0, 1].
    pub omega: f64,
    /// Replace the weight by the running mean of per-iteration optimal weights.
    pub adaptive_omega: bool,
    pub max_outer: usize,
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
}

impl Default for MmConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            lambda_rule: ParamRule::Wgcv,
            alpha_rule: ParamRule::Fixed(0.1),
            omega: 1.0,
            adaptive_omega: true,
            max_outer: 120,
            stagnation_tol: 1e-6,
            stagnation_window: 5,
        }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::validation("epsilon must be > 0"));
        }
        if self.max_outer < 1 || self.stagnation_window < 1 {
            return Err(Error::validation("iteration caps must be >= 1"));
        }
        if self.stagnation_tol.is_nan() || self.stagnation_tol <= 0.0 {
            return Err(Error::validation("stagnation_tol must be > 0"));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::validation("omega must lie in (0, 1]"));
        }
        self.lambda_rule.validate("lambda")?;
        self.alpha_rule.validate("alpha")
    }
}

/// Diagonal preconditioner `L`; the solver applies `L^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    diag: DVector<f64>,
}

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Self {
            diag: DVector::from_element(n, 1.0),
        }
    }

    pub fn from_diag(diag: DVector<f64>) -> Result<Self> {
        if diag.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::validation("preconditioner entries must be positive and finite"));
        }
        Ok(Self { diag })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    /// Diagonal of `D = L^T L`.
    pub fn gram_diag(&self) -> DVector<f64> {
        self.diag.map(|v| v * v)
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_mul(&self.diag)
    }

    pub fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_div(&self.diag)
    }

    pub fn sigma_min(&self) -> f64 {
        self.diag.min()
    }

    pub fn sigma_max(&self) -> f64 {
        self.diag.max()
    }
}

/// `L(x) = diag((2 sqrt(x_i^2 + eps))^{-1/2})`.
pub fn build_preconditioner(x: &DVector<f64>, epsilon: f64) -> Preconditioner {
    assert!(epsilon > 0.0, "epsilon must be positive");
    Preconditioner {
        diag: x.map(|v| (2.0 * (v * v + epsilon).sqrt()).powf(-0.5)),
    }
}

/// `||Ax - b||^2 + lambda^2 * sum_j sqrt(x_j^2 + eps)`.
pub fn smoothed_objective<A: LinearOperator + ?Sized>(
    x: &DVector<f64>,
    a: &A,
    b: &DVector<f64>,
    lambda: f64,
    epsilon: f64,
) -> f64 {
    let r = a.apply(x) - b;
    r.norm_squared() + lambda * lambda * x.iter().map(|v| (v * v + epsilon).sqrt()).sum::<f64>()
}

/// Sum of the quadratic majorizers of `sqrt(x^2 + eps)` built at `x_ref`.
pub fn majorizer(x: &DVector<f64>, x_ref: &DVector<f64>, epsilon: f64) -> f64 {
    x.iter()
        .zip(x_ref.iter())
        .map(|(&v, &r)| {
            let s = (r * r + epsilon).sqrt();
            s + (v * v - r * r) / (2.0 * s)
        })
        .sum()
}

/// Exact MM iterations for small dense problems: each step solves the
/// reweighted normal equations `(A^T A + lambda^2 L_k^2) x = A^T b` with
/// `L_k = L(x^(k))`. Returns the iterates `x^(1), ..., x^(iters)`.
pub fn dense_mm(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    epsilon: f64,
    x0: &DVector<f64>,
    iters: usize,
) -> Result<Vec<DVector<f64>>> {
    check_len("rhs", a.nrows(), b.len())?;
    check_len("initial iterate", a.ncols(), x0.len())?;
    let ata = a.tr_mul(a);
    let atb = a.tr_mul(b);
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let d = build_preconditioner(&x, epsilon).gram_diag();
        let mut h = ata.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += lambda * lambda * d[i];
        }
        x = h
            .cholesky()
            .ok_or_else(|| Error::Singular("reweighted normal equations".into()))?
            .solve(&atb);
        out.push(x.clone());
    }
    Ok(out)
}

/// Outcome of a WGCV parameter search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WgcvChoice {
    pub lambda: f64,
    pub gcv: f64,
    /// Weight suggested by this projected problem for adapting omega.
    pub omega_hint: f64,
    /// True when the search degenerated and a default was returned.
    pub fallback: bool,
}

/// Number of logarithmic grid points in the coarse WGCV scan.
pub const WGCV_GRID_POINTS: usize = 40;
/// Coarse grid spans `[LO, HI] * sigma_max(G)`.
pub const WGCV_GRID_LO: f64 = 1e-10;
pub const WGCV_GRID_HI: f64 = 1e2;
/// Returned when the WGCV search degenerates, relative to `sigma_max(G)`.
pub const WGCV_FALLBACK: f64 = 1e-2;

/// Spectral data of the standard-form projected problem
/// `min ||W w - beta e1||^2 + lambda^2 ||w||^2`, `W = G R^{-1}`.
struct StandardForm {
    rows: usize,
    sigma: Vec<f64>,
    coef: Vec<f64>,
    perp: f64,
}

impl StandardForm {
    fn gcv(&self, lambda: f64, omega: f64) -> f64 {
        let l2 = lambda * lambda;
        let mut resid = self.perp;
        let mut filt_complement = 0.0;
        for (s, c) in self.sigma.iter().zip(&self.coef) {
            let s2 = s * s;
            let one_minus_phi = l2 / (s2 + l2);
            resid += (one_minus_phi * c).powi(2);
            filt_complement += one_minus_phi;
        }
        let k = self.sigma.len() as f64;
        let denom = (self.rows as f64 - omega * k) + omega * filt_complement;
        k * resid / (denom * denom)
    }

    /// Weight that makes the WGCV derivative vanish at lambda = sigma_min.
    fn omega_hint(&self) -> f64 {
        let alpha = match self.sigma.last() {
            Some(&a) if a > 0.0 => a,
            _ => return 1.0,
        };
        let a2 = alpha * alpha;
        let (mut t1, mut t3, mut t4, mut t5, mut v2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (s, c) in self.sigma.iter().zip(&self.coef) {
            let s2 = s * s;
            let tt = 1.0 / (s2 + a2);
            t1 += s2 * tt;
            t3 += (c * alpha * s).powi(2) * tt.powi(3);
            t4 += (s * tt).powi(2);
            t5 += (a2 * c * tt).powi(2);
            v2 += (c * s).powi(2) * tt.powi(3);
        }
        let omega = (self.rows as f64 * a2 * v2) / (t1 * t3 + t4 * (t5 + self.perp));
        if omega.is_finite() && omega > 0.0 {
            omega.min(1.0)
        } else {
            1.0
        }
    }
}

fn standard_form(g: &DMatrix<f64>, r_z: &DMatrix<f64>, beta: f64) -> Option<StandardForm> {
    let k = g.ncols();
    if r_z.diagonal().iter().any(|&d| d.is_nan() || d == 0.0) {
        return None;
    }
    // W^T = R^{-T} G^T
    let wt = r_z.tr_solve_upper_triangular(&g.transpose())?;
    let w = wt.transpose();
    if w.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // pad to square so U is complete; the padded zero singular value sorts
    // last and its left vector spans the complement of range(W)
    let mut sq = DMatrix::zeros(k + 1, k + 1);
    sq.view_mut((0, 0), (k + 1, k)).copy_from(&w);
    let svd = SVD::new(sq, true, false);
    let u = svd.u?;
    let coef: Vec<f64> = (0..k).map(|i| beta * u[(0, i)]).collect();
    let perp = (beta * u[(0, k)]).powi(2);
    Some(StandardForm {
        rows: g.nrows(),
        sigma: svd.singular_values.iter().take(k).copied().collect(),
        coef,
        perp,
    })
}

/// Coarse log-grid scan with golden-section refinement between the
/// neighbours of the best interior grid point. Ties within 1e-12 relative
/// resolve to the smallest parameter.
fn minimize_on_grid<F: Fn(f64) -> f64>(grid: &[f64], f: F) -> Option<(f64, f64)> {
    let vals: Vec<f64> = grid.iter().map(|&l| f(l)).collect();
    let best = vals.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let idx = vals
        .iter()
        .position(|&v| v.is_finite() && v <= best + 1e-12 * best.abs())?;
    if idx == 0 || idx == grid.len() - 1 {
        return Some((grid[idx], vals[idx]));
    }
    let fl = |t: f64| {
        let v = f(t.exp());
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let t = golden_section(fl, grid[idx - 1].ln(), grid[idx + 1].ln(), 1e-10);
    let lam = t.exp();
    let v = f(lam);
    if v.is_finite() && v < vals[idx] {
        Some((lam, v))
    } else {
        Some((grid[idx], vals[idx]))
    }
}

/// Select `lambda` for `min ||G d - beta e1||^2 + lambda^2 ||R d||^2` by
/// minimizing the weighted GCV function
/// `k ||(I - G G_lambda) beta e1||^2 / trace(I - omega G G_lambda)^2`.
pub fn wgcv_select(g: &DMatrix<f64>, r_z: &DMatrix<f64>, beta: f64, omega: f64) -> Result<WgcvChoice> {
    let k = g.ncols();
    if k == 0 {
        return Err(Error::validation("WGCV needs at least one basis vector"));
    }
    check_len("G rows", k + 1, g.nrows())?;
    check_len("R_Z size", k, r_z.nrows())?;
    check_len("R_Z size", k, r_z.ncols())?;
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::validation(format!("omega must lie in (0, 1], got {omega}")));
    }
    let smax = g.singular_values().max();
    let fallback = |scale: f64| WgcvChoice {
        lambda: WGCV_FALLBACK * scale,
        gcv: f64::NAN,
        omega_hint: 1.0,
        fallback: true,
    };
    if !(smax > 0.0 && smax.is_finite()) {
        return Ok(fallback(1.0));
    }
    let Some(sf) = standard_form(g, r_z, beta) else {
        return Ok(fallback(smax));
    };
    let grid = logspace(WGCV_GRID_LO * smax, WGCV_GRID_HI * smax, WGCV_GRID_POINTS);
    match minimize_on_grid(&grid, |l| sf.gcv(l, omega)) {
        Some((lambda, gcv)) => Ok(WgcvChoice {
            lambda,
            gcv,
            omega_hint: sf.omega_hint(),
            fallback: false,
        }),
        None => Ok(fallback(smax)),
    }
}

/// WGCV for the one-dimensional coefficient problem
/// `min (gamma c - r)^2 + alpha^2 c^2`.
///
/// With a single datum the GCV curve is flat for `omega = 1` and increasing
/// for `omega < 1`, so the search resolves to the low end of the grid.
pub fn wgcv_select_scalar(gamma: f64, rhs: f64, omega: f64) -> Result<WgcvChoice> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::validation("gamma must be positive"));
    }
    let g2 = gamma * gamma;
    let f = |a: f64| {
        let a2 = a * a;
        let one_minus_t = a2 / (g2 + a2);
        let denom = (1.0 - omega) + omega * one_minus_t;
        (one_minus_t * rhs).powi(2) / (denom * denom)
    };
    let grid = logspace(WGCV_GRID_LO * gamma, WGCV_GRID_HI * gamma, WGCV_GRID_POINTS);
    Ok(match minimize_on_grid(&grid, f) {
        Some((lambda, gcv)) => WgcvChoice {
            lambda,
            gcv,
            omega_hint: omega,
            fallback: false,
        },
        None => WgcvChoice {
            lambda: WGCV_FALLBACK * gamma,
            gcv: f64::NAN,
            omega_hint: omega,
            fallback: true,
        },
    })
}
