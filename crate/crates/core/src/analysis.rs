//! Dense-scale analysis: closed-form solutions, the alignment functional,
//! the amplification and error bounds, loss metrics and depth-resolved RMSE.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::operator::Grid3;
use crate::reg::Preconditioner;
use crate::wbipm::{decompose, WarmBasis};

/// Singular values below this fraction of the largest count as zero when
/// computing `ker(Ã)`.
pub const KERNEL_TOL: f64 = 1e-10;

/// `Γ(v; S) = ||v_S||_D^2 / ||v||_D^2`, where `v_S` is the `D`-orthogonal
/// projection of `v` onto the column span of `basis`.
pub fn gamma_alignment(v: &DVector<f64>, basis: &DMatrix<f64>, d: &Preconditioner) -> Result<f64> {
    check_len("vector", d.len(), v.len())?;
    check_len("subspace basis rows", d.len(), basis.nrows())?;
    let l = d.diag();
    let w = v.component_mul(l);
    let wn2 = w.norm_squared();
    if wn2 == 0.0 {
        return Err(Error::ZeroVector("alignment argument"));
    }
    if basis.ncols() == 0 {
        return Ok(0.0);
    }
    let mut scaled = basis.clone();
    for mut col in scaled.column_iter_mut() {
        col.component_mul_assign(l);
    }
    let q = orthonormal_columns(&scaled)?;
    let proj = q.tr_mul(&w).norm_squared();
    Ok((proj / wn2).clamp(0.0, 1.0))
}

/// `Γ(v; {u : n^T u = 0})`: the `D`-projection onto a hyperplane removes the
/// component along `D^{-1} n`.
pub fn gamma_hyperplane(v: &DVector<f64>, normal: &DVector<f64>, d: &Preconditioner) -> Result<f64> {
    check_len("vector", d.len(), v.len())?;
    check_len("hyperplane normal", d.len(), normal.len())?;
    let dd = d.gram_diag();
    let vd2: f64 = v.iter().zip(dd.iter()).map(|(x, w)| w * x * x).sum();
    if vd2 == 0.0 {
        return Err(Error::ZeroVector("alignment argument"));
    }
    let nn = normal.dot(v);
    let n_dinv_n: f64 = normal.iter().zip(dd.iter()).map(|(x, w)| x * x / w).sum();
    if n_dinv_n == 0.0 {
        return Err(Error::ZeroVector("hyperplane normal"));
    }
    Ok(((vd2 - nn * nn / n_dinv_n) / vd2).clamp(0.0, 1.0))
}

/// Orthonormal basis of the column space via SVD; fails on dependent columns.
fn orthonormal_columns(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, false);
    let smax = svd.singular_values.max();
    if svd.singular_values.iter().any(|&s| s <= 1e-13 * smax) || smax == 0.0 {
        return Err(Error::RankDeficient("subspace basis columns are dependent".into()));
    }
    Ok(svd.u.expect("requested U"))
}

/// `Ã = (I - y y^T) A` as a dense matrix.
pub fn deflated_matrix(a: &DMatrix<f64>, wb: &WarmBasis) -> Result<DMatrix<f64>> {
    check_len("warm basis data direction", a.nrows(), wb.y().len())?;
    let y = wb.y();
    Ok(a - y * (y.transpose() * a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub z: DVector<f64>,
    pub c: f64,
    pub x: DVector<f64>,
}

/// `z_w = (I - x̂x̂^T)(B̃ + λ²D)^{-1} Ã^T b̃`, `c_w = γ y^T(b - A z_w)/(γ² + α²)`,
/// `x_w = z_w + c_w x̂`.
pub fn closed_form_solution(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    wb: &WarmBasis,
    lambda: f64,
    alpha: f64,
    l_z: &Preconditioner,
) -> Result<ClosedForm> {
    check_len("measurement vector", a.nrows(), b.len())?;
    check_len("preconditioner", a.ncols(), l_z.len())?;
    let at = deflated_matrix(a, wb)?;
    let y = wb.y();
    let bt = b - y * y.dot(b);
    let mut h = at.tr_mul(&at);
    let dd = l_z.gram_diag();
    for i in 0..h.nrows() {
        h[(i, i)] += lambda * lambda * dd[i];
    }
    let rhs = at.tr_mul(&bt);
    let sol = h
        .cholesky()
        .ok_or_else(|| Error::Singular("B̃ + λ²D is not positive definite".into()))?
        .solve(&rhs);
    let xh = wb.x_hat();
    let z = &sol - xh * xh.dot(&sol);
    let g = wb.gamma();
    let c = g * y.dot(&(b - a * &z)) / (g * g + alpha * alpha);
    let x = &z + xh * c;
    Ok(ClosedForm { z, c, x })
}

/// Spectral data for the amplification bound of `(B̃ + λ²D)^{-1} λ²D`.
#[derive(Debug, Clone)]
pub struct LemmaContext {
    lambda: f64,
    l_z: Preconditioner,
    kernel: DMatrix<f64>,
    theta: Vec<f64>,
    theta_plus: f64,
    system: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

/// One evaluation of the amplification bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    /// `||(B̃ + D_λ)^{-1} D_λ v||`.
    pub lhs: f64,
    pub rhs: f64,
    /// `Γ(v; ker Ã)`.
    pub gamma: f64,
}

impl LemmaCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + slack)
    }
}

impl LemmaContext {
    /// `a_tilde` is the dense deflated operator; `ker Ã` comes from its SVD.
    pub fn new(a_tilde: &DMatrix<f64>, l_z: &Preconditioner, lambda: f64) -> Result<Self> {
        let n = a_tilde.ncols();
        check_len("preconditioner", n, l_z.len())?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::validation("lambda must be positive"));
        }
        let kernel = kernel_basis(a_tilde);
        let n0 = kernel.ncols();

        let bt = a_tilde.tr_mul(a_tilde);
        let dd = l_z.gram_diag();
        let l = l_z.diag();
        // D^{-1/2} B̃ D^{-1/2} shares its spectrum with D^{-1} B̃
        let sym = DMatrix::from_fn(n, n, |i, j| bt[(i, j)] / (l[i] * l[j]));
        let mut theta: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().map(|&t| t.max(0.0)).collect();
        theta.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        let theta_plus = if n0 < n { theta[n0] } else { f64::INFINITY };

        let mut h = bt;
        for i in 0..n {
            h[(i, i)] += lambda * lambda * dd[i];
        }
        let system = h
            .cholesky()
            .ok_or_else(|| Error::Singular("B̃ + λ²D is not positive definite".into()))?;
        Ok(Self {
            lambda,
            l_z: l_z.clone(),
            kernel,
            theta,
            theta_plus,
            system,
        })
    }

    /// Orthonormal basis of `ker Ã`.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.ncols()
    }

    /// Eigenvalues of `D^{-1} B̃`, ascending.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Smallest eigenvalue of `D^{-1} B̃` beyond the kernel.
    pub fn theta_plus(&self) -> f64 {
        self.theta_plus
    }

    /// Eigenvalues of `(B̃ + D_λ)^{-1} D_λ` predicted from `θ`, descending.
    pub fn amplification_eigenvalues(&self) -> Vec<f64> {
        let l2 = self.lambda * self.lambda;
        self.theta.iter().map(|t| l2 / (l2 + t)).collect()
    }

    /// `Γ(v; ker Ã)`.
    pub fn kernel_alignment(&self, v: &DVector<f64>) -> Result<f64> {
        gamma_alignment(v, &self.kernel, &self.l_z)
    }

    /// Bound factor `(Γ + λ⁴(1 - Γ)/(λ² + θ₊)²)^{1/2}`.
    pub fn contraction(&self, gamma: f64) -> f64 {
        let l2 = self.lambda * self.lambda;
        let mu = if self.theta_plus.is_finite() { l2 / (l2 + self.theta_plus) } else { 0.0 };
        (gamma + mu * mu * (1.0 - gamma)).sqrt()
    }

    pub fn check(&self, v: &DVector<f64>) -> Result<LemmaCheck> {
        check_len("vector", self.l_z.len(), v.len())?;
        let dd = self.l_z.gram_diag();
        let l2 = self.lambda * self.lambda;
        let dv = v.component_mul(&dd) * l2;
        let lhs = self.system.solve(&dv).norm();
        let gamma = self.kernel_alignment(v)?;
        let v_d = v.component_mul(self.l_z.diag()).norm();
        let rhs = self.contraction(gamma) * v_d / self.l_z.sigma_min();
        Ok(LemmaCheck { lhs, rhs, gamma })
    }
}

/// Orthonormal basis of the numerical null space of `m`.
pub fn kernel_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    // work with the square Gram-free form: pad rows so SVD returns all of V
    let padded = if m.nrows() < n {
        m.clone().resize(n, n, 0.0)
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= KERNEL_TOL * smax)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    crate::linalg::hstack(&cols, n)
}

/// Terms of the error bound for the warm-basis solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `α²|c*|/(γ² + α²)`.
    pub term_alpha: f64,
    /// `C1 C2 ||z*||_D`, the form used for certification.
    pub term_align: f64,
    /// `C1 C2 Γ(x*; x̂^⊥) ||x*||_D`.
    pub term_align_gamma: f64,
    /// `C1 C2 Γ(x*; x̂^⊥)^{1/2} ||x*||_D`.
    pub term_align_sqrt_gamma: f64,
    /// `C3 ||η||`.
    pub term_noise: f64,
    /// `term_alpha + term_align + term_noise`.
    pub total: f64,
    /// `||x* - x_w||`.
    pub observed_error: f64,
    pub theta_plus: f64,
    /// `Γ(z*; ker Ã)`.
    pub gamma_kernel: f64,
    /// `Γ(x*; x̂^⊥)`.
    pub gamma_alignment: f64,
    /// `||z*||_D`.
    pub z_star_d_norm: f64,
}

impl BoundReport {
    pub fn certified(&self) -> bool {
        self.observed_error <= self.total * (1.0 + 1e-10)
    }
}

/// Evaluate every term of the error bound and the observed error of the
/// closed-form solution for data `b = A x* + η`.
pub fn theorem_bound(
    x_star: &DVector<f64>,
    wb: &WarmBasis,
    a: &DMatrix<f64>,
    lambda: f64,
    alpha: f64,
    l_z: &Preconditioner,
    eta: &DVector<f64>,
) -> Result<BoundReport> {
    check_len("reference solution", a.ncols(), x_star.len())?;
    check_len("noise", a.nrows(), eta.len())?;
    let b = a * x_star + eta;
    let cf = closed_form_solution(a, &b, wb, lambda, alpha, l_z)?;
    let observed_error = (x_star - &cf.x).norm();

    let at = deflated_matrix(a, wb)?;
    let ctx = LemmaContext::new(&at, l_z, lambda)?;
    let dec = decompose(x_star, wb)?;

    let g = wb.gamma();
    let g2a2 = g * g + alpha * alpha;
    let aty = a.tr_mul(wb.y()).norm();
    let smin = l_z.sigma_min();
    let smax_a = a.singular_values().max();

    let gamma_kernel = if dec.z_star.norm() > 0.0 { ctx.kernel_alignment(&dec.z_star)? } else { 0.0 };
    let c1 = (1.0 + g * aty / g2a2) / smin;
    let c2 = ctx.contraction(gamma_kernel);
    let c3 = c1 * smax_a / (lambda * lambda * smin) + g / g2a2;

    let z_star_d_norm = dec.z_star.component_mul(l_z.diag()).norm();
    let x_star_d_norm = x_star.component_mul(l_z.diag()).norm();
    let gamma_alignment = if x_star_d_norm > 0.0 {
        gamma_hyperplane(x_star, wb.x_hat(), l_z)?
    } else {
        0.0
    };

    let term_alpha = alpha * alpha * dec.c_star.abs() / g2a2;
    let term_align = c1 * c2 * z_star_d_norm;
    let term_noise = c3 * eta.norm();
    Ok(BoundReport {
        c1,
        c2,
        c3,
        term_alpha,
        term_align,
        term_align_gamma: c1 * c2 * gamma_alignment * x_star_d_norm,
        term_align_sqrt_gamma: c1 * c2 * gamma_alignment.sqrt() * x_star_d_norm,
        term_noise,
        total: term_alpha + term_align + term_noise,
        observed_error,
        theta_plus: ctx.theta_plus(),
        gamma_kernel,
        gamma_alignment,
        z_star_d_norm,
    })
}

/// `1 - cos∠(pred, truth)`, in `[0, 2]`.
pub fn angle_loss(pred: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    check_len("prediction", truth.len(), pred.len())?;
    let (np, nt) = (pred.norm(), truth.norm());
    if np == 0.0 || nt == 0.0 {
        return Err(Error::ZeroVector("angle loss argument"));
    }
    Ok((1.0 - pred.dot(truth) / (np * nt)).clamp(0.0, 2.0))
}

/// `||pred - truth||²`.
pub fn distance_loss(pred: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    check_len("prediction", truth.len(), pred.len())?;
    Ok((pred - truth).norm_squared())
}

/// `||x - x*|| / ||x*||`.
pub fn relative_error(x: &DVector<f64>, x_star: &DVector<f64>) -> Result<f64> {
    check_len("reconstruction", x_star.len(), x.len())?;
    let n = x_star.norm();
    if n == 0.0 {
        return Err(Error::ZeroVector("reference solution"));
    }
    Ok((x - x_star).norm() / n)
}

/// Depth band in mm; slice `k` sits at depth `(k + 1) * hz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZSection {
    pub lo: f64,
    pub hi: f64,
}

/// Split the slices into four contiguous bands of `ceil(nz / 4)` slices.
pub fn default_sections(grid: &Grid3) -> Vec<ZSection> {
    let chunk = grid.nz.div_ceil(4);
    (0..grid.nz)
        .step_by(chunk)
        .map(|k0| {
            let k1 = (k0 + chunk).min(grid.nz) - 1;
            ZSection {
                lo: grid.slice_label(k0),
                hi: grid.slice_label(k1),
            }
        })
        .collect()
}

/// Assign each slice to its section; every slice must land in exactly one.
fn slice_sections(grid: &Grid3, sections: &[ZSection]) -> Result<Vec<usize>> {
    if sections.is_empty() {
        return Err(Error::validation("no z-sections given"));
    }
    let tol = 1e-9 * grid.hz;
    let mut owner = Vec::with_capacity(grid.nz);
    for k in 0..grid.nz {
        let z = grid.slice_label(k);
        let hits: Vec<usize> = sections
            .iter()
            .enumerate()
            .filter(|(_, s)| z >= s.lo - tol && z <= s.hi + tol)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => owner.push(*i),
            [] => return Err(Error::validation(format!("slice at {z} mm is in no z-section"))),
            _ => return Err(Error::validation(format!("slice at {z} mm is in overlapping z-sections"))),
        }
    }
    for (i, s) in sections.iter().enumerate() {
        if !owner.contains(&i) {
            return Err(Error::validation(format!(
                "z-section {}-{} mm contains no slice",
                s.lo, s.hi
            )));
        }
    }
    Ok(owner)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZSectionRow {
    pub lo: f64,
    pub hi: f64,
    pub baseline_rmse: f64,
    pub candidate_rmse: f64,
    /// `100 (1 - candidate / baseline)`; absent when the baseline RMSE is 0.
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZSectionTable {
    pub rows: Vec<ZSectionRow>,
    pub overall: ZSectionRow,
}

/// RMSE per depth band of `candidate` and `baseline` against `x_star`.
pub fn rmse_by_zsection(
    candidate: &DVector<f64>,
    baseline: &DVector<f64>,
    x_star: &DVector<f64>,
    grid: &Grid3,
    sections: &[ZSection],
) -> Result<ZSectionTable> {
    let n = grid.len();
    check_len("candidate", n, candidate.len())?;
    check_len("baseline", n, baseline.len())?;
    check_len("reference solution", n, x_star.len())?;
    let owner = slice_sections(grid, sections)?;
    let mut sse_c = vec![0.0; sections.len()];
    let mut sse_b = vec![0.0; sections.len()];
    let mut count = vec![0usize; sections.len()];
    for j in 0..n {
        let s = owner[grid.coords(j).2];
        sse_c[s] += (candidate[j] - x_star[j]).powi(2);
        sse_b[s] += (baseline[j] - x_star[j]).powi(2);
        count[s] += 1;
    }
    let row = |lo: f64, hi: f64, b: f64, c: f64, cnt: usize| {
        let (br, cr) = ((b / cnt as f64).sqrt(), (c / cnt as f64).sqrt());
        ZSectionRow {
            lo,
            hi,
            baseline_rmse: br,
            candidate_rmse: cr,
            improvement_pct: (br > 0.0).then(|| 100.0 * (1.0 - cr / br)),
        }
    };
    let rows = sections
        .iter()
        .enumerate()
        .map(|(i, s)| row(s.lo, s.hi, sse_b[i], sse_c[i], count[i]))
        .collect();
    let overall = row(
        grid.slice_label(0),
        grid.slice_label(grid.nz - 1),
        sse_b.iter().sum(),
        sse_c.iter().sum(),
        n,
    );
    Ok(ZSectionTable { rows, overall })
}
