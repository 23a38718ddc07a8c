//! Augmented flexible Golub–Kahan process on the deflated system, the
//! projected Tikhonov problem, and incremental thin QR of the solution basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{combine, hstack, orthogonalize, DGKS_RATIO};
use crate::operator::LinearOperator;
use crate::reg::Preconditioner;
use crate::wbipm::WarmBasis;

/// Relative threshold for a vanishing `t_ii` or `g_{i+1,i}`.
pub const BREAKDOWN_TOL: f64 = 1e-12;
/// `qr_append` reports rank deficiency below this fraction of `||z||`.
pub const RANKDEF_TOL: f64 = 1e-12;
/// `qr_append` runs a second pass when the first shrinks `z` by more than this.
pub const QR_REORTH_RATIO: f64 = 1e3;

/// `A` with the warm-basis data direction `y` projected out:
/// `Ã = (I - y y^T) A`, `b̃ = (I - y y^T) b`. Without a warm basis this is
/// just `(A, b)`.
pub struct DeflatedSystem<'a> {
    op: &'a dyn LinearOperator,
    warm: Option<&'a WarmBasis>,
    b_tilde: DVector<f64>,
    y_dot_b: f64,
}

impl<'a> DeflatedSystem<'a> {
    pub fn new(op: &'a dyn LinearOperator, b: &DVector<f64>, warm: Option<&'a WarmBasis>) -> Result<Self> {
        check_len("measurement vector", op.nrows(), b.len())?;
        let (b_tilde, y_dot_b) = match warm {
            Some(wb) => {
                check_len("warm basis", op.ncols(), wb.x_hat().len())?;
                check_len("warm basis data direction", op.nrows(), wb.y().len())?;
                let t = wb.y().dot(b);
                (b - wb.y() * t, t)
            }
            None => (b.clone(), 0.0),
        };
        Ok(Self {
            op,
            warm,
            b_tilde,
            y_dot_b,
        })
    }

    pub fn operator(&self) -> &dyn LinearOperator {
        self.op
    }

    pub fn warm(&self) -> Option<&WarmBasis> {
        self.warm
    }

    pub fn nrows(&self) -> usize {
        self.op.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.op.ncols()
    }

    pub fn b_tilde(&self) -> &DVector<f64> {
        &self.b_tilde
    }

    /// `y^T b`; zero without a warm basis.
    pub fn y_dot_b(&self) -> f64 {
        self.y_dot_b
    }

    /// `Ã z` together with `y^T A z`.
    pub fn apply(&self, z: &DVector<f64>) -> (DVector<f64>, f64) {
        let mut h = self.op.apply(z);
        let s = match self.warm {
            Some(wb) => {
                let s = wb.y().dot(&h);
                h.axpy(-s, wb.y(), 1.0);
                s
            }
            None => 0.0,
        };
        (h, s)
    }

    /// `Ã^T u = A^T (u - y y^T u)`.
    pub fn apply_adjoint(&self, u: &DVector<f64>) -> DVector<f64> {
        match self.warm {
            Some(wb) => {
                let mut h = u.clone();
                h.axpy(-wb.y().dot(u), wb.y(), 1.0);
                self.op.apply_adjoint(&h)
            }
            None => self.op.apply_adjoint(u),
        }
    }

    /// Remove the warm-basis component: `z - x̂ (x̂^T z)`.
    pub fn project_out_warm(&self, z: &mut DVector<f64>) {
        if let Some(wb) = self.warm {
            let c = wb.x_hat().dot(z);
            z.axpy(-c, wb.x_hat(), 1.0);
        }
    }
}

/// Thin QR factorization grown one column at a time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThinQr {
    q: Vec<DVector<f64>>,
    r: DMatrix<f64>,
}

impl ThinQr {
    pub fn new() -> Self {
        Self {
            q: Vec::new(),
            r: DMatrix::zeros(0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q(&self) -> &[DVector<f64>] {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Append `z`: `Q' = [Q, (I - QQ^T) z / r]`, `R' = [[R, Q^T z], [0, r]]`.
    pub fn append(&mut self, z: &DVector<f64>) -> Result<()> {
        if let Some(q0) = self.q.first() {
            check_len("appended column", q0.len(), z.len())?;
        }
        let znorm = z.norm();
        if znorm == 0.0 {
            return Err(Error::RankDeficient("appended column is zero".into()));
        }
        let mut w = z.clone();
        let coeffs = orthogonalize(&mut w, &self.q, QR_REORTH_RATIO);
        let rkk = w.norm();
        if rkk <= RANKDEF_TOL * znorm {
            return Err(Error::RankDeficient(format!(
                "appended column lies in the span of the existing {} columns",
                self.q.len()
            )));
        }
        let k = self.q.len();
        let mut r = self.r.clone().resize(k + 1, k + 1, 0.0);
        for (i, c) in coeffs.iter().enumerate() {
            r[(i, k)] = *c;
        }
        r[(k, k)] = rkk;
        self.r = r;
        self.q.push(w / rkk);
        Ok(())
    }
}

/// Dense-matrix form of [`ThinQr::append`].
pub fn qr_append(q: &DMatrix<f64>, r: &DMatrix<f64>, z_new: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = q.ncols();
    check_len("R rows", k, r.nrows())?;
    check_len("R cols", k, r.ncols())?;
    check_len("appended column", q.nrows(), z_new.len())?;
    let mut qr = ThinQr {
        q: q.column_iter().map(|c| c.into_owned()).collect(),
        r: r.clone(),
    };
    qr.append(z_new)?;
    Ok((hstack(&qr.q, q.nrows()), qr.r))
}

/// Why the process cannot be extended further.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Breakdown {
    /// `t_ii` vanished: `Ã^T u_i` lies in the span of the previous `v`s.
    Adjoint,
    /// `g_{i+1,i}` vanished: `Ã z_i` lies in the span of the `u`s.
    Forward,
    /// The new solution direction is dependent on the existing ones.
    SolutionSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// The basis grew by one column and the process can continue.
    Extended,
    /// The basis grew by one column, after which the process broke down.
    ExtendedFinal(Breakdown),
    /// Nothing was added.
    Breakdown(Breakdown),
}

impl StepOutcome {
    pub fn grew(&self) -> bool {
        !matches!(self, StepOutcome::Breakdown(_))
    }

    pub fn breakdown(&self) -> Option<Breakdown> {
        match *self {
            StepOutcome::Extended => None,
            StepOutcome::ExtendedFinal(b) | StepOutcome::Breakdown(b) => Some(b),
        }
    }
}

/// Factorization state after `k` steps:
/// `Ã Z = U G` with `G` of size `(k+1) x k` and `Ã^T U_k = V T` with `T`
/// upper triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct AfgkState {
    u: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
    z: Vec<DVector<f64>>,
    g_cols: Vec<Vec<f64>>,
    t_cols: Vec<Vec<f64>>,
    qr: ThinQr,
    beta: f64,
    y_az: Vec<f64>,
    exhausted: Option<Breakdown>,
}

/// Start the process with `u_1 = b̃ / ||b̃||`.
pub fn afgk_init(ds: &DeflatedSystem) -> Result<AfgkState> {
    let beta = ds.b_tilde().norm();
    if beta == 0.0 {
        return Err(Error::ExplainedByWarmBasis);
    }
    Ok(AfgkState {
        u: vec![ds.b_tilde() / beta],
        v: Vec::new(),
        z: Vec::new(),
        g_cols: Vec::new(),
        t_cols: Vec::new(),
        qr: ThinQr::new(),
        beta,
        y_az: Vec::new(),
        exhausted: None,
    })
}

impl AfgkState {
    pub fn k(&self) -> usize {
        self.z.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn exhausted(&self) -> Option<Breakdown> {
        self.exhausted
    }

    pub fn u(&self) -> &[DVector<f64>] {
        &self.u
    }

    pub fn v(&self) -> &[DVector<f64>] {
        &self.v
    }

    pub fn z(&self) -> &[DVector<f64>] {
        &self.z
    }

    pub fn qr(&self) -> &ThinQr {
        &self.qr
    }

    /// `y^T A z_i` for every basis column.
    pub fn y_az(&self) -> &[f64] {
        &self.y_az
    }

    /// `(k+1) x k` upper Hessenberg projection.
    pub fn g(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut g = DMatrix::zeros(k + 1, k);
        for (j, col) in self.g_cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                g[(i, j)] = *v;
            }
        }
        g
    }

    /// `k x k` upper triangular matrix of the adjoint recurrence.
    pub fn t(&self) -> DMatrix<f64> {
        let k = self.v.len();
        let mut t = DMatrix::zeros(k, k);
        for (j, col) in self.t_cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                t[(i, j)] = *v;
            }
        }
        t
    }

    pub fn r_z(&self) -> &DMatrix<f64> {
        self.qr.r()
    }

    pub fn z_matrix(&self) -> DMatrix<f64> {
        hstack(&self.z, self.z.first().map_or(0, |c| c.len()))
    }

    /// `Z d`.
    pub fn combine_z(&self, d: &DVector<f64>) -> DVector<f64> {
        let n = self.z.first().map_or(0, |c| c.len());
        combine(&self.z, d.as_slice(), n)
    }

    /// One iteration: extends `V`, `T`, `Z`, `G`, `U` and the QR of `Z`.
    /// `precond` is `L_i`; its inverse is applied to `v_i`.
    ///
    /// The `u`-side Gram–Schmidt runs against `u_1..u_i`, which is what
    /// `g_ji = h^T u_j` requires.
    pub fn step(&mut self, ds: &DeflatedSystem, precond: &Preconditioner) -> Result<StepOutcome> {
        check_len("preconditioner", ds.ncols(), precond.len())?;
        if let Some(b) = self.exhausted {
            return Ok(StepOutcome::Breakdown(b));
        }
        let i = self.z.len();

        let mut h = ds.apply_adjoint(&self.u[i]);
        let h_norm = h.norm();
        let mut t_col = orthogonalize(&mut h, &self.v, DGKS_RATIO);
        let t_ii = h.norm();
        if h_norm == 0.0 || t_ii <= BREAKDOWN_TOL * h_norm {
            self.exhausted = Some(Breakdown::Adjoint);
            return Ok(StepOutcome::Breakdown(Breakdown::Adjoint));
        }
        t_col.push(t_ii);
        let v_i = h / t_ii;

        let mut z_i = precond.apply_inverse(&v_i);
        let before = z_i.norm();
        ds.project_out_warm(&mut z_i);
        let mut qr = self.qr.clone();
        // the new direction is judged against the column before the warm
        // direction was removed, otherwise roundoff passes as a new direction
        match qr.append(&z_i) {
            Ok(()) if qr.r()[(i, i)] > RANKDEF_TOL * before => {}
            Ok(()) | Err(Error::RankDeficient(_)) => {
                self.exhausted = Some(Breakdown::SolutionSpace);
                return Ok(StepOutcome::Breakdown(Breakdown::SolutionSpace));
            }
            Err(e) => return Err(e),
        }

        let (mut h, s) = ds.apply(&z_i);
        let h_norm = h.norm();
        let mut g_col = orthogonalize(&mut h, &self.u, DGKS_RATIO);
        let g_next = h.norm();
        g_col.push(g_next);

        self.v.push(v_i);
        self.t_cols.push(t_col);
        self.z.push(z_i);
        self.qr = qr;
        self.y_az.push(s);
        self.g_cols.push(g_col);

        if h_norm == 0.0 || g_next <= BREAKDOWN_TOL * h_norm {
            self.exhausted = Some(Breakdown::Forward);
            return Ok(StepOutcome::ExtendedFinal(Breakdown::Forward));
        }
        self.u.push(h / g_next);
        Ok(StepOutcome::Extended)
    }
}

/// Solution of the projected problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSolution {
    pub d: DVector<f64>,
    /// `||G d - beta e_1||`.
    pub residual: f64,
}

/// `d = argmin ||G d - beta e1||^2 + lambda^2 ||R_Z d||^2` by QR of the
/// stacked `(2k+1) x k` system.
pub fn solve_projected(state: &AfgkState, lambda: f64) -> Result<ProjectedSolution> {
    solve_projected_parts(&state.g(), state.r_z(), state.beta(), lambda)
}

pub fn solve_projected_parts(g: &DMatrix<f64>, r_z: &DMatrix<f64>, beta: f64, lambda: f64) -> Result<ProjectedSolution> {
    let k = g.ncols();
    if k == 0 {
        return Err(Error::validation("projected problem needs k >= 1"));
    }
    check_len("G rows", k + 1, g.nrows())?;
    check_len("R_Z size", k, r_z.nrows())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::validation(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let mut stacked = DMatrix::zeros(2 * k + 1, k);
    stacked.view_mut((0, 0), (k + 1, k)).copy_from(g);
    stacked.view_mut((k + 1, 0), (k, k)).copy_from(&(r_z * lambda));
    let mut rhs = DVector::zeros(2 * k + 1);
    rhs[0] = beta;

    let qr = stacked.qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if scale == 0.0 || r.diagonal().iter().any(|d| d.abs() <= 1e-13 * scale) {
        return Err(Error::RankDeficient("stacked projected system".into()));
    }
    let qtb = qr.q().tr_mul(&rhs);
    let d = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient("stacked projected system".into()))?;
    let mut res = g * &d;
    res[0] -= beta;
    Ok(ProjectedSolution {
        residual: res.norm(),
        d,
    })
}

/// `c = gamma (t - s) / (gamma^2 + alpha^2)`: the minimizer of
/// `(gamma c + s - t)^2 + alpha^2 c^2`.
pub fn solve_c(gamma: f64, s: f64, t: f64, alpha: f64) -> f64 {
    gamma * (t - s) / (gamma * gamma + alpha * alpha)
}

/// Norms certifying the factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationResiduals {
    /// `||U^T U - I||_F`.
    pub u_orthogonality: f64,
    /// `||V^T V - I||_F`.
    pub v_orthogonality: f64,
    /// `||Ã Z - U G||_F`.
    pub forward: f64,
    /// `||Ã^T U_k - V T||_F`.
    pub adjoint: f64,
    /// `max_i |x̂^T z_i|`.
    pub warm_orthogonality: f64,
    /// `||Z - Q R||_F`.
    pub qr: f64,
}

impl RelationResiduals {
    pub fn max_relation(&self) -> f64 {
        self.forward.max(self.adjoint)
    }
}

/// Evaluate every factorization relation explicitly.
pub fn relation_residuals(state: &AfgkState, ds: &DeflatedSystem) -> RelationResiduals {
    let (m, n, k) = (ds.nrows(), ds.ncols(), state.k());
    let orth = |cols: &[DVector<f64>], len: usize| {
        let b = hstack(cols, len);
        (b.tr_mul(&b) - DMatrix::identity(cols.len(), cols.len())).norm()
    };
    let mut u_cols = state.u.clone();
    // after a forward breakdown U has k columns; pad so U G is defined
    while u_cols.len() < k + 1 {
        u_cols.push(DVector::zeros(m));
    }
    let u_mat = hstack(&u_cols, m);
    let z_mat = hstack(&state.z, n);
    let az = hstack(&state.z.iter().map(|z| ds.apply(z).0).collect::<Vec<_>>(), m);
    let forward = (az - &u_mat * state.g()).norm();

    let kv = state.v.len();
    let atu = hstack(&state.u[..kv].iter().map(|u| ds.apply_adjoint(u)).collect::<Vec<_>>(), n);
    let adjoint = (atu - hstack(&state.v, n) * state.t()).norm();

    let warm_orthogonality = match ds.warm() {
        Some(wb) => state.z.iter().map(|z| wb.x_hat().dot(z).abs()).fold(0.0, f64::max),
        None => 0.0,
    };
    let qr = (&z_mat - hstack(state.qr.q(), n) * state.qr.r()).norm();
    RelationResiduals {
        u_orthogonality: orth(&state.u, m),
        v_orthogonality: orth(&state.v, n),
        forward,
        adjoint,
        warm_orthogonality,
        qr,
    }
}
