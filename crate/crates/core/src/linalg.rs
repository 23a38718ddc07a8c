//! Small dense kernels shared by the Krylov and QR code.

use nalgebra::{DMatrix, DVector};

/// Reorthogonalize when a Gram–Schmidt pass shrinks the vector by more than
/// this factor (Kahan–Parlett "twice is enough" criterion).
pub const DGKS_RATIO: f64 = std::f64::consts::SQRT_2;

/// Classical Gram–Schmidt of `h` against the orthonormal `basis`, with one
/// extra pass when the first removes more than `1 - 1/reorth_ratio` of the
/// norm. Returns the accumulated projection coefficients.
pub fn orthogonalize(h: &mut DVector<f64>, basis: &[DVector<f64>], reorth_ratio: f64) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    if basis.is_empty() {
        return coeffs;
    }
    let before = h.norm();
    project_out(h, basis, &mut coeffs);
    if h.norm() * reorth_ratio < before {
        project_out(h, basis, &mut coeffs);
    }
    coeffs
}

fn project_out(h: &mut DVector<f64>, basis: &[DVector<f64>], coeffs: &mut [f64]) {
    let pass: Vec<f64> = basis.iter().map(|q| q.dot(h)).collect();
    for ((q, c), acc) in basis.iter().zip(&pass).zip(coeffs.iter_mut()) {
        h.axpy(-c, q, 1.0);
        *acc += c;
    }
}

/// Linear combination `Σ coeffs[i] * cols[i]`.
pub fn combine(cols: &[DVector<f64>], coeffs: &[f64], len: usize) -> DVector<f64> {
    let mut out = DVector::zeros(len);
    for (c, w) in cols.iter().zip(coeffs) {
        out.axpy(*w, c, 1.0);
    }
    out
}

/// Stack column vectors into a dense matrix.
pub fn hstack(cols: &[DVector<f64>], nrows: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nrows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Logarithmically spaced points on `[lo, hi]`, inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Golden-section minimization of a unimodal `f` on `[a, b]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
