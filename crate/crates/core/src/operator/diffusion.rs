use nalgebra::{DMatrix, DVector};

use super::Grid3;
use crate::error::{check_len, Error, Result};

/// Symmetric sparse matrix in CSR form (both triangles stored).
#[derive(Debug, Clone)]
pub struct SymmetricSparse {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

impl SymmetricSparse {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *o = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[p])] = self.values[p];
            }
        }
        m
    }

    /// Jacobi-preconditioned conjugate gradients to relative residual `tol`.
    pub fn solve_cg(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        check_len("cg right-hand side", self.n, rhs.len())?;
        let n = self.n;
        let mut x = vec![0.0; n];
        let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rhs_norm == 0.0 {
            return Ok(x);
        }
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 20 * n + 100;
        for _ in 0..max_iter {
            self.mul_into(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(Error::Singular("diffusion matrix is not positive definite".into()));
            }
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= tol * rhs_norm {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] / self.diag[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let ratio = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + ratio * p[i];
            }
        }
        Err(Error::NoConvergence(format!(
            "diffusion CG did not reach {tol:e} in {max_iter} iterations"
        )))
    }
}

/// Finite-volume form of `-div(kappa grad phi) + mu_a phi = q` with the
/// Robin condition `phi + zeta d_nu phi = 0` on every face.
///
/// Each node owns a dual cell (halved on each boundary axis). Interior faces
/// use the harmonic mean of `kappa`; boundary faces contribute the Robin
/// term `kappa_j * area / zeta`, which is what eliminating the ghost node
/// of a centred normal difference gives. Rows are integrated over the dual
/// cell, so the matrix is symmetric and `S phi = f` takes integrated sources.
#[derive(Debug, Clone)]
pub struct DiffusionSystem {
    grid: Grid3,
    matrix: SymmetricSparse,
    cell_volume: Vec<f64>,
}

impl DiffusionSystem {
    pub fn assemble(grid: &Grid3, mu_a: &[f64], kappa: &[f64], zeta: f64) -> Result<Self> {
        grid.validate()?;
        let n = grid.len();
        check_len("absorption field", n, mu_a.len())?;
        check_len("diffusion field", n, kappa.len())?;
        if mu_a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::validation("mu_a must be positive everywhere"));
        }
        if kappa.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::validation("kappa must be positive everywhere"));
        }
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::validation("Robin coefficient must be positive"));
        }

        let dims = [grid.nx, grid.ny, grid.nz];
        let h = [grid.hx, grid.hy, grid.hz];
        let half = |idx: usize, n: usize| if idx == 0 || idx == n - 1 { 0.5 } else { 1.0 };

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(7 * n);
        let mut values = Vec::with_capacity(7 * n);
        let mut diag = vec![0.0; n];
        let mut cell_volume = vec![0.0; n];
        row_ptr.push(0);

        for j in 0..n {
            let (i0, i1, i2) = grid.coords(j);
            let c = [i0, i1, i2];
            let w = [half(c[0], dims[0]), half(c[1], dims[1]), half(c[2], dims[2])];
            let vol = w[0] * w[1] * w[2] * h[0] * h[1] * h[2];
            cell_volume[j] = vol;

            let mut d = mu_a[j] * vol;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(7);
            for axis in 0..3 {
                let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                let area = (w[a1] * h[a1]) * (w[a2] * h[a2]);
                for dir in [-1i64, 1] {
                    let pos = c[axis] as i64 + dir;
                    if pos < 0 || pos >= dims[axis] as i64 {
                        d += kappa[j] * area / zeta;
                        continue;
                    }
                    let mut nc = c;
                    nc[axis] = pos as usize;
                    let nb = grid.index(nc[0], nc[1], nc[2]);
                    let kf = 2.0 * kappa[j] * kappa[nb] / (kappa[j] + kappa[nb]);
                    let cond = kf * area / h[axis];
                    d += cond;
                    row.push((nb, -cond));
                }
            }
            row.push((j, d));
            row.sort_by_key(|e| e.0);
            diag[j] = d;
            for (col, v) in row {
                col_idx.push(col);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }

        Ok(Self {
            grid: *grid,
            matrix: SymmetricSparse {
                n,
                row_ptr,
                col_idx,
                values,
                diag,
            },
            cell_volume,
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn matrix(&self) -> &SymmetricSparse {
        &self.matrix
    }

    /// Dual-cell volume of each node (mm^3); halved per boundary axis.
    pub fn cell_volume(&self) -> &[f64] {
        &self.cell_volume
    }

    /// Field produced by a unit point source at node `node`.
    pub fn point_response(&self, node: usize) -> Result<DVector<f64>> {
        let mut rhs = vec![0.0; self.matrix.n];
        rhs[node] = 1.0;
        self.solve(&rhs)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.matrix.solve_cg(rhs, 1e-13)?))
    }
}
