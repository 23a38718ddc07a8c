use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular node grid over a slab. Node `(i, j, k)` sits at
/// `(i*hx, j*hy, k*hz)` mm, so the slab spans `[0, (n-1)*h]` per axis and
/// boundary faces carry nodes. Linear index is x-fastest, then y, then z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
}

impl Grid3 {
    pub fn new(nx: usize, ny: usize, nz: usize, hx: f64, hy: f64, hz: f64) -> Result<Self> {
        let g = Self {
            nx,
            ny,
            nz,
            hx,
            hy,
            hz,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.nz < 2 {
            return Err(Error::validation(format!(
                "grid counts must be >= 2, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        for (name, h) in [("hx", self.hx), ("hy", self.hy), ("hz", self.hz)] {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive, got {h}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.coords(idx);
        [i as f64 * self.hx, j as f64 * self.hy, k as f64 * self.hz]
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            (self.nx - 1) as f64 * self.hx,
            (self.ny - 1) as f64 * self.hy,
            (self.nz - 1) as f64 * self.hz,
        ]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.hx * self.hy * self.hz
    }

    /// Depth label of slice `k` in mm, counting slices from 1: `(k+1)*hz`.
    pub fn slice_label(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.hz
    }

    /// Nearest node to an arbitrary point, clamped into the grid.
    pub fn nearest_node(&self, p: [f64; 3]) -> usize {
        let snap = |x: f64, h: f64, n: usize| ((x / h).round().max(0.0) as usize).min(n - 1);
        self.index(
            snap(p[0], self.hx, self.nx),
            snap(p[1], self.hy, self.ny),
            snap(p[2], self.hz, self.nz),
        )
    }
}
