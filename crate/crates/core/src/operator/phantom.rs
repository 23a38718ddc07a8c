use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Grid3;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub amplitude: f64,
}

impl Ellipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.semi_axes[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    fn check_inside(&self, grid: &Grid3) -> Result<()> {
        let e = grid.extent();
        let ok = (0..3).all(|a| {
            self.semi_axes[a] > 0.0
                && self.center[a] - self.semi_axes[a] >= -1e-12
                && self.center[a] + self.semi_axes[a] <= e[a] + 1e-12
        });
        if !ok {
            return Err(Error::validation(format!(
                "ellipsoid {self:?} is not fully inside the {e:?} slab"
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::validation("inclusion amplitude must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhantomSpec {
    Explicit(Vec<Ellipsoid>),
    Random { count: usize },
}

/// Rasterize 1–3 ellipsoidal inclusions onto the node grid: each node gets
/// the summed amplitude of the ellipsoids containing it.
pub fn generate_phantom(grid: &Grid3, spec: &PhantomSpec, seed: u64) -> Result<DVector<f64>> {
    let inclusions = match spec {
        PhantomSpec::Explicit(list) => list.clone(),
        PhantomSpec::Random { count } => random_inclusions(grid, *count, seed)?,
    };
    if inclusions.is_empty() || inclusions.len() > 3 {
        return Err(Error::validation(format!(
            "phantom needs 1 to 3 inclusions, got {}",
            inclusions.len()
        )));
    }
    for inc in &inclusions {
        inc.check_inside(grid)?;
    }
    Ok(DVector::from_fn(grid.len(), |j, _| {
        let p = grid.position(j);
        inclusions
            .iter()
            .filter(|e| e.contains(p))
            .map(|e| e.amplitude)
            .sum()
    }))
}

/// Seeded random inclusions that fit in the slab and cover at least one node.
pub fn random_inclusions(grid: &Grid3, count: usize, seed: u64) -> Result<Vec<Ellipsoid>> {
    if !(1..=3).contains(&count) {
        return Err(Error::validation(format!(
            "phantom needs 1 to 3 inclusions, got {count}"
        )));
    }
    let e = grid.extent();
    let h = [grid.hx, grid.hy, grid.hz];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut semi = [0.0; 3];
        let mut center = [0.0; 3];
        for a in 0..3 {
            let lo = (0.08 * e[a]).max(1.01 * h[a]).min(0.45 * e[a]);
            let hi = (0.2 * e[a]).max(lo);
            semi[a] = rng.random_range(lo..=hi);
            center[a] = rng.random_range(semi[a]..=(e[a] - semi[a]));
        }
        let inc = Ellipsoid {
            center,
            semi_axes: semi,
            amplitude: rng.random_range(0.5..=1.5),
        };
        if (0..grid.len()).any(|j| inc.contains(grid.position(j))) {
            out.push(inc);
        }
    }
    Ok(out)
}
