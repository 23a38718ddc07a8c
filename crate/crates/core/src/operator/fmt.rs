use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DenseMatrixOperator, DiffusionSystem, Grid3};
use crate::error::{check_len, Error, Result};

/// A scalar coefficient field: constant or one value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Constant(f64),
    PerVoxel(Vec<f64>),
}

impl Field {
    fn expand(&self, n: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            Field::Constant(v) => Ok(vec![*v; n]),
            Field::PerVoxel(v) => {
                if v.len() != n {
                    return Err(Error::validation(format!(
                        "{name}: expected {n} values, got {}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Constant(v)
    }
}

/// Optical properties at the excitation and emission wavelengths.
///
/// `robin_ex`/`robin_em` are the boundary impedance `2*Gamma*kappa` (mm) of
/// the condition `phi + 2*Gamma*kappa d_nu phi = 0`, one scalar per
/// wavelength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalCoefficients {
    pub mu_a_ex: Field,
    pub mu_a_em: Field,
    pub kappa_ex: Field,
    pub kappa_em: Field,
    pub eta: f64,
    pub robin_ex: f64,
    pub robin_em: f64,
}

impl Default for OpticalCoefficients {
    fn default() -> Self {
        Self {
            mu_a_ex: Field::Constant(0.01),
            mu_a_em: Field::Constant(0.01),
            kappa_ex: Field::Constant(0.33),
            kappa_em: Field::Constant(0.33),
            eta: 1.0,
            robin_ex: 1.65,
            robin_em: 1.65,
        }
    }
}

/// Point sources on the bottom face (`z = 0`) and point detectors on the
/// top face (`z = extent_z`), positions in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDetectorLayout {
    pub sources: Vec<[f64; 3]>,
    pub detectors: Vec<[f64; 3]>,
}

impl SourceDetectorLayout {
    /// Evenly spaced `sx x sy` sources and `dx x dy` detectors, each array
    /// centred in the face at cell midpoints.
    pub fn regular(grid: &Grid3, sources: (usize, usize), detectors: (usize, usize)) -> Self {
        let e = grid.extent();
        let place = |n: (usize, usize), z: f64| {
            let mut pts = Vec::with_capacity(n.0 * n.1);
            for b in 0..n.1 {
                for a in 0..n.0 {
                    pts.push([
                        e[0] * (a as f64 + 0.5) / n.0 as f64,
                        e[1] * (b as f64 + 0.5) / n.1 as f64,
                        z,
                    ]);
                }
            }
            pts
        };
        Self {
            sources: place(sources, 0.0),
            detectors: place(detectors, e[2]),
        }
    }

    pub fn num_measurements(&self) -> usize {
        self.sources.len() * self.detectors.len()
    }

    pub fn validate(&self, grid: &Grid3) -> Result<()> {
        if self.sources.is_empty() || self.detectors.is_empty() {
            return Err(Error::validation("layout needs at least one source and one detector"));
        }
        let e = grid.extent();
        let tol = 1e-9 * e.iter().cloned().fold(1.0, f64::max);
        let in_face = |p: &[f64; 3]| {
            p.iter().all(|v| v.is_finite())
                && p[0] >= -tol
                && p[0] <= e[0] + tol
                && p[1] >= -tol
                && p[1] <= e[1] + tol
        };
        for (i, p) in self.sources.iter().enumerate() {
            if !in_face(p) || p[2].abs() > tol {
                return Err(Error::validation(format!(
                    "source {i} at {p:?} is not on the bottom face"
                )));
            }
        }
        for (i, p) in self.detectors.iter().enumerate() {
            if !in_face(p) || (p[2] - e[2]).abs() > tol {
                return Err(Error::validation(format!(
                    "detector {i} at {p:?} is not on the top face"
                )));
            }
        }
        Ok(())
    }
}

/// Assemble the dense FMT sensitivity matrix.
///
/// Row `s * n_det + d` holds `eta * phi_s(r_j) * g_d(r_j) * vol_j`, where
/// `phi_s` is the excitation field of source `s`, `g_d` the emission
/// Green's function seen from detector `d` (reciprocity; the emission matrix
/// is symmetric) and `vol_j` the dual-cell volume of node `j`.
pub fn assemble_fmt_operator(
    grid: &Grid3,
    coeff: &OpticalCoefficients,
    layout: &SourceDetectorLayout,
) -> Result<DenseMatrixOperator> {
    grid.validate()?;
    layout.validate(grid)?;
    if !(coeff.eta > 0.0 && coeff.eta.is_finite()) {
        return Err(Error::validation("eta must be positive"));
    }
    let n = grid.len();
    let ex = DiffusionSystem::assemble(
        grid,
        &coeff.mu_a_ex.expand(n, "mu_a_ex")?,
        &coeff.kappa_ex.expand(n, "kappa_ex")?,
        coeff.robin_ex,
    )?;
    let em = DiffusionSystem::assemble(
        grid,
        &coeff.mu_a_em.expand(n, "mu_a_em")?,
        &coeff.kappa_em.expand(n, "kappa_em")?,
        coeff.robin_em,
    )?;

    let phi: Vec<DVector<f64>> = layout
        .sources
        .par_iter()
        .map(|p| ex.point_response(grid.nearest_node(*p)))
        .collect::<Result<_>>()?;
    let green: Vec<DVector<f64>> = layout
        .detectors
        .par_iter()
        .map(|p| em.point_response(grid.nearest_node(*p)))
        .collect::<Result<_>>()?;

    let nd = green.len();
    let m = phi.len() * nd;
    let vol = em.cell_volume();
    let mut a = DMatrix::zeros(m, n);
    for (s, ph) in phi.iter().enumerate() {
        for (d, g) in green.iter().enumerate() {
            let row = s * nd + d;
            for j in 0..n {
                a[(row, j)] = coeff.eta * ph[j] * g[j] * vol[j];
            }
        }
    }
    DenseMatrixOperator::new(a)
}

/// Forward-simulate detector readings for a fluorophore distribution by
/// explicit emission solves (no reciprocity). Used to cross-check the
/// assembled operator.
pub fn simulate_measurements(
    grid: &Grid3,
    coeff: &OpticalCoefficients,
    layout: &SourceDetectorLayout,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = grid.len();
    check_len("fluorophore vector", n, x.len())?;
    let ex = DiffusionSystem::assemble(
        grid,
        &coeff.mu_a_ex.expand(n, "mu_a_ex")?,
        &coeff.kappa_ex.expand(n, "kappa_ex")?,
        coeff.robin_ex,
    )?;
    let em = DiffusionSystem::assemble(
        grid,
        &coeff.mu_a_em.expand(n, "mu_a_em")?,
        &coeff.kappa_em.expand(n, "kappa_em")?,
        coeff.robin_em,
    )?;
    let nd = layout.detectors.len();
    let mut b = DVector::zeros(layout.num_measurements());
    for (s, p) in layout.sources.iter().enumerate() {
        let phi = ex.point_response(grid.nearest_node(*p))?;
        let rhs: Vec<f64> = (0..n)
            .map(|j| em.cell_volume()[j] * coeff.eta * x[j] * phi[j])
            .collect();
        let phi_em = em.solve(&rhs)?;
        for (d, q) in layout.detectors.iter().enumerate() {
            b[s * nd + d] = phi_em[grid.nearest_node(*q)];
        }
    }
    Ok(b)
}
