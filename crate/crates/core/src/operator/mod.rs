//! Forward operators and the synthetic FMT-analog problem generator.
//!
//! The desk-scale forward model discretizes the coupled excitation/emission
//! diffusion equations on a regular node grid with a 7-point stencil and
//! Robin boundary rows, then assembles a dense sensitivity matrix through
//! reciprocity (one excitation solve per source, one adjoint emission solve
//! per detector).

mod diffusion;
mod fmt;
mod grid;
mod noise;
mod phantom;

pub use diffusion::{DiffusionSystem, SymmetricSparse};
pub use fmt::{
    assemble_fmt_operator, simulate_measurements, Field, OpticalCoefficients, SourceDetectorLayout,
};
pub use grid::Grid3;
pub use noise::{add_noise, NoisyMeasurement};
pub use phantom::{generate_phantom, random_inclusions, Ellipsoid, PhantomSpec};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// A real linear map `R^N -> R^M` with its adjoint.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64>;
}

/// Dense `M x N` operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrixOperator {
    matrix: DMatrix<f64>,
}

impl DenseMatrixOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("operator has non-finite entries"));
        }
        Ok(Self { matrix })
    }

    pub fn from_row_slice(nrows: usize, ncols: usize, data: &[f64]) -> Result<Self> {
        check_len("row-major data", nrows * ncols, data.len())?;
        Self::new(DMatrix::from_row_slice(nrows, ncols, data))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn scale(&mut self, factor: f64) {
        self.matrix *= factor;
    }
}

impl LinearOperator for DenseMatrixOperator {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(y)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).apply(x)
    }
    fn apply_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        (**self).apply_adjoint(y)
    }
}
