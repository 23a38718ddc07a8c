//! Warm-basis iterative projection for l1-regularized linear inverse
//! problems.
//!
//! The solver splits the unknown into a component along a supplied warm
//! basis vector and a complement, deflates the operator against the warm
//! basis, and runs an augmented flexible Golub-Kahan recursion with an
//! iteratively reweighted (majorization-minimization) penalty on the
//! complement. [`wbipm_solve`] is the entry point; [`fhybr_solve`] is the
//! same machinery without a warm basis.

pub mod analysis;
pub mod bundle;
pub mod config;
pub mod error;
pub mod gk;
pub mod linalg;
pub mod mm;
pub mod operator;
pub mod reg;
pub mod warmbasis;
pub mod wbipm;

pub use analysis::{
    angle_loss, distance_loss, relative_error, rmse_by_zsection, theorem_bound, BoundReport, ZSection,
    ZSectionTable,
};
pub use bundle::{Normalization, Problem, ProblemConfig};
pub use config::ConfigMap;
pub use error::{Error, Result};
pub use gk::{AfgkState, Breakdown, DeflatedSystem};
pub use operator::{DenseMatrixOperator, Grid3, LinearOperator};
pub use reg::{MmConfig, ParamRule, Preconditioner};
pub use warmbasis::{WarmBasisMode, WarmBasisSpec};
pub use wbipm::{
    fhybr_solve, warmstart_solve, wbipm_solve, IterationRecord, PreconditionerPolicy, SolveConfig, SolveResult,
    StopReason, WarmBasis,
};
