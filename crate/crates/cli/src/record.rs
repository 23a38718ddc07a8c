//! Run records: everything needed to reproduce and compare a solve.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wbipm_core::analysis::ZSectionTable;
use wbipm_core::{BoundReport, Error, IterationRecord, ProblemConfig, Result, SolveConfig, StopReason, WarmBasisSpec};

pub const TOOL: &str = concat!("wbipm ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wbipm,
    Fhybr,
    Warmstart,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Wbipm => "wbipm",
            Method::Fhybr => "fhybr",
            Method::Warmstart => "warmstart",
        }
    }

    pub fn needs_warm_basis(self) -> bool {
        !matches!(self, Method::Fhybr)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "wbipm" => Ok(Method::Wbipm),
            "fhybr" => Ok(Method::Fhybr),
            "warmstart" => Ok(Method::Warmstart),
            other => Err(Error::Validation(format!(
                "unknown method {other:?} (expected wbipm, fhybr or warmstart)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSnapshot {
    pub k: usize,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionRmse {
    pub lo: f64,
    pub hi: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub iterations: usize,
    pub relative_error: Option<f64>,
    pub residual: f64,
    pub c: f64,
    /// `||A x̂||` of the warm basis.
    pub gamma: Option<f64>,
    pub rmse_by_section: Vec<SectionRmse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    /// Elapsed solve time at each history row.
    pub per_iteration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub method: Method,
    /// Regenerates `A`, `x*` and `b`.
    pub problem: ProblemConfig,
    /// SHA-256 of the operator and data the solve actually saw.
    pub fingerprint: String,
    pub solver: SolveConfig,
    pub warm_basis: Option<WarmBasisSpec>,
    pub warm_basis_sha256: Option<String>,
    pub rows: usize,
    pub cols: usize,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
    pub breakdown: Option<String>,
    pub metrics: FinalMetrics,
    pub bound: Option<BoundReport>,
    pub snapshots: Vec<StoredSnapshot>,
    pub timings: Timings,
}

impl RunRecord {
    /// Canonical serialization of the history, the unit of reproducibility.
    pub fn history_json(&self) -> String {
        serde_json::to_string(&self.history).expect("history serializes")
    }

    pub fn final_relative_error(&self) -> Option<f64> {
        self.metrics.relative_error
    }

    /// Snapshot at iteration `k`, else the last one before it.
    pub fn snapshot_at(&self, k: usize) -> Option<&StoredSnapshot> {
        self.snapshots.iter().filter(|s| s.k <= k).max_by_key(|s| s.k)
    }

    pub fn last_snapshot(&self) -> Option<&StoredSnapshot> {
        self.snapshots.iter().max_by_key(|s| s.k)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Validation(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }
}

pub fn section_rmse(table: &ZSectionTable) -> Vec<SectionRmse> {
    table
        .rows
        .iter()
        .map(|r| SectionRmse {
            lo: r.lo,
            hi: r.hi,
            rmse: r.candidate_rmse,
        })
        .collect()
}

/// SHA-256 over the shapes and little-endian values of `A` (column-major)
/// and `b`.
pub fn fingerprint(a: &DMatrix<f64>, b: &DVector<f64>) -> String {
    let mut h = Sha256::new();
    h.update((a.nrows() as u64).to_le_bytes());
    h.update((a.ncols() as u64).to_le_bytes());
    for v in a.iter() {
        h.update(v.to_le_bytes());
    }
    h.update((b.len() as u64).to_le_bytes());
    for v in b.iter() {
        h.update(v.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}
