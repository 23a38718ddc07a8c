//! Noise level x warm-basis angle x method x seed sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use wbipm_core::warmbasis::WarmBasisMode;
use wbipm_core::{ConfigMap, Error, Problem, ProblemConfig, Result, SolveConfig, WarmBasisSpec};

use crate::record::{Method, RunRecord};
use crate::solve::{execute, Instance, SolveOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sigmas: Vec<f64>,
    /// Warm-basis angles in degrees; ignored by `fhybr` cells.
    pub angles: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            sigmas: vec![0.05, 0.10, 0.15, 0.20],
            angles: vec![20.0],
            methods: vec![Method::Wbipm, Method::Fhybr],
            seeds: (0..10).collect(),
        }
    }
}

impl SweepSpec {
    /// Reads `sweep.sigmas`, `sweep.angles`, `sweep.methods` and
    /// `sweep.seeds` (a count; seeds are `0..count`).
    pub fn take_from(map: &mut ConfigMap) -> Result<Self> {
        let d = SweepSpec::default();
        let spec = SweepSpec {
            sigmas: map.take_list("sweep.sigmas")?.unwrap_or(d.sigmas),
            angles: map.take_list("sweep.angles")?.unwrap_or(d.angles),
            methods: map.take_list("sweep.methods")?.unwrap_or(d.methods),
            seeds: match map.take::<u64>("sweep.seeds")? {
                Some(n) => (0..n).collect(),
                None => d.seeds,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.angles.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::Validation("every sweep axis needs at least one value".into()));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Validation("sweep.sigmas must be finite and >= 0".into()));
        }
        if self.angles.iter().any(|a| !(0.0..=90.0).contains(a)) {
            return Err(Error::Validation("sweep.angles must lie in [0, 90]".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &sigma in &self.sigmas {
            for &angle in &self.angles {
                for &method in &self.methods {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            index: out.len(),
                            sigma,
                            angle,
                            method,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub sigma: f64,
    pub angle: f64,
    pub method: Method,
    /// Drives the noise draw (offset from the base noise seed) and the
    /// warm-basis direction.
    pub seed: u64,
}

impl Cell {
    pub fn problem_config(&self, base: &ProblemConfig) -> ProblemConfig {
        ProblemConfig {
            sigma: self.sigma,
            noise_seed: base.noise_seed.wrapping_add(self.seed),
            ..base.clone()
        }
    }

    pub fn warm_basis(&self) -> WarmBasisSpec {
        WarmBasisSpec {
            mode: WarmBasisMode::Angle(self.angle),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: Cell,
    pub outcome: std::result::Result<RunRecord, String>,
}

/// Run every cell concurrently on the shared base operator. Failures are
/// kept per cell.
pub fn run_sweep(base: &Problem, spec: &SweepSpec, solver: &SolveConfig) -> Result<Vec<CellOutcome>> {
    spec.validate()?;
    solver.validate()?;
    Ok(spec
        .cells()
        .into_par_iter()
        .map(|cell| {
            let outcome = run_cell(base, &cell, solver).map_err(|e| e.to_string());
            if let Err(msg) = &outcome {
                log::warn!("cell {} failed: {msg}", cell.index);
            }
            CellOutcome { cell, outcome }
        })
        .collect())
}

fn run_cell(base: &Problem, cell: &Cell, solver: &SolveConfig) -> Result<RunRecord> {
    let cfg = cell.problem_config(&base.config);
    let data = base.noisy_data(cfg.sigma, cfg.noise_seed)?;
    let inst = Instance {
        config: &cfg,
        operator: &base.operator,
        x_star: &base.x_star,
        b: &data.b,
    };
    let wb = cell.warm_basis();
    let (rec, _) = execute(inst, cell.method, Some(&wb), solver, SolveOptions::default())?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sigma: f64,
    pub angle: f64,
    pub method: String,
    pub runs: usize,
    pub failures: usize,
    /// Mean final relative error over successful cells.
    pub mean_relative_error: Option<f64>,
}

/// One row per (sigma, angle, method), in cell order.
pub fn aggregate(outcomes: &[CellOutcome]) -> Vec<AggregateRow> {
    let mut rows: Vec<(AggregateRow, Vec<f64>)> = Vec::new();
    for o in outcomes {
        let c = &o.cell;
        let pos = rows
            .iter()
            .position(|(r, _)| r.sigma == c.sigma && r.angle == c.angle && r.method == c.method.name());
        let idx = match pos {
            Some(i) => i,
            None => {
                rows.push((
                    AggregateRow {
                        sigma: c.sigma,
                        angle: c.angle,
                        method: c.method.name().to_string(),
                        runs: 0,
                        failures: 0,
                        mean_relative_error: None,
                    },
                    Vec::new(),
                ));
                rows.len() - 1
            }
        };
        let (row, errs) = &mut rows[idx];
        row.runs += 1;
        match o.outcome.as_ref().ok().and_then(|r| r.final_relative_error()) {
            Some(e) => errs.push(e),
            None => row.failures += 1,
        }
    }
    rows.into_iter()
        .map(|(mut r, errs)| {
            if !errs.is_empty() {
                r.mean_relative_error = Some(errs.iter().sum::<f64>() / errs.len() as f64);
            }
            r
        })
        .collect()
}
