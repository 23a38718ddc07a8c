//! Comparison of run records against a ground truth.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use wbipm_core::analysis::{default_sections, rmse_by_zsection};
use wbipm_core::{Error, Result};

use crate::record::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub record: usize,
    pub method: String,
    pub k: usize,
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub record: usize,
    pub method: String,
    pub k_requested: usize,
    pub k_used: usize,
    /// True when the run stopped before `k_requested`.
    pub clipped: bool,
    /// `"overall"` or the band as `lo-hi` in mm.
    pub section: String,
    pub baseline_rmse: f64,
    pub candidate_rmse: f64,
    pub improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fingerprint: String,
    /// `"record 0"` or `"zero"` when a single record is evaluated.
    pub baseline: String,
    pub series: Vec<SeriesRow>,
    pub rmse: Vec<RmseRow>,
    pub warnings: Vec<String>,
}

/// Iterate of `rec` at `k`, or its final iterate if the run stopped earlier.
fn iterate_at(rec: &RunRecord, k: usize) -> Result<(usize, bool, DVector<f64>)> {
    let last = rec
        .last_snapshot()
        .ok_or_else(|| Error::Validation("record holds no iterates".into()))?;
    if k >= last.k {
        return Ok((last.k, k > last.k, DVector::from_column_slice(&last.x)));
    }
    match rec.snapshot_at(k) {
        Some(s) if s.k == k => Ok((k, false, DVector::from_column_slice(&s.x))),
        _ => Err(Error::Validation(format!("record has no iterate stored at k = {k}"))),
    }
}

/// Relative-error series of every record and RMSE-by-depth tables at each
/// `k`. The first record is the baseline; a lone record is compared with
/// the zero reconstruction.
pub fn evaluate(records: &[RunRecord], x_star: &DVector<f64>, ks: &[usize]) -> Result<Evaluation> {
    let first = records
        .first()
        .ok_or_else(|| Error::Validation("nothing to evaluate".into()))?;
    for (i, r) in records.iter().enumerate() {
        if r.fingerprint != first.fingerprint {
            return Err(Error::Validation(format!(
                "record {i} was produced on a different bundle than record 0"
            )));
        }
    }
    if x_star.len() != first.cols {
        return Err(Error::DimensionMismatch {
            what: "ground truth",
            expected: first.cols,
            found: x_star.len(),
        });
    }
    let grid = first.problem.grid;
    let sections = default_sections(&grid);

    let series = records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            r.history.iter().map(move |h| SeriesRow {
                record: i,
                method: r.method.name().to_string(),
                k: h.k,
                relative_error: h.relative_error,
            })
        })
        .collect();

    let lone = records.len() == 1;
    let mut rmse = Vec::new();
    let mut warnings = Vec::new();
    for &k in ks {
        let (bk, _, base) = if lone {
            (k, false, DVector::zeros(first.cols))
        } else {
            iterate_at(first, k)?
        };
        let candidates = if lone { records } else { &records[1..] };
        let offset = if lone { 0 } else { 1 };
        for (j, rec) in candidates.iter().enumerate() {
            let (used, clipped, x) = iterate_at(rec, k)?;
            if clipped {
                warnings.push(format!(
                    "record {}: k = {k} beyond its {} iterations, using the final iterate",
                    j + offset,
                    used
                ));
            }
            let table = rmse_by_zsection(&x, &base, x_star, &grid, &sections)?;
            let rows = table.rows.iter().map(|r| (format!("{}-{}", r.lo, r.hi), r));
            for (section, r) in rows.chain(std::iter::once(("overall".to_string(), &table.overall))) {
                rmse.push(RmseRow {
                    record: j + offset,
                    method: rec.method.name().to_string(),
                    k_requested: k,
                    k_used: used,
                    clipped,
                    section,
                    baseline_rmse: r.baseline_rmse,
                    candidate_rmse: r.candidate_rmse,
                    improvement_pct: r.improvement_pct,
                });
            }
        }
        if !lone && bk < k {
            warnings.push(format!("baseline: k = {k} beyond its {bk} iterations, using the final iterate"));
        }
    }
    Ok(Evaluation {
        fingerprint: first.fingerprint.clone(),
        baseline: if lone { "zero".into() } else { "record 0".into() },
        series,
        rmse,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{Method, StoredSnapshot};
    use crate::solve::{execute, Instance, SolveOptions};
    use wbipm_core::operator::{Ellipsoid, PhantomSpec};
    use wbipm_core::{Grid3, Problem, ProblemConfig, SolveConfig};

    fn record() -> (Problem, RunRecord) {
        let cfg = ProblemConfig {
            grid: Grid3::new(6, 6, 4, 2.0, 2.0, 2.0).unwrap(),
            sources: [2, 2],
            detectors: [3, 3],
            phantom: PhantomSpec::Explicit(vec![Ellipsoid {
                center: [5.0, 5.0, 3.0],
                semi_axes: [2.0, 2.0, 2.0],
                amplitude: 1.0,
            }]),
            ..ProblemConfig::default()
        };
        let p = Problem::generate(&cfg).unwrap();
        let mut s = SolveConfig::default();
        s.mm.max_outer = 25;
        let (rec, _) = execute(Instance::of(&p), Method::Fhybr, None, &s, SolveOptions::default()).unwrap();
        (p, rec)
    }

    #[test]
    fn perfect_reconstruction_is_full_improvement() {
        let (p, mut rec) = record();
        for s in &mut rec.snapshots {
            s.x = p.x_star.as_slice().to_vec();
        }
        let ev = evaluate(&[rec], &p.x_star, &[20]).unwrap();
        assert_eq!(ev.baseline, "zero");
        for row in &ev.rmse {
            assert_eq!(row.candidate_rmse, 0.0);
            if row.baseline_rmse > 0.0 {
                assert_eq!(row.improvement_pct, Some(100.0));
            }
        }
        assert!(ev.rmse.iter().any(|r| r.section == "overall" && r.improvement_pct == Some(100.0)));
    }

    #[test]
    fn identical_records_show_no_improvement() {
        let (p, rec) = record();
        let ev = evaluate(&[rec.clone(), rec], &p.x_star, &[20]).unwrap();
        assert!(!ev.rmse.is_empty());
        for row in &ev.rmse {
            assert_eq!(row.baseline_rmse, row.candidate_rmse);
            assert!(row.improvement_pct.is_none_or(|v| v == 0.0));
        }
        assert_eq!(ev.series.len(), 2 * 25);
    }

    #[test]
    fn k_beyond_history_is_clipped_with_warning() {
        let (p, rec) = record();
        let ev = evaluate(&[rec.clone(), rec], &p.x_star, &[20, 50, 120]).unwrap();
        let clipped: Vec<_> = ev.rmse.iter().filter(|r| r.clipped).collect();
        assert!(!clipped.is_empty());
        assert!(clipped.iter().all(|r| r.k_used == 25 && r.k_requested > 25));
        assert!(!ev.warnings.is_empty());
        assert!(ev.rmse.iter().any(|r| r.k_requested == 20 && !r.clipped && r.k_used == 20));
    }

    #[test]
    fn mismatched_bundles_and_missing_iterates_are_rejected() {
        let (p, rec) = record();
        let mut other = rec.clone();
        other.fingerprint = "0".repeat(64);
        assert!(evaluate(&[rec.clone(), other], &p.x_star, &[20]).unwrap_err().is_validation());
        assert!(evaluate(std::slice::from_ref(&rec), &DVector::zeros(3), &[20]).is_err());
        let mut sparse = rec;
        sparse.snapshots = vec![StoredSnapshot {
            k: 25,
            x: p.x_star.as_slice().to_vec(),
        }];
        assert!(evaluate(&[sparse], &p.x_star, &[10]).is_err());
    }
}
