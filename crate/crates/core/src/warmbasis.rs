//! Warm-basis vectors: angle-controlled synthetic priors and file-loaded
//! predictions. Every output is normalized to unit length.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmBasisMode {
    /// `x* / ||x*||`.
    Exact,
    /// At a fixed angle (degrees) to `x*`.
    Angle(f64),
    File(PathBuf),
    /// A seeded random direction.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmBasisSpec {
    pub mode: WarmBasisMode,
    pub seed: u64,
}

impl WarmBasisSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.mode {
            WarmBasisMode::Angle(t) if !(0.0..=90.0).contains(t) => Err(Error::validation(format!(
                "warm-basis angle must lie in [0, 90] degrees, got {t}"
            ))),
            WarmBasisMode::File(p) if !p.is_file() => Err(Error::validation(format!(
                "warm-basis file {} does not exist",
                p.display()
            ))),
            _ => Ok(()),
        }
    }

    /// Produce the unit warm-basis vector of length `n`. Exact and angle
    /// modes need the reference solution.
    pub fn resolve(&self, x_star: Option<&DVector<f64>>, n: usize) -> Result<DVector<f64>> {
        self.validate()?;
        let need_truth = || x_star.ok_or_else(|| Error::validation("this warm-basis mode needs a ground truth"));
        let v = match &self.mode {
            WarmBasisMode::Exact => synthetic_warm_basis(need_truth()?, 0.0, self.seed)?,
            WarmBasisMode::Angle(t) => synthetic_warm_basis(need_truth()?, *t, self.seed)?,
            WarmBasisMode::File(p) => load_warm_basis(p, n)?,
            WarmBasisMode::Random => {
                let v = gaussian(n, self.seed);
                let nv = v.norm();
                if nv == 0.0 {
                    return Err(Error::ZeroVector("random warm basis"));
                }
                v / nv
            }
        };
        check_len("warm basis", n, v.len())?;
        Ok(v)
    }
}

/// Parses `exact`, `random`, `angle:<deg>` and `file:<path>`.
impl FromStr for WarmBasisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "exact" => return Ok(WarmBasisMode::Exact),
            "random" => return Ok(WarmBasisMode::Random),
            _ => {}
        }
        if let Some(t) = s.strip_prefix("angle:") {
            let deg: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::validation(format!("bad warm-basis angle {t:?}")))?;
            return Ok(WarmBasisMode::Angle(deg));
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(WarmBasisMode::File(PathBuf::from(p.trim())));
        }
        Err(Error::validation(format!(
            "unknown warm-basis mode {s:?} (expected exact, random, angle:<deg> or file:<path>)"
        )))
    }
}

impl fmt::Display for WarmBasisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WarmBasisMode::Exact => write!(f, "exact"),
            WarmBasisMode::Angle(t) => write!(f, "angle:{t}"),
            WarmBasisMode::File(p) => write!(f, "file:{}", p.display()),
            WarmBasisMode::Random => write!(f, "random"),
        }
    }
}

fn gaussian(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
}

/// `cos θ x*/||x*|| + sin θ w` with `w` a seeded random unit vector
/// orthogonal to `x*`.
pub fn synthetic_warm_basis(x_star: &DVector<f64>, theta_deg: f64, seed: u64) -> Result<DVector<f64>> {
    if !(0.0..=90.0).contains(&theta_deg) {
        return Err(Error::validation(format!(
            "warm-basis angle must lie in [0, 90] degrees, got {theta_deg}"
        )));
    }
    let nx = x_star.norm();
    if nx == 0.0 {
        return Err(Error::ZeroVector("reference solution"));
    }
    let u = x_star / nx;
    if theta_deg == 0.0 {
        return Ok(u);
    }
    if x_star.len() < 2 {
        return Err(Error::validation("no direction orthogonal to a 1-element vector"));
    }
    let mut w = gaussian(x_star.len(), seed);
    for _ in 0..2 {
        let p = u.dot(&w);
        w.axpy(-p, &u, 1.0);
    }
    let nw = w.norm();
    if nw == 0.0 {
        return Err(Error::ZeroVector("orthogonal direction"));
    }
    w /= nw;
    let t = theta_deg.to_radians();
    let v = u * t.cos() + w * t.sin();
    let nv = v.norm();
    Ok(v / nv)
}

/// Read a Matrix Market vector and normalize it.
pub fn load_warm_basis(path: &Path, n: usize) -> Result<DVector<f64>> {
    let v = mm::read_vector(path)?;
    check_len("warm-basis file", n, v.len())?;
    let nv = v.norm();
    if nv == 0.0 {
        return Err(Error::ZeroVector("warm-basis file"));
    }
    Ok(v / nv)
}

pub fn save_warm_basis(path: &Path, v: &DVector<f64>) -> Result<()> {
    mm::write_vector(path, v)
}
