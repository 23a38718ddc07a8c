//! Shared fixtures for the criterion benches.

use wbipm_core::{Problem, ProblemConfig, Result, WarmBasis, WarmBasisMode, WarmBasisSpec};

/// The default desk problem with a 20 degree synthetic prior.
pub fn desk() -> Result<(Problem, WarmBasis)> {
    let p = Problem::generate(&ProblemConfig::default())?;
    let spec = WarmBasisSpec {
        mode: WarmBasisMode::Angle(20.0),
        seed: 0,
    };
    let v = spec.resolve(Some(&p.x_star), p.x_star.len())?;
    let wb = WarmBasis::new(&p.operator, &v)?;
    Ok((p, wb))
}
