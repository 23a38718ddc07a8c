use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMeasurement {
    pub b: DVector<f64>,
    pub noise: DVector<f64>,
}

/// Gaussian noise rescaled so that `||noise|| = sigma * ||b_clean||` exactly.
pub fn add_noise(b_clean: &DVector<f64>, sigma: f64, seed: u64) -> Result<NoisyMeasurement> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::validation(format!("noise level must be >= 0, got {sigma}")));
    }
    let m = b_clean.len();
    if sigma == 0.0 {
        return Ok(NoisyMeasurement {
            b: b_clean.clone(),
            noise: DVector::zeros(m),
        });
    }
    let scale = b_clean.norm();
    if scale == 0.0 {
        return Err(Error::validation(
            "noise level is undefined for an all-zero measurement",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    let noise = raw.scale(sigma * scale / raw.norm());
    Ok(NoisyMeasurement {
        b: b_clean + &noise,
        noise,
    })
}
