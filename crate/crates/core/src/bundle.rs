//! Synthetic problem generation and on-disk problem bundles.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::ConfigMap;
use crate::error::{check_len, Error, Result};
use crate::mm;
use crate::operator::{
    add_noise, assemble_fmt_operator, generate_phantom, DenseMatrixOperator, Ellipsoid, Grid3, LinearOperator,
    NoisyMeasurement, OpticalCoefficients, PhantomSpec, SourceDetectorLayout,
};

/// Rescaling applied to the assembled operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the largest entry so `max |A_ij| = 1`.
    Max,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub seed: u64,
    pub grid: Grid3,
    pub sources: [usize; 2],
    pub detectors: [usize; 2],
    pub optics: OpticalCoefficients,
    pub phantom: PhantomSpec,
    pub sigma: f64,
    pub noise_seed: u64,
    pub normalize: Normalization,
}

impl Default for ProblemConfig {
    /// 16 x 16 x 8 nodes over a 54 x 54 x 14 mm slab, 3 x 3 sources,
    /// 8 x 8 detectors, 10% noise.
    fn default() -> Self {
        Self {
            seed: 7,
            grid: Grid3 {
                nx: 16,
                ny: 16,
                nz: 8,
                hx: 3.6,
                hy: 3.6,
                hz: 2.0,
            },
            sources: [3, 3],
            detectors: [8, 8],
            optics: OpticalCoefficients::default(),
            phantom: PhantomSpec::Random { count: 2 },
            sigma: 0.10,
            noise_seed: 7,
            normalize: Normalization::Max,
        }
    }
}

impl ProblemConfig {
    /// Read problem keys from `map`, consuming them. Missing keys keep
    /// their defaults.
    pub fn take_from(map: &mut ConfigMap) -> Result<Self> {
        let d = ProblemConfig::default();
        let seed = map.take_or("seed", d.seed)?;
        let grid = Grid3 {
            nx: map.take_or("grid.nx", d.grid.nx)?,
            ny: map.take_or("grid.ny", d.grid.ny)?,
            nz: map.take_or("grid.nz", d.grid.nz)?,
            hx: map.take_or("grid.hx", d.grid.hx)?,
            hy: map.take_or("grid.hy", d.grid.hy)?,
            hz: map.take_or("grid.hz", d.grid.hz)?,
        };
        let sources = [
            map.take_or("sources.nx", d.sources[0])?,
            map.take_or("sources.ny", d.sources[1])?,
        ];
        let detectors = [
            map.take_or("detectors.nx", d.detectors[0])?,
            map.take_or("detectors.ny", d.detectors[1])?,
        ];
        let o = OpticalCoefficients::default();
        let field = |map: &mut ConfigMap, key: &str, dflt: &crate::operator::Field| -> Result<crate::operator::Field> {
            Ok(match map.take::<f64>(key)? {
                Some(v) => v.into(),
                None => dflt.clone(),
            })
        };
        let optics = OpticalCoefficients {
            mu_a_ex: field(map, "optics.mu_a_ex", &o.mu_a_ex)?,
            mu_a_em: field(map, "optics.mu_a_em", &o.mu_a_em)?,
            kappa_ex: field(map, "optics.kappa_ex", &o.kappa_ex)?,
            kappa_em: field(map, "optics.kappa_em", &o.kappa_em)?,
            eta: map.take_or("optics.eta", o.eta)?,
            robin_ex: map.take_or("optics.robin_ex", o.robin_ex)?,
            robin_em: map.take_or("optics.robin_em", o.robin_em)?,
        };
        let explicit = map.take_all("phantom.inclusion");
        let count = map.take::<usize>("phantom.count")?;
        let phantom = if explicit.is_empty() {
            PhantomSpec::Random {
                count: count.unwrap_or(2),
            }
        } else {
            if count.is_some() {
                return Err(Error::validation("give either phantom.count or phantom.inclusion, not both"));
            }
            let list = explicit
                .iter()
                .map(|e| {
                    let v: Vec<f64> = crate::config::split_list(&e.value)
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Parse {
                            path: e.path.clone(),
                            line: e.line,
                            msg: "phantom.inclusion: expected numbers".into(),
                        })?;
                    if v.len() != 7 {
                        return Err(Error::Parse {
                            path: e.path.clone(),
                            line: e.line,
                            msg: "phantom.inclusion needs `cx cy cz ax ay az amplitude`".into(),
                        });
                    }
                    Ok(Ellipsoid {
                        center: [v[0], v[1], v[2]],
                        semi_axes: [v[3], v[4], v[5]],
                        amplitude: v[6],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            PhantomSpec::Explicit(list)
        };
        let sigma = map.take_or("noise.sigma", d.sigma)?;
        let noise_seed = map.take_or("noise.seed", seed)?;
        let normalize = match map.take_str("normalize") {
            None => d.normalize,
            Some(e) => match e.value.as_str() {
                "max" => Normalization::Max,
                "none" => Normalization::None,
                other => {
                    return Err(Error::Parse {
                        path: e.path,
                        line: e.line,
                        msg: format!("normalize must be `max` or `none`, got {other:?}"),
                    })
                }
            },
        };
        let cfg = ProblemConfig {
            seed,
            grid,
            sources,
            detectors,
            optics,
            phantom,
            sigma,
            noise_seed,
            normalize,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.sources.contains(&0) || self.detectors.contains(&0) {
            return Err(Error::validation("source and detector counts must be >= 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::validation("noise.sigma must be >= 0"));
        }
        Ok(())
    }

    pub fn layout(&self) -> SourceDetectorLayout {
        SourceDetectorLayout::regular(
            &self.grid,
            (self.sources[0], self.sources[1]),
            (self.detectors[0], self.detectors[1]),
        )
    }
}

/// Everything a solve needs, plus the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub config: ProblemConfig,
    pub layout: SourceDetectorLayout,
    pub operator: DenseMatrixOperator,
    /// Factor applied to the assembled operator.
    pub scale: f64,
    pub x_star: DVector<f64>,
    pub b_clean: DVector<f64>,
    pub b: DVector<f64>,
    pub noise: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleMeta {
    config: ProblemConfig,
    layout: SourceDetectorLayout,
    scale: f64,
    rows: usize,
    cols: usize,
}

pub const BUNDLE_FILES: [&str; 6] = ["problem.json", "A.mtx", "x_star.mtx", "b_clean.mtx", "b.mtx", "noise.mtx"];

impl Problem {
    pub fn generate(cfg: &ProblemConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = cfg.layout();
        let mut operator = assemble_fmt_operator(&cfg.grid, &cfg.optics, &layout)?;
        let scale = match cfg.normalize {
            Normalization::Max => {
                let m = operator.matrix().amax();
                if m == 0.0 {
                    return Err(Error::Singular("assembled operator is zero".into()));
                }
                1.0 / m
            }
            Normalization::None => 1.0,
        };
        if scale != 1.0 {
            operator.scale(scale);
        }
        let x_star = generate_phantom(&cfg.grid, &cfg.phantom, cfg.seed)?;
        let b_clean = operator.apply(&x_star);
        let NoisyMeasurement { b, noise } = add_noise(&b_clean, cfg.sigma, cfg.noise_seed)?;
        Ok(Self {
            config: cfg.clone(),
            layout,
            operator,
            scale,
            x_star,
            b_clean,
            b,
            noise,
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.config.grid
    }

    /// Fresh noisy data for the same phantom.
    pub fn noisy_data(&self, sigma: f64, seed: u64) -> Result<NoisyMeasurement> {
        add_noise(&self.b_clean, sigma, seed)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = BundleMeta {
            config: self.config.clone(),
            layout: self.layout.clone(),
            scale: self.scale,
            rows: self.operator.nrows(),
            cols: self.operator.ncols(),
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::validation(e.to_string()))?;
        let p = dir.join("problem.json");
        fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
        mm::write_matrix(&dir.join("A.mtx"), self.operator.matrix())?;
        mm::write_vector(&dir.join("x_star.mtx"), &self.x_star)?;
        mm::write_vector(&dir.join("b_clean.mtx"), &self.b_clean)?;
        mm::write_vector(&dir.join("b.mtx"), &self.b)?;
        mm::write_vector(&dir.join("noise.mtx"), &self.noise)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join("problem.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: p.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let operator = DenseMatrixOperator::new(mm::read_matrix(&dir.join("A.mtx"))?)?;
        check_len("operator rows", meta.rows, operator.nrows())?;
        check_len("operator columns", meta.cols, operator.ncols())?;
        check_len("operator columns vs grid", meta.config.grid.len(), operator.ncols())?;
        let x_star = mm::read_vector(&dir.join("x_star.mtx"))?;
        let b_clean = mm::read_vector(&dir.join("b_clean.mtx"))?;
        let b = mm::read_vector(&dir.join("b.mtx"))?;
        let noise = mm::read_vector(&dir.join("noise.mtx"))?;
        check_len("x_star", meta.cols, x_star.len())?;
        check_len("b_clean", meta.rows, b_clean.len())?;
        check_len("b", meta.rows, b.len())?;
        check_len("noise", meta.rows, noise.len())?;
        Ok(Self {
            config: meta.config,
            layout: meta.layout,
            operator,
            scale: meta.scale,
            x_star,
            b_clean,
            b,
            noise,
        })
    }
}
