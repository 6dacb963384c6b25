//! The run configuration file and the densities it can describe.

use std::path::{Path, PathBuf};

use dbar_core::assembly::nu_default;
use dbar_core::cauchy::{Density, GridField};
use dbar_core::geometry::rho;
use dbar_core::io;
use dbar_core::region::RegionSpec;
use dbar_core::sequence::FiniteSequence;
use dbar_core::small_width::PipelineConfig;
use dbar_core::verify::VerifyConfig;
use dbar_core::{Complex64, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DensitySpec {
    Zero,
    /// `value` on all of `K`.
    Constant { value: Vec<[f64; 2]> },
    /// `value` times `exp(1 - 1/(1 - t^2))`, `t = rho(z, a) / r`, summed over
    /// the anchor disks of `K`; smooth with support in `K`.
    Bump { value: Vec<[f64; 2]> },
    /// A grid field file, read with nearest-node lookup.
    Grid { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    /// Polar sample of the disk: rings up to `r_max`.
    pub rings: usize,
    pub per_ring: usize,
    pub r_max: f64,
    /// Extra samples inside `K`, per anchor disk.
    pub region_rings: usize,
    pub region_per_ring: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { rings: 16, per_ring: 32, r_max: 0.99, region_rings: 6, region_per_ring: 18 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualSpec {
    /// Bump radii as multiples of the Euclidean radius of the first anchor disk.
    pub bump_scales: Vec<f64>,
    /// Radial and angular nodes of the residual quadrature.
    pub nodes: usize,
}

impl Default for ResidualSpec {
    fn default() -> Self {
        ResidualSpec { bump_scales: vec![0.5, 1.5, 4.0], nodes: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    /// `K` as a union of anchor disks.
    pub region: RegionSpec,
    /// The chain `zeta`; the anchors of `K` when absent.
    pub chain: Option<FiniteSequence>,
    /// Chain parameter: `K` is covered by `D(zeta_j, eps)` and `zeta` is
    /// `eps`-separated.
    pub eps: f64,
    /// Refinement parameter; `2 - sqrt 3` when absent.
    pub nu: Option<f64>,
    /// Components of the values of `f`.
    pub dim: usize,
    pub density: DensitySpec,
    pub samples: SampleSpec,
    pub residual: ResidualSpec,
    pub seed: u64,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let anchors = FiniteSequence::from_complex(&[Complex64::new(0.9, 0.0), Complex64::new(-0.9, 0.0)])
            .expect("default anchors are valid");
        RunConfig {
            pipeline: PipelineConfig::default(),
            region: RegionSpec::uniform(anchors, 4e-4).expect("default region is valid"),
            chain: None,
            eps: 4e-4,
            nu: None,
            dim: 1,
            density: DensitySpec::Bump { value: vec![[1.0, 0.0]] },
            samples: SampleSpec::default(),
            residual: ResidualSpec::default(),
            seed: 0,
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.dim == 0 {
            return Err(Error::invalid("dim must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid(format!("eps = {} outside (0, 1)", self.eps)));
        }
        if !(self.pipeline.tol > 0.0 && self.pipeline.branch_tol > 0.0 && self.verify.tolerance_scale > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if let DensitySpec::Constant { value } | DensitySpec::Bump { value } = &self.density {
            if value.len() != self.dim {
                return Err(Error::invalid(format!("density value has {} components, dim is {}", value.len(), self.dim)));
            }
        }
        Ok(())
    }

    pub fn chain(&self) -> FiniteSequence {
        self.chain.clone().unwrap_or_else(|| self.region.anchors.clone())
    }

    pub fn nu(&self) -> f64 {
        self.nu.unwrap_or_else(nu_default)
    }

    /// The density; `base` resolves relative grid paths.
    pub fn density(&self, base: &Path) -> Result<Box<dyn Density>> {
        let disks = self.region.disks();
        let dim = self.dim;
        let values = |v: &[[f64; 2]]| v.iter().map(|p| Complex64::new(p[0], p[1])).collect::<Vec<_>>();
        Ok(match &self.density {
            DensitySpec::Zero => Box::new(Closure { dim, f: Box::new(move |_| vec![Complex64::new(0.0, 0.0); dim]) }),
            DensitySpec::Constant { value } => {
                let v = values(value);
                Box::new(Closure { dim, f: Box::new(move |z| if disks.contains(z) { v.clone() } else { vec![Complex64::new(0.0, 0.0); v.len()] }) })
            }
            DensitySpec::Bump { value } => {
                let v = values(value);
                Box::new(Closure {
                    dim,
                    f: Box::new(move |z| {
                        let s: f64 = disks.disks().iter().map(|&(a, r)| plateau(rho(z, a) / r)).sum();
                        v.iter().map(|c| c * s).collect()
                    }),
                })
            }
            DensitySpec::Grid { path } => {
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                let field: GridField = io::read_grid_field(&path)?;
                if field.dim() != dim {
                    return Err(Error::invalid(format!("grid field has dim {}, config dim is {dim}", field.dim())));
                }
                Box::new(field)
            }
        })
    }
}

fn plateau(t: f64) -> f64 {
    if t < 1.0 {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

type ValueFn = Box<dyn Fn(Complex64) -> Vec<Complex64> + Sync>;

struct Closure {
    dim: usize,
    f: ValueFn,
}

impl Density for Closure {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: Complex64) -> Vec<Complex64> {
        (self.f)(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        // Missing fields take their defaults.
        let partial: RunConfig = serde_json::from_str(r#"{"eps": 0.001}"#).unwrap();
        assert_eq!(partial.eps, 0.001);
        assert_eq!(partial.pipeline, PipelineConfig::default());
    }

    #[test]
    fn densities() {
        let cfg = RunConfig { density: DensitySpec::Constant { value: vec![[2.0, 1.0]] }, ..Default::default() };
        let f = cfg.density(Path::new(".")).unwrap();
        assert_eq!(f.eval(Complex64::new(0.9, 0.0)), vec![Complex64::new(2.0, 1.0)]);
        assert_eq!(f.eval(Complex64::new(0.0, 0.0)), vec![Complex64::new(0.0, 0.0)]);
        let bad = RunConfig { dim: 2, ..cfg };
        assert!(bad.validate().is_err());
    }
}
