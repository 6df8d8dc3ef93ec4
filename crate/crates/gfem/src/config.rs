//! Experiment configuration, read from TOML.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::BoundaryDistribution;
use crate::covering::DiskRegion;
use crate::error::{GfemError, Result};
use crate::geometry::{Domain, DomainSpec};
use crate::oracles::{neumann_solution, HarmonicSeries};

pub const DEFAULT_LADDER: [f64; 5] = [0.2, 0.14, 0.1, 0.07, 0.05];
pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_RATE_TOLERANCE: f64 = 0.25;
pub const DEFAULT_DUAL_DEGREE: usize = 10;

/// Modes kept in the Fourier expansion of `eˣ cos y` data.
const EXP_COS_MODES: usize = 26;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub pu: PuConfig,
    pub data: DataSpec,
    pub regions: RegionConfig,
    pub study: StudyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PuConfig {
    pub sigma: f64,
}

/// Neumann data `g`; arc positions are angles on the unit circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// `cos(nθ)`.
    Cosine { mode: usize },
    /// Trace of `∂_r(eˣ cos y)`.
    ExpCos,
    /// `δ_θ − 1/L`.
    Dirac { theta: f64 },
    /// `δ′_θ`.
    Dipole { theta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub center: [f64; 2],
    /// Radius of the disk whose admissible hull is the interior region `A`.
    pub inner_radius: f64,
    /// Radius of the disk whose admissible hull is the enclosing region `B`.
    pub outer_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub ladder: Vec<f64>,
    /// Local polynomial degree `m`.
    pub degree: usize,
    /// Regularity index of the data: `u ∈ H^{1−k}`.
    pub k: Option<u32>,
    /// Target interior rate.
    pub gamma: Option<u32>,
    pub rate_tolerance: f64,
    /// Tensor degree of the dual-norm test space.
    pub dual_degree: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::Disk { radius: 1.0, center: [0.0, 0.0] },
            pu: PuConfig::default(),
            data: DataSpec::Cosine { mode: 1 },
            regions: RegionConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

impl Default for PuConfig {
    fn default() -> Self {
        Self { sigma: DEFAULT_SIGMA }
    }
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { center: [0.0, 0.0], inner_radius: 0.5, outer_radius: 0.8 }
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            ladder: DEFAULT_LADDER.to_vec(),
            degree: 2,
            k: None,
            gamma: None,
            rate_tolerance: DEFAULT_RATE_TOLERANCE,
            dual_degree: DEFAULT_DUAL_DEGREE,
            seed: 20240607,
            output_dir: None,
        }
    }
}

impl DataSpec {
    /// Boundary distribution for a boundary of length `length`.
    pub fn distribution(&self, length: f64) -> BoundaryDistribution {
        let to_s = |theta: f64| theta.rem_euclid(2.0 * PI) * length / (2.0 * PI);
        match *self {
            DataSpec::Cosine { mode } => BoundaryDistribution::cosine(mode),
            DataSpec::ExpCos => {
                // ∂_r Re eᶻ = Σ_{n≥1} cos(nθ)/(n−1)!
                let mut cos = vec![0.0; EXP_COS_MODES + 1];
                let mut fact = 1.0;
                for (n, c) in cos.iter_mut().enumerate().skip(1) {
                    if n > 1 {
                        fact *= (n - 1) as f64;
                    }
                    *c = 1.0 / fact;
                }
                BoundaryDistribution { atoms: vec![], cos, sin: vec![] }
            }
            DataSpec::Dirac { theta } => BoundaryDistribution::dirac(to_s(theta), length),
            DataSpec::Dipole { theta } => BoundaryDistribution::dipole(to_s(theta)),
        }
    }

    /// Regularity index `k` with `u ∈ H^{1−k}` (0 for smooth data).
    pub fn regularity_index(&self) -> u32 {
        match self {
            DataSpec::Cosine { .. } | DataSpec::ExpCos => 0,
            DataSpec::Dirac { .. } => 1,
            DataSpec::Dipole { .. } => 2,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| GfemError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GfemError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        let l = &self.study.ladder;
        if l.is_empty() {
            return Err(GfemError::Config("h-ladder is empty".into()));
        }
        if l.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
            return Err(GfemError::Config("ladder entries must lie in (0, 1]".into()));
        }
        if l.windows(2).any(|w| w[1] >= w[0]) {
            return Err(GfemError::Config("h-ladder must be strictly decreasing".into()));
        }
        if !(self.pu.sigma > 0.0 && self.pu.sigma < 0.25) {
            return Err(GfemError::Config(format!("sigma must lie in (0, 0.25), got {}", self.pu.sigma)));
        }
        if self.study.degree == 0 || self.study.degree > 4 {
            return Err(GfemError::Config("local degree must lie in 1..=4".into()));
        }
        if let (Some(k), Some(g)) = (self.study.k, self.study.gamma) {
            if self.study.degree < (k + g + 1) as usize {
                return Err(GfemError::Config(format!(
                    "degree {} must be at least k + γ + 1 = {}",
                    self.study.degree,
                    k + g + 1
                )));
            }
        }
        let r = &self.regions;
        if !(r.inner_radius > 0.0 && r.outer_radius > 0.0) {
            return Err(GfemError::Config("region radii must be positive".into()));
        }
        Ok(())
    }

    pub fn build_domain(&self) -> Result<Domain> {
        self.domain.build()
    }

    pub fn inner_region(&self) -> DiskRegion {
        DiskRegion { center: self.regions.center, radius: self.regions.inner_radius }
    }

    pub fn outer_region(&self) -> DiskRegion {
        DiskRegion { center: self.regions.center, radius: self.regions.outer_radius }
    }

    /// Declared `k`, or the data's regularity index.
    pub fn k(&self) -> u32 {
        self.study.k.unwrap_or_else(|| self.data.regularity_index())
    }

    /// Exact solution when the domain is the unit disk.
    pub fn exact_solution(&self, domain: &Domain) -> Option<HarmonicSeries> {
        if !domain.is_unit_circle() {
            return None;
        }
        neumann_solution(&self.data.distribution(domain.length())).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ExpCos, Field};

    #[test]
    fn parses_sections() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [domain]
            kind = "disk"
            radius = 1.0
            center = [0.0, 0.0]
            [pu]
            sigma = 0.1
            [data]
            kind = "dirac"
            theta = 0.0
            [regions]
            inner_radius = 0.5
            [study]
            ladder = [0.2, 0.1]
            degree = 3
            k = 1
            gamma = 1
            "#,
        )
        .unwrap();
        assert_eq!(cfg.data, DataSpec::Dirac { theta: 0.0 });
        assert_eq!(cfg.study.degree, 3);
        assert_eq!(cfg.regions.outer_radius, 0.8);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml_str("[study]\nladder = [0.1, 0.2]").is_err());
        assert!(ExperimentConfig::from_toml_str("[study]\ndegree = 2\nk = 1\ngamma = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[pu]\nsigma = 0.1\nextra = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[regions]\ninner_radius = -0.5").is_err());
    }

    #[test]
    fn exp_cos_data_matches_field() {
        let cfg = ExperimentConfig { data: DataSpec::ExpCos, ..Default::default() };
        let d = cfg.build_domain().unwrap();
        let u = cfg.exact_solution(&d).unwrap();
        for x in [[0.3, -0.2], [0.7, 0.6]] {
            assert!((u.value(x) - (ExpCos.value(x) - 1.0)).abs() < 1e-14);
            assert!((u.grad(x)[1] - ExpCos.grad(x)[1]).abs() < 1e-13);
        }
    }
}
