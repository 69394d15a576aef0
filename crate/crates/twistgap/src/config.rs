//! Run configuration: a single JSON file drives the whole pipeline, so runs
//! are reproducible and diffable. All numeric knobs carry documented units:
//! lengths are in units of the cross-section scale, energies in the inverse
//! square of that length, momenta live on the dual torus [-1/2, 1/2).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bands::EdgeParams;
use crate::effective::DecayProfile;
use crate::fiber::TwistProfile;
use crate::geometry::CrossSectionShape;
use crate::linalg::C64;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {found} (this build reads {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One Fourier coefficient of the twist rate; only m >= 0 are listed, the
/// negative side is the conjugate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TwistCoefficient {
    pub m: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Bands,
    Edges,
    Coupling,
    Count,
    BsCheck,
    TubeCheck,
}

impl Stage {
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Bands => &[],
            Stage::Edges => &[Stage::Bands],
            Stage::Coupling => &[Stage::Bands, Stage::Edges],
            Stage::Count => &[Stage::Bands, Stage::Edges, Stage::Coupling],
            Stage::BsCheck => &[Stage::Bands, Stage::Edges, Stage::Coupling],
            Stage::TubeCheck => &[Stage::Bands],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Bands => "bands",
            Stage::Edges => "edges",
            Stage::Coupling => "coupling",
            Stage::Count => "count",
            Stage::BsCheck => "bs-check",
            Stage::TubeCheck => "tube-check",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Numerics {
    /// Longitudinal Fourier truncation; `None` picks max(M + 4, 6).
    pub ell_max: Option<usize>,
    /// Number of bands to chart.
    pub bands: usize,
    /// k samples over [-1/2, 1/2); even, >= 16.
    pub n_k: usize,
    pub solver_tol: f64,
    pub refine_tol: f64,
    pub band_tol_rel: f64,
    pub slope_tol: f64,
    pub mu_floor: f64,
    pub gap_tol_rel: f64,
    /// lambda grid for counting, relative to sup |V|.
    pub lambda_min_rel: f64,
    pub lambda_max_rel: f64,
    pub lambda_points: usize,
    /// Count with the mean-field potential (true) or the full oscillating
    /// eta(x) eps(x) (false).
    pub mean_field: bool,
    /// Rayon worker cap; 0 = number of cores.
    pub workers: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            ell_max: None,
            bands: 4,
            n_k: 16,
            solver_tol: 1e-9,
            refine_tol: 1e-6,
            band_tol_rel: 1e-7,
            slope_tol: 1e-5,
            mu_floor: 1e-6,
            gap_tol_rel: 1e-6,
            lambda_min_rel: 1e-6,
            lambda_max_rel: 1e-1,
            lambda_points: 25,
            mean_field: true,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TubeConfig {
    /// Half-length X in twist periods (X = periods * 2 pi).
    pub half_length_periods: usize,
    pub x3_step: f64,
    /// Window (edge - depth, edge - margin) inside the semibounded gap.
    pub window_depth: f64,
    pub window_margin: f64,
    /// Perturbation scales swept for the trend check.
    pub scales: Vec<f64>,
    /// Tolerated count drift under domain doubling.
    pub edge_allowance: usize,
}

impl Default for TubeConfig {
    fn default() -> Self {
        TubeConfig {
            half_length_periods: 2,
            x3_step: 0.35,
            window_depth: 4.0,
            window_margin: 1e-3,
            scales: vec![1.0, 2.0, 4.0],
            edge_allowance: 4,
        }
    }
}

/// Expectations evaluated by `verify`; thresholds are pinned in the config so
/// a verification run is self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum VerifyCheck {
    /// |lambda_1(h) - value| / value <= rel_tol for the semibounded edge.
    EdgeValue { value: f64, rel_tol: f64 },
    /// Total number of gaps reported (including the semibounded one).
    GapCount { expect: usize },
    /// The chosen edge has a unique extremizer at k_star; when `mu` is given
    /// the mass must match it, otherwise it only has to be positive.
    Edge {
        gap: usize,
        side: String,
        k_star: f64,
        k_tol: f64,
        #[serde(default)]
        mu: Option<f64>,
        #[serde(default = "default_mu_rel_tol")]
        mu_rel_tol: f64,
    },
    /// eta is constant and matches the constant-twist closed form.
    EtaConstant { rel_tol: f64 },
    /// max |eta| <= rel_tol * natural scale.
    EtaZero { rel_tol: f64 },
    /// Counting exactness against dense diagonalization on random instances.
    CountingExactness { cases: usize, max_dim: usize },
    /// Birman-Schwinger identity against the inertia counter.
    BsIdentity { lambdas_rel: Vec<f64> },
    /// Fitted power-law exponent within rel_tol of 1/2 - 1/alpha, ratio at
    /// the smallest lambda inside the band.
    PowerLaw { slope_rel_tol: f64, ratio_band: [f64; 2] },
    /// Fitted N vs |ln lambda| slope within rel_tol of the prediction.
    LogLaw { slope_rel_tol: f64 },
    /// Counts constant over the final lambda decade.
    BoundedTail,
    /// Oscillating-vs-mean count ratios within the band at the smallest
    /// `last` lambdas.
    OscVsMean { ratio_band: [f64; 2], last: usize },
    /// Tube window counts nondecreasing in the scale sweep, positive at the
    /// largest scale, stable under domain doubling.
    TubeTrend,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub cross_section: CrossSectionShape,
    pub grid_spacing: f64,
    pub twist: Vec<TwistCoefficient>,
    pub perturbation: DecayProfile,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub tube: TubeConfig,
    pub stages: Vec<Stage>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub debug_dumps: bool,
    #[serde(default)]
    pub verify: Vec<VerifyCheck>,
}

fn default_output_dir() -> String {
    "out".into()
}

fn default_mu_rel_tol() -> f64 {
    0.05
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if !(self.grid_spacing.is_finite() && self.grid_spacing > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "grid_spacing must be positive, got {}",
                self.grid_spacing
            )));
        }
        if self.twist.is_empty() {
            return Err(ConfigError::Invalid("twist needs at least the m = 0 coefficient".into()));
        }
        if self.numerics.n_k < 16 || self.numerics.n_k % 2 != 0 {
            return Err(ConfigError::Invalid(format!(
                "n_k must be even and >= 16, got {}",
                self.numerics.n_k
            )));
        }
        if self.numerics.bands == 0 {
            return Err(ConfigError::Invalid("bands must be at least 1".into()));
        }
        let alpha = self.perturbation.alpha();
        if !(alpha > 0.0) {
            return Err(ConfigError::Invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !(self.numerics.lambda_min_rel > 0.0
            && self.numerics.lambda_min_rel < self.numerics.lambda_max_rel)
        {
            return Err(ConfigError::Invalid("need 0 < lambda_min_rel < lambda_max_rel".into()));
        }
        if self.stages.is_empty() {
            return Err(ConfigError::Invalid("no stages requested".into()));
        }
        for &stage in &self.stages {
            for &pre in stage.prerequisites() {
                if !self.stages.contains(&pre) {
                    return Err(ConfigError::Invalid(format!(
                        "stage '{}' requires stage '{}'",
                        stage.name(),
                        pre.name()
                    )));
                }
            }
        }
        self.twist_profile().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    pub fn twist_profile(&self) -> Result<TwistProfile, String> {
        let m_max = self.twist.iter().map(|c| c.m).max().unwrap_or(0);
        let mut coeffs = vec![C64::new(0.0, 0.0); m_max + 1];
        for c in &self.twist {
            coeffs[c.m] = C64::new(c.re, c.im);
        }
        TwistProfile::new(coeffs)
    }

    pub fn ell_max(&self) -> usize {
        let m = self.twist.iter().map(|c| c.m).max().unwrap_or(0);
        self.numerics.ell_max.unwrap_or_else(|| (m + 4).max(6))
    }

    pub fn edge_params(&self) -> EdgeParams {
        EdgeParams {
            ell_max: self.ell_max(),
            solver_tol: self.numerics.solver_tol,
            refine_tol: self.numerics.refine_tol,
            band_tol_rel: self.numerics.band_tol_rel,
            slope_tol: self.numerics.slope_tol,
            mu_floor: self.numerics.mu_floor,
            gap_tol_rel: self.numerics.gap_tol_rel,
        }
    }

    /// Output directory, honoring the TWISTGAP_OUT_DIR override.
    pub fn resolved_output_dir(&self) -> std::path::PathBuf {
        match std::env::var("TWISTGAP_OUT_DIR") {
            Ok(dir) if !dir.is_empty() => dir.into(),
            _ => self.output_dir.clone().into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "cross_section": {"kind": "rectangle", "width": 1.0, "height": 1.0},
            "grid_spacing": 0.1,
            "twist": [{"m": 0, "re": 0.4}],
            "perturbation": {"family": "power", "c": 1.0, "alpha": 1.0},
            "stages": ["bands"]
        })
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: RunConfig = serde_json::from_value(minimal_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.numerics.n_k, 16);
        assert_eq!(cfg.ell_max(), 6);
        assert!(cfg.verify.is_empty());
    }

    #[test]
    fn schema_version_mismatch_rejected() {
        let mut v = minimal_json();
        v["schema_version"] = serde_json::json!(99);
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::SchemaVersion { .. })));
    }

    #[test]
    fn missing_prerequisite_stage_rejected() {
        let mut v = minimal_json();
        v["stages"] = serde_json::json!(["coupling"]);
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn complex_constant_coefficient_rejected() {
        let mut v = minimal_json();
        v["twist"] = serde_json::json!([{"m": 0, "re": 0.4, "im": 0.1}]);
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ell_max_default_covers_twist_order() {
        let mut v = minimal_json();
        v["twist"] = serde_json::json!([{"m": 0, "re": 0.3}, {"m": 4, "re": 0.05}]);
        let cfg: RunConfig = serde_json::from_value(v).unwrap();
        assert_eq!(cfg.ell_max(), 8);
    }
}
