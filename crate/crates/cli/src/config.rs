use std::path::PathBuf;

use rcmlab_core::chaining::HarnackConstants;
use rcmlab_core::environment::Quantity;
use rcmlab_core::kernel::WrapPolicy;
use rcmlab_core::report::canonical_json;
use rcmlab_core::{EnvironmentSpec, RcmError, Result, TorusGeometry};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub d: usize,
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub heat: HeatConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub moments: MomentsConfig,
    #[serde(default)]
    pub green: GreenConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RcmError::Precondition(format!("config: {e}")))
    }

    pub fn torus(&self) -> Result<TorusGeometry> {
        TorusGeometry::new(self.geometry.d, self.geometry.side)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("rcmlab-out"))
    }

    /// SHA-256 of the canonical JSON with the output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let digest = Sha256::digest(canonical_json(&c).as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatConfig {
    /// Source points; empty means the origin.
    pub sources: Vec<Vec<i64>>,
    pub times: Vec<f64>,
    pub tol: f64,
    pub wrap: WrapPolicy,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            times: vec![0.0, 1.0, 4.0],
            tol: 1e-10,
            wrap: WrapPolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub sources: Vec<Vec<i64>>,
    pub times: Vec<f64>,
    /// Points with `|x − y| <= window · √t` are used.
    pub window: f64,
    pub tol: f64,
    pub wrap: WrapPolicy,
    /// Uniform validity threshold `N`: points need `t >= N (1 ∨ |x − y|)`.
    pub threshold: f64,
    pub upper_slack: f64,
    pub lower_factor: f64,
    /// Verify on the fitting field instead of an independent one.
    pub same_field: bool,
    /// Multiplies the fitted `c₂` before verification.
    pub c2_scale: f64,
    /// Violations with relative margin at or below this do not fail the run.
    pub margin: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            sources: Vec::new(),
            times: vec![4.0, 8.0, 16.0],
            window: 2.0,
            tol: 1e-10,
            wrap: WrapPolicy::Report,
            threshold: 1.0,
            upper_slack: 2.0,
            lower_factor: 0.5,
            same_field: false,
            c2_scale: 1.0,
            margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub x: Vec<i64>,
    pub t: f64,
    pub constants: HarnackConstants,
    /// Compare with the exact heat kernel and calibrate `c₁₄` per step.
    pub check: bool,
    pub tol: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            x: vec![4, 0],
            t: 8.0,
            constants: HarnackConstants::default(),
            check: false,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsConfig {
    pub quantity: Quantity,
    pub exponent: f64,
    /// Defaults to `2d`, or `d²` for the Gaussian field.
    pub eta: Option<f64>,
    pub min_size: usize,
    /// Number of rectangle sizes, doubling from `min_size`.
    pub sizes: usize,
    pub replicas: usize,
    pub centering_replicas: usize,
    /// Known centering constant; estimated when absent.
    pub centering: Option<f64>,
    pub association_replicas: usize,
    pub mixing_distances: Vec<u64>,
    pub mixing_replicas: usize,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            quantity: Quantity::Mu,
            exponent: 1.0,
            eta: None,
            min_size: 16,
            sizes: 5,
            replicas: 200,
            centering_replicas: 50,
            centering: None,
            association_replicas: 0,
            mixing_distances: Vec::new(),
            mixing_replicas: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreenConfig {
    pub x: Vec<i64>,
    /// Target points; empty means `r e₁` for `r = 0..=L/4`.
    pub targets: Vec<Vec<i64>>,
    pub tol: f64,
    pub t0: Option<f64>,
    pub fit_points: usize,
    /// Distance threshold and window `[c₉, c₈]` for the scaled quenched check.
    pub threshold: u64,
    pub window: (f64, f64),
    pub annealed: Option<AnnealedConfig>,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self {
            x: Vec::new(),
            targets: Vec::new(),
            tol: 1e-3,
            t0: None,
            fit_points: 9,
            threshold: 1,
            window: (0.0, f64::MAX),
            annealed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealedConfig {
    pub distances: Vec<u64>,
    pub replicas: usize,
}
