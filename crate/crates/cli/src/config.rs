//! Config file sections. Flags and `FLATPOSE_*` variables override them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use flatpose_core::docparse::DEFAULT_TOLERANCE;
use flatpose_core::estimator::{ContourParams, OracleNoise};
use flatpose_core::geometry::DEFAULT_THICKNESS;
use flatpose_core::metrics::EvalConfig;
use flatpose_core::scenegen::GenConfig;
use flatpose_server::ServerConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertSection {
    pub tolerance: f64,
    pub thickness: f64,
}

impl Default for ConvertSection {
    fn default() -> Self {
        Self { tolerance: DEFAULT_TOLERANCE, thickness: DEFAULT_THICKNESS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSection {
    pub seed: u64,
    #[serde(flatten)]
    pub config: GenConfig,
}

impl Default for GenSection {
    fn default() -> Self {
        Self { seed: 0, config: GenConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub estimator: String,
    pub seed: u64,
    pub oracle: OracleNoise,
    pub contour: ContourParams,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self { estimator: "oracle".into(), seed: 0, oracle: OracleNoise::default(), contour: ContourParams::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub convert: ConvertSection,
    pub gen: GenSection,
    pub estimate: EstimateSection,
    pub eval: EvalConfig,
    pub serve: ServerConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}
