//! Run configuration: ties together a model file, a data file, a property
//! file, chain settings and test settings. Relative paths resolve against the
//! directory containing the run configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use postcheck_core::config::{BuiltModel, ModelConfig, PropertyEntry};
use postcheck_core::model::StepControl;
use postcheck_core::posterior::ObservationSet;

use crate::commands::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMode {
    Fixed,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub burn_in: u64,
    pub samples: u64,
    pub seed: u64,
    /// Overrides the per-parameter proposal sigmas from the model file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_sigmas: Option<Vec<f64>>,
}

fn default_batch() -> u64 {
    1_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    pub mode: TestMode,
    pub epsilon: f64,
    #[serde(default = "default_batch")]
    pub batch_size: u64,
    /// Sample cap for sequential runs; mandatory there.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<u64>,
    /// Override the per-property threshold from the property file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Override the per-property indifference half-width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let control = StepControl::default();
        Self { abs_tol: control.abs_tol, rel_tol: control.rel_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: PathBuf,
    pub data: PathBuf,
    pub properties: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub chain: ChainSection,
    pub test: TestSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
}

/// A run configuration with every referenced file loaded and compiled.
pub struct LoadedRun {
    pub config: RunConfig,
    /// SHA-256 of the run configuration file, hex-encoded; embedded in every
    /// report for provenance.
    pub config_hash: String,
    pub built: BuiltModel,
    pub data: ObservationSet,
    pub properties: Vec<PropertyEntry>,
    pub control: StepControl,
    pub proposal_sigmas: Vec<f64>,
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Config(format!("parsing {path}: {e}")))
    }
}

impl LoadedRun {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let config = RunConfig::parse(&text, &path.display().to_string())?;
        let config_hash = hex_digest(text.as_bytes());
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();

        let model_path = base_dir.join(&config.model);
        let model = ModelConfig::load(&model_path)?;
        let built = model.build()?;

        let data_path = base_dir.join(&config.data);
        let data = ObservationSet::load_csv(&data_path).map_err(|e| {
            CliError::Stage { stage: "data ingestion", message: format!("{}: {e}", data_path.display()) }
        })?;

        let properties = postcheck_core::config::load_properties(base_dir.join(&config.properties))?;

        let integrator = config.integrator.unwrap_or_default();
        let control = StepControl::with_tolerances(integrator.abs_tol, integrator.rel_tol);

        let proposal_sigmas = match (&config.chain.proposal_sigmas, &built.proposal_sigmas) {
            (Some(sigmas), _) => sigmas.clone(),
            (None, Some(sigmas)) => sigmas.clone(),
            (None, None) => {
                return Err(CliError::Config(
                    "no proposal sigmas: set [chain] proposal_sigmas or per-parameter proposal_sigma in the model file".into(),
                ))
            }
        };

        Ok(Self { config, config_hash, built, data, properties, control, proposal_sigmas, base_dir })
    }

    pub fn property(&self, name: &str) -> Result<&PropertyEntry, CliError> {
        self.properties.iter().find(|p| p.name == name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown property {name:?} (file has: {})",
                self.properties.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join(", ")
            ))
        })
    }

    /// Output directory: flag value, else config entry, else the
    /// `POSTCHECK_OUT_DIR` environment variable, else the current directory.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(dir) = flag {
            return dir.to_path_buf();
        }
        if let Some(dir) = &self.config.output_dir {
            return self.base_dir.join(dir);
        }
        if let Ok(dir) = std::env::var("POSTCHECK_OUT_DIR") {
            return PathBuf::from(dir);
        }
        PathBuf::from(".")
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
