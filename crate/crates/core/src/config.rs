//! Run configuration: a flat JSON file plus programmatic overrides.
//! Archivable configs keep sweeps reproducible; the seed is mandatory for
//! any noisy run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmu::PmuPolicy;
use crate::sim::SuppressionMode;

pub const SEED_ENV_VAR: &str = "PMUSPILL_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("noisy runs (noise > 0) require an explicit seed (config, flag, or {SEED_ENV_VAR})")]
    SeedRequired,
    #[error("invalid {field}: {msg}")]
    Invalid { field: &'static str, msg: String },
}

/// Flat configuration shared by all commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub policy: PmuPolicy,
    pub tee_gate: bool,
    pub per_event_disable: Vec<String>,
    pub suppression: SuppressionMode,
    pub noise: f64,
    pub noise_burst: f64,
    pub rounds: u32,
    pub seed: Option<u64>,
    pub catalog: PathBuf,
    pub augment: Option<PathBuf>,
    pub instructions: PathBuf,
    pub filter: Option<PathBuf>,
    pub mapping: Option<PathBuf>,
    pub signature_seed: u64,
    pub signature_probability: f64,
    pub scenario: String,
    pub reps: u32,
    pub event: String,
    pub clock_hz: f64,
    pub jobs: usize,
    pub out_csv: Option<PathBuf>,
    pub out_json: Option<PathBuf>,
    /// Optional subset limits for smoke-scale runs.
    pub max_events: Option<usize>,
    pub max_instructions: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            policy: PmuPolicy::Vulnerable,
            tee_gate: false,
            per_event_disable: Vec::new(),
            suppression: SuppressionMode::TsxLike,
            noise: 0.0,
            noise_burst: 0.0,
            rounds: 10,
            seed: None,
            catalog: PathBuf::from("data/skylake_sample.json"),
            augment: Some(PathBuf::from("data/skylake_augment.json")),
            instructions: PathBuf::from("data/instructions_sample.xml"),
            filter: Some(PathBuf::from("data/instruction_filter.json")),
            mapping: None,
            signature_seed: 42,
            signature_probability: 0.15,
            scenario: "both".to_string(),
            reps: 10,
            event: "BR_MISP_EXEC.ALL_BRANCHES".to_string(),
            clock_hz: 3.4e9,
            jobs: 0,
            out_csv: None,
            out_json: None,
            max_events: None,
            max_instructions: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    /// Resolve the effective seed: explicit config value, else the
    /// environment fallback. Noisy runs must end up with one.
    pub fn effective_seed(&self) -> Result<u64, ConfigError> {
        if let Some(seed) = self.seed {
            return Ok(seed);
        }
        if let Ok(text) = std::env::var(SEED_ENV_VAR) {
            if let Ok(seed) = text.trim().parse::<u64>() {
                return Ok(seed);
            }
        }
        if self.noise > 0.0 || self.noise_burst > 0.0 {
            return Err(ConfigError::SeedRequired);
        }
        Ok(0)
    }

    /// Check referenced input files exist and numeric fields are sane.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for path in [Some(&self.catalog), Some(&self.instructions)]
            .into_iter()
            .flatten()
            .chain(self.augment.iter())
            .chain(self.filter.iter())
            .chain(self.mapping.iter())
        {
            if !path.exists() {
                return Err(ConfigError::MissingFile(path.clone()));
            }
        }
        if self.rounds == 0 {
            return Err(ConfigError::Invalid {
                field: "rounds",
                msg: "must be at least 1".to_string(),
            });
        }
        if self.reps == 0 {
            return Err(ConfigError::Invalid {
                field: "reps",
                msg: "must be at least 1".to_string(),
            });
        }
        if !(0.0..=1.0).contains(&self.noise) || !(0.0..=1.0).contains(&self.noise_burst) {
            return Err(ConfigError::Invalid {
                field: "noise",
                msg: "probabilities must lie in [0, 1]".to_string(),
            });
        }
        if crate::attack::sweep::Scenario::parse(&self.scenario).is_none() {
            return Err(ConfigError::Invalid {
                field: "scenario",
                msg: format!("expected s1, s2 or both, got {:?}", self.scenario),
            });
        }
        Ok(())
    }
}
