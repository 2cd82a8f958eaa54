use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{PipelineConfig, PlantedConfig};
use crate::error::{Error, Result};
use crate::eval::{AisConfig, EvalOptions};
use crate::inference::MfSchedule;
use crate::model::{HiddenConfig, Variant};
use crate::training::TrainConfig;

/// Default total number of hidden bits, split between comment and thread bits.
pub const DEFAULT_BITS: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Raw JSONL thread file.
    pub raw: Option<PathBuf>,
    /// Preprocessed corpus directory.
    pub corpus: Option<PathBuf>,
    /// Vocabulary to reuse instead of building one.
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Where commands write their outputs.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HiddenSection {
    pub bits: usize,
    pub variant: Variant,
}

impl Default for HiddenSection {
    fn default() -> Self {
        HiddenSection {
            bits: DEFAULT_BITS,
            variant: Variant::Ddtm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub threads: usize,
    pub regimes: usize,
    pub test_fraction: f64,
    pub planted: PlantedConfig,
    /// Gibbs burn-in; exact sampling when absent.
    pub gibbs_burn_in: Option<usize>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            threads: 500,
            regimes: 1,
            test_fraction: 0.2,
            planted: PlantedConfig::default(),
            gibbs_burn_in: None,
        }
    }
}

/// Everything a command needs. Read from TOML; flags override fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Mandatory: there is no clock-based seeding.
    pub seed: Option<u64>,
    pub workers: usize,
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub hidden: HiddenSection,
    pub schedule: MfSchedule,
    pub train: TrainConfig,
    pub ais: AisConfig,
    pub eval: EvalOptions,
    pub synth: SynthSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn hidden_config(&self) -> Result<HiddenConfig> {
        HiddenConfig::from_total_bits(self.hidden.bits, self.hidden.variant)
    }

    pub fn workers(&self) -> usize {
        self.workers.max(1)
    }

    /// Training settings with the run-level seed, schedule and workers applied.
    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            seed: self.seed()?,
            schedule: self.schedule,
            workers: self.workers(),
            ..self.train.clone()
        })
    }

    pub fn ais_config(&self) -> Result<AisConfig> {
        Ok(AisConfig {
            seed: self.seed()?,
            ..self.ais
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configs serialize")
    }

    /// Writes the effective configuration into `dir`.
    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("effective_config.toml");
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))
    }

    pub fn require<'a>(field: &'a Option<PathBuf>, name: &str) -> Result<&'a PathBuf> {
        field
            .as_ref()
            .ok_or_else(|| Error::Config(format!("missing path: {name}")))
    }
}
