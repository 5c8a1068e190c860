use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jepacore::ModelConfig;
use crate::maskfab::MaskStrategy;
use crate::probefab::ProbeConfig;
use crate::tokenfab::NormConstants;
use crate::trainfab::StageConfig;
use crate::worldsim::WorldConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub clips: usize,
    /// Clip `i` is simulated from seed `master_seed + i`.
    pub master_seed: u64,
    pub qa_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            clips: 512,
            master_seed: 1000,
            qa_seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Context slices of the latent rollout.
    pub rollout_context: usize,
    /// Clips averaged into the rollout curve.
    pub rollout_clips: usize,
    /// Strategy whose interaction recall is attached to the linearity records.
    pub recall_strategy: Option<MaskStrategy>,
    pub mask_seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            rollout_context: 2,
            rollout_clips: 32,
            recall_strategy: Some(MaskStrategy::Ia),
            mask_seed: 0,
        }
    }
}

/// Everything a pipeline run depends on. The model grid also fixes how clips
/// are tokenized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub norm: NormConstants,
    pub stage: StageConfig,
    pub probe: ProbeConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            world: WorldConfig::default(),
            model: ModelConfig::tiny(),
            norm: NormConstants::default(),
            stage: StageConfig::default(),
            probe: ProbeConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Contract(format!("config {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `--seed` drives both pre-training and probing.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.stage.seed = seed;
        self.probe.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.model.validate()?;
        self.stage.validate()?;
        self.norm.validate()?;
        let g = &self.model.grid;
        if self.world.arena != g.height || self.world.arena != g.width || self.world.frames != g.frames {
            return Err(Error::Contract("world size and frame count must match the model grid".into()));
        }
        if self.data.clips < 2 {
            return Err(Error::Contract("need at least two clips".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Digest of the whole configuration.
    pub fn digest(&self) -> String {
        sha(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Digest of the parts that determine a generated dataset.
    pub fn data_digest(&self) -> String {
        let v = serde_json::json!({ "data": self.data, "world": self.world, "grid": self.model.grid });
        sha(&serde_json::to_vec(&v).expect("config serializes"))
    }

    /// Largest descriptive answer plus one.
    pub fn n_answers(&self) -> usize {
        self.world.max_objects + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back: RunConfig = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        assert_eq!(c.digest().len(), 16);
    }

    #[test]
    fn seed_changes_run_digest_but_not_data_digest() {
        let a = RunConfig::default();
        let b = a.clone().with_seed(9);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.data_digest(), b.data_digest());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"data": {"clips": 64}}"#).unwrap();
        assert_eq!(c.data.clips, 64);
        assert_eq!(c.model, ModelConfig::tiny());
    }
}
