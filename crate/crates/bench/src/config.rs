use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uavmec_core::agent::{AgentHyperparams, Architecture, OffloadWiring};
use uavmec_core::env::Fixture;
use uavmec_core::schemes::{EvalProtocol, SchemeConfig, SchemeId};
use uavmec_core::world::WorldConfig;

use crate::error::{BenchError, Result};

/// Top-level JSON document accepted by every subcommand. Missing keys take
/// their defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub agent: AgentHyperparams,
    pub arch: Architecture,
    pub wiring: OffloadWiring,
    pub episodes: usize,
    pub train_frames: usize,
    pub eval: EvalProtocol,
    /// Schemes run by `compare`.
    pub schemes: Vec<SchemeId>,
    /// Training seeds run by `compare`.
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub behavior: BehaviorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scheme = SchemeConfig::default();
        Self {
            world: scheme.world,
            agent: scheme.agent,
            arch: scheme.arch,
            wiring: scheme.wiring,
            episodes: scheme.episodes,
            train_frames: scheme.train_frames,
            eval: scheme.eval,
            schemes: SchemeId::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            output_dir: None,
            behavior: BehaviorConfig::default(),
        }
    }
}

/// Pinned-volume replay behind the behavior panels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    /// Task volumes pinned to devices 0, 1, ... in bits; the rest are drawn.
    pub task_bits: Vec<f64>,
    pub seeds: Vec<u64>,
    pub frames: usize,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            task_bits: vec![8.2e6, 10.5e6],
            seeds: (0..10).collect(),
            frames: 1,
        }
    }
}

impl BehaviorConfig {
    pub fn fixture(&self, world: &WorldConfig) -> Result<Fixture> {
        if self.task_bits.len() > world.num_devices {
            return Err(BenchError::Config(format!(
                "behavior.task_bits: {} volumes for {} devices",
                self.task_bits.len(),
                world.num_devices
            )));
        }
        let mut bits = vec![None; world.num_devices];
        for (slot, &b) in bits.iter_mut().zip(&self.task_bits) {
            *slot = Some(b);
        }
        let fixture = Fixture {
            task_bits: Some(bits),
            ..Default::default()
        };
        fixture.check(world)?;
        Ok(fixture)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            BenchError::Config(msg) => BenchError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme_config().validate()?;
        if self.behavior.frames == 0 {
            return Err(BenchError::Config("behavior.frames: must be >= 1".into()));
        }
        self.behavior.fixture(&self.world)?;
        Ok(())
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            world: self.world.clone(),
            agent: self.agent.clone(),
            arch: self.arch.clone(),
            wiring: self.wiring,
            episodes: self.episodes,
            train_frames: self.train_frames,
            eval: self.eval.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(ExperimentConfig::parse("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::parse(r#"{"world": {"num_uavz": 3}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("num_uavz"), "{err}");
    }

    #[test]
    fn invalid_values_are_named() {
        let err = ExperimentConfig::parse(r#"{"agent": {"gamma": 1.5}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("agent.gamma"), "{err}");
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig {
            seeds: vec![4, 5],
            ..Default::default()
        };
        assert_eq!(ExperimentConfig::parse(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn behavior_fixture_pins_leading_devices() {
        let cfg = ExperimentConfig::default();
        let f = cfg.behavior.fixture(&cfg.world).unwrap();
        let bits = f.task_bits.unwrap();
        assert_eq!(bits[..3], [Some(8.2e6), Some(10.5e6), None]);
    }
}
