use serde::{Deserialize, Serialize};

use crate::agent::PolicyNet;
use crate::{Error, Result};

use super::control::{Controller, TeamPolicy};
use super::learners::NetworkDocuments;
use super::{SchemeConfig, SchemeId};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Weights of every learner of a run plus what is needed to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub scheme: SchemeId,
    pub config: SchemeConfig,
    pub episodes_trained: usize,
    /// Exploration noise level the next episode would use.
    pub noise_sigma: f64,
    pub networks: Vec<NetworkDocuments>,
}

impl Checkpoint {
    pub fn controller(&self) -> Controller {
        Controller::new(self.scheme, &self.config.world, self.config.wiring)
    }

    pub fn policy(&self) -> Result<TeamPolicy> {
        let actors = self
            .networks
            .iter()
            .map(|n| PolicyNet::from_document(&n.actor))
            .collect::<Result<Vec<_>>>()?;
        TeamPolicy::new(self.controller(), actors)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: ckpt.schema_version,
                expected: CHECKPOINT_SCHEMA_VERSION,
            });
        }
        ckpt.config.validate()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{evaluate, tests::smoke_config, train};

    #[test]
    fn round_trip_preserves_evaluation() {
        let cfg = smoke_config();
        for id in [SchemeId::Ctce, SchemeId::Separated] {
            let t = train(id, &cfg, 5).unwrap();
            let ckpt = Checkpoint::from_json(&t.checkpoint().to_json()).unwrap();
            assert_eq!(ckpt, t.checkpoint());
            let restored = ckpt.policy().unwrap();
            assert_eq!(restored, t.policy());
            assert_eq!(
                evaluate(&restored, &cfg.eval, None).unwrap(),
                evaluate(&t.policy(), &cfg.eval, None).unwrap()
            );
        }
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let t = train(SchemeId::Dtde, &SchemeConfig { episodes: 0, ..smoke_config() }, 1).unwrap();
        let mut ckpt = t.checkpoint();
        ckpt.schema_version = 9;
        assert!(matches!(
            Checkpoint::from_json(&ckpt.to_json()),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }
}
