//! Run configuration file: one TOML document with a section per component.
//!
//! ```toml
//! seed = 7
//! integration = "iou"
//!
//! [graph]
//! ratio_variant = "app"
//! alpha = 0.3
//!
//! [tracker]
//! tau = 0.5
//! forecast = "constrained"
//!
//! [mpn]
//! layers = 4
//!
//! [train]
//! epochs = 25
//!
//! [scene]
//! targets = 8
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::integration::IntegrationMode;
use crate::mpn::{MpnConfig, TrainConfig};
use crate::synth::SceneConfig;
use crate::tracker::TrackerConfig;

pub const EFFECTIVE_CONFIG_FILE: &str = "effective-config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for every random draw of a command.
    pub seed: Option<u64>,
    pub integration: IntegrationMode,
    pub graph: GraphConfig,
    pub tracker: TrackerConfig,
    pub mpn: MpnConfig,
    pub train: TrainConfig,
    pub scene: Option<SceneConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            integration: IntegrationMode::IouGuided,
            graph: GraphConfig::default(),
            tracker: TrackerConfig::default(),
            mpn: MpnConfig::default(),
            train: TrainConfig::default(),
            scene: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.tracker.validate()?;
        self.train.validate()?;
        if let Some(s) = &self.scene {
            s.validate()?;
        }
        Ok(())
    }

    /// The seed, which stochastic commands require.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required: pass --seed or set `seed`".into()))
    }

    /// Propagates the top-level seed into the sections that draw random numbers.
    pub fn propagate_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            if let Some(s) = &mut self.scene {
                s.seed = seed;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::RatioVariant;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("[graph]\nalfa = 0.3").is_err());
        assert!(RunConfig::parse("[tracker]\ntau = 0.5\nextra = true").is_err());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::parse("seed = 3\nintegration = \"average\"\n[graph]\nratio_variant = \"iou\"\nalpha = 0.1\n").unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.integration, IntegrationMode::Average);
        assert_eq!(c.graph.ratio_variant, RatioVariant::Iou);
        assert_eq!(c.graph.k_neighbors, GraphConfig::default().k_neighbors);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig {
            seed: Some(11),
            scene: Some(crate::synth::preset("crossing", 0).unwrap()),
            ..RunConfig::default()
        };
        c.propagate_seed();
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.scene.unwrap().seed, 11);
    }
}
