//! Message passing edge classifier and its training.

mod model;
mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use model::{Aggregation, InputGrads, MpnConfig, MpnForward, MpnInput, MpnModel, MpnState};
pub use train::{
    fit, teacher_forced_tracks, train, EpochStats, FixedGraphs, GraphSource, LabeledGraph, LstmTape, TrainConfig,
    TrainProgress,
};

use crate::error::{Error, Result};
use crate::integration::IntegrationMode;
use crate::nn::checkpoint::{read_checkpoint, restore, write_checkpoint, CheckpointHeader};
use crate::nn::{join, Array, LstmParams, Parameters};

/// Everything needed to score association graphs: the network, the LSTM
/// used for feature integration and the integration mode the network was
/// trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationModel {
    pub mpn: MpnModel,
    pub lstm: LstmParams,
    pub integration: IntegrationMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredConfig {
    mpn: MpnConfig,
    integration: IntegrationMode,
}

impl AssociationModel {
    pub fn new<R: Rng + ?Sized>(config: MpnConfig, integration: IntegrationMode, rng: &mut R) -> Result<Self> {
        let mpn = MpnModel::new(config, rng)?;
        let lstm = LstmParams::new(config.feature_dim, config.feature_dim, rng);
        Ok(Self { mpn, lstm, integration })
    }

    /// LSTM weights when the integration mode uses them.
    pub fn lstm(&self) -> Option<&LstmParams> {
        (self.integration == IntegrationMode::Lstm).then_some(&self.lstm)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mpn: self.mpn.zeros_like(),
            lstm: LstmParams::zeros(self.lstm.input_dim(), self.lstm.hidden_dim()),
            integration: self.integration,
        }
    }

    pub fn write<W: Write>(&self, w: W, progress: TrainProgress) -> Result<()> {
        let config = serde_json::to_value(StoredConfig {
            mpn: self.mpn.config,
            integration: self.integration,
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
        write_checkpoint(w, config, progress.step, progress.epochs, self)
    }

    pub fn read<R: Read>(r: R) -> Result<(Self, TrainProgress)> {
        let (header, arrays): (CheckpointHeader, Vec<(String, Array)>) = read_checkpoint(r)?;
        let stored: StoredConfig =
            serde_json::from_value(header.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        // Weights are overwritten below; the generator only fixes the layout.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(stored.mpn, stored.integration, &mut rng)?;
        restore(&mut model, &arrays)?;
        Ok((
            model,
            TrainProgress {
                step: header.step,
                epochs: header.epochs,
            },
        ))
    }

    pub fn save(&self, path: &Path, progress: TrainProgress) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?), progress)
    }

    pub fn load(path: &Path) -> Result<(Self, TrainProgress)> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

impl Parameters for AssociationModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Array)) {
        self.mpn.visit(&join(prefix, "mpn"), f);
        if self.integration == IntegrationMode::Lstm {
            self.lstm.visit(&join(prefix, "lstm"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Array)) {
        self.mpn.visit_mut(&join(prefix, "mpn"), f);
        if self.integration == IntegrationMode::Lstm {
            self.lstm.visit_mut(&join(prefix, "lstm"), f);
        }
    }
}
