//! Losses, the SGD loop with dev-SRCC checkpoint selection, checkpoints and
//! multi-seed experiments.

mod checkpoint;
mod experiment;
mod loss;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_SCHEMA, CHECKPOINT_VERSION};
pub use experiment::{Experiment, MultiSeedReport, SeedOutcome, SeedRun};
pub use loss::{
    mos_loss, pair_batch_loss, pref_loss, total_loss, utterance_batch_loss, utterance_mos_loss, LossBreakdown,
};
pub use trainer::{
    batch_gradient, read_epoch_log, train, write_epoch_log, DevValidator, EpochReport, SelectionTracker,
    SystemSrccValidator, TrainRun, TrainingExample,
};

use crate::error::{Error, Result};

/// Which labels the training objective consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelCondition {
    /// MOS labels available: MOS loss plus preference loss.
    #[serde(rename = "LA")]
    La,
    /// MOS labels missing: preference loss only.
    #[serde(rename = "LM")]
    Lm,
    /// MOS loss on single utterances, no pairing.
    #[serde(rename = "MOS_ONLY")]
    MosOnly,
}

impl LabelCondition {
    pub const ALL: [LabelCondition; 3] = [LabelCondition::La, LabelCondition::Lm, LabelCondition::MosOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelCondition::La => "LA",
            LabelCondition::Lm => "LM",
            LabelCondition::MosOnly => "MOS_ONLY",
        }
    }
}

impl fmt::Display for LabelCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "LA" => Ok(LabelCondition::La),
            "LM" => Ok(LabelCondition::Lm),
            "MOS_ONLY" => Ok(LabelCondition::MosOnly),
            _ => Err(Error::Config(format!("unknown label condition `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub label_condition: LabelCondition,
    /// Pairs per SGD step; utterances per step are twice this in MOS-only mode.
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    /// Also train on every pair presented in reverse order.
    pub swap_augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            label_condition: LabelCondition::La,
            batch_size: 8,
            lr: 1e-4,
            max_epochs: 1000,
            patience: 15,
            seeds: vec![1, 2, 3, 4, 5],
            swap_augment: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}
