//! The quality network and the preference function that compares two of its
//! outputs.

pub mod layers;
mod model;
mod preference;

pub use layers::Params;
pub use model::{ForwardTrace, ModelConfig, SaMos, SA_MOS};
pub use preference::{preference_from_diff, preference_score, preference_slope};

use crate::backbone::{BackbonePair, FeatureStore, UttFeatures, Waveform};
use crate::datamodel::PredictionRecord;
use crate::error::Result;

/// Builds the record for one ordered pair from two predicted MOS values.
pub fn prediction_record(x_id: &str, y_id: &str, mos_x: f64, mos_y: f64) -> Result<PredictionRecord> {
    Ok(PredictionRecord {
        x_id: x_id.to_string(),
        y_id: y_id.to_string(),
        mos_hat_x: mos_x,
        mos_hat_y: mos_y,
        pref_hat: preference_score(mos_x, mos_y)?,
    })
}

/// Scores both members with the same network.
pub fn predict_features(
    model: &SaMos,
    x_id: &str,
    x: &UttFeatures,
    y_id: &str,
    y: &UttFeatures,
) -> Result<PredictionRecord> {
    prediction_record(x_id, y_id, model.score(x)?, model.score(y)?)
}

/// Pair prediction from cached features.
pub fn predict_pair(model: &SaMos, store: &FeatureStore, x_id: &str, y_id: &str) -> Result<PredictionRecord> {
    predict_features(model, x_id, store.get(x_id)?, y_id, store.get(y_id)?)
}

/// A trained network bundled with its encoders, for scoring raw audio.
#[derive(Clone)]
pub struct Scorer {
    pub model: SaMos,
    pub backbones: BackbonePair,
}

impl Scorer {
    pub fn new(model: SaMos, backbones: BackbonePair) -> Self {
        Scorer { model, backbones }
    }

    pub fn score_waveform(&self, wav: &Waveform) -> Result<f64> {
        self.model.score(&self.backbones.extract(wav)?)
    }

    pub fn forward_pair(&self, x_id: &str, x: &Waveform, y_id: &str, y: &Waveform) -> Result<PredictionRecord> {
        prediction_record(x_id, y_id, self.score_waveform(x)?, self.score_waveform(y)?)
    }
}
