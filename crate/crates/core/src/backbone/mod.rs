//! Feature extraction: the [`Backbone`] interface, the learnable layer mixer,
//! audio ingestion and a per-utterance feature cache.
//!
//! Real encoders plug in through [`BackboneRegistry`] under a name; only the
//! offline `toy` extractor ships with the toolkit.

mod audio;
mod features;
mod toy;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use audio::{read_wav, write_wav, Waveform};
pub use features::{aggregate_layers, align_lengths, softmax, FeatureSequence, LayerStack, LayerWeights};
pub use toy::{ToyBackbone, TOY_FRAME_RATE, TOY_HOP, TOY_SAMPLE_RATE, TOY_STATS, TOY_WINDOW};

use crate::datamodel::Utterance;
use crate::error::{Error, Result};

/// A frozen speech encoder. Implementations must be deterministic for a
/// given input and safe to share between threads.
pub trait Backbone: Send + Sync {
    fn name(&self) -> &str;
    fn sample_rate(&self) -> u32;
    fn frame_rate(&self) -> f64;
    fn dim(&self) -> usize;
    fn num_layers(&self) -> usize;

    /// Final-layer features.
    fn extract_semantic(&self, wav: &Waveform) -> Result<FeatureSequence>;

    /// Hidden states of every layer.
    fn extract_acoustic_stack(&self, wav: &Waveform) -> Result<LayerStack>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Semantic,
    Acoustic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    /// Registry key of the semantic encoder.
    pub semantic: String,
    /// Registry key of the acoustic encoder.
    pub acoustic: String,
    pub dim: usize,
    /// Layer count emitted by the toy encoder.
    pub toy_layers: usize,
    pub semantic_seed: u64,
    pub acoustic_seed: u64,
    /// Keep encoder parameters fixed during training.
    pub freeze: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            semantic: "toy".into(),
            acoustic: "toy".into(),
            dim: 768,
            toy_layers: 3,
            semantic_seed: 11,
            acoustic_seed: 23,
            freeze: false,
        }
    }
}

pub type BackboneFactory =
    Arc<dyn Fn(&BackboneConfig, Branch) -> Result<Arc<dyn Backbone>> + Send + Sync>;

/// Name-keyed constructors for encoders.
#[derive(Clone)]
pub struct BackboneRegistry {
    factories: HashMap<String, BackboneFactory>,
}

impl Default for BackboneRegistry {
    fn default() -> Self {
        let mut registry = BackboneRegistry {
            factories: HashMap::new(),
        };
        registry.register(
            "toy",
            Arc::new(|cfg: &BackboneConfig, branch| {
                let seed = match branch {
                    Branch::Semantic => cfg.semantic_seed,
                    Branch::Acoustic => cfg.acoustic_seed,
                };
                Ok(Arc::new(ToyBackbone::new(cfg.dim, cfg.toy_layers, seed)?) as Arc<dyn Backbone>)
            }),
        );
        registry
    }
}

impl BackboneRegistry {
    pub fn register(&mut self, name: impl Into<String>, factory: BackboneFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn build(&self, cfg: &BackboneConfig, branch: Branch) -> Result<Arc<dyn Backbone>> {
        let name = match branch {
            Branch::Semantic => &cfg.semantic,
            Branch::Acoustic => &cfg.acoustic,
        };
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownBackbone(name.clone()))?;
        let backbone = factory(cfg, branch)?;
        if backbone.dim() != cfg.dim {
            return Err(Error::Shape(format!(
                "backbone `{name}` emits {} channels, config expects {}",
                backbone.dim(),
                cfg.dim
            )));
        }
        Ok(backbone)
    }

    /// Semantic and acoustic encoders for a config.
    pub fn build_pair(&self, cfg: &BackboneConfig) -> Result<BackbonePair> {
        let semantic = self.build(cfg, Branch::Semantic)?;
        let acoustic = self.build(cfg, Branch::Acoustic)?;
        if semantic.frame_rate() != acoustic.frame_rate() {
            return Err(Error::FrameRate(semantic.frame_rate(), acoustic.frame_rate()));
        }
        Ok(BackbonePair { semantic, acoustic })
    }
}

#[derive(Clone)]
pub struct BackbonePair {
    pub semantic: Arc<dyn Backbone>,
    pub acoustic: Arc<dyn Backbone>,
}

impl BackbonePair {
    /// Runs both encoders and truncates their outputs to a common length.
    pub fn extract(&self, wav: &Waveform) -> Result<UttFeatures> {
        let semantic = self.semantic.extract_semantic(wav)?;
        let acoustic = self.acoustic.extract_acoustic_stack(wav)?;
        UttFeatures::new(semantic, acoustic)
    }
}

/// Encoder outputs for one utterance, length-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct UttFeatures {
    pub semantic: FeatureSequence,
    pub acoustic: LayerStack,
}

impl UttFeatures {
    pub fn new(semantic: FeatureSequence, acoustic: LayerStack) -> Result<Self> {
        if semantic.frame_rate != acoustic.frame_rate {
            return Err(Error::FrameRate(semantic.frame_rate, acoustic.frame_rate));
        }
        let t = semantic.len().min(acoustic.len());
        let semantic = if semantic.len() > t { semantic.truncated(t) } else { semantic };
        let acoustic = if acoustic.len() > t { acoustic.truncated(t) } else { acoustic };
        Ok(UttFeatures { semantic, acoustic })
    }

    pub fn frames(&self) -> usize {
        self.semantic.len()
    }
}

/// Features for every utterance of a corpus, keyed by utt_id. Encoders are
/// frozen, so features are computed once and reused across epochs.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    features: HashMap<String, Arc<UttFeatures>>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, utt_id: impl Into<String>, features: UttFeatures) {
        self.features.insert(utt_id.into(), Arc::new(features));
    }

    pub fn get(&self, utt_id: &str) -> Result<&UttFeatures> {
        self.features
            .get(utt_id)
            .map(|f| f.as_ref())
            .ok_or_else(|| Error::UnknownUtterance(utt_id.to_string()))
    }

    pub fn contains(&self, utt_id: &str) -> bool {
        self.features.contains_key(utt_id)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Loads and encodes every utterance not already present. Relative wav
    /// paths are resolved against `base_dir`.
    pub fn extend_from_manifest<'a>(
        &mut self,
        utts: impl IntoIterator<Item = &'a Utterance>,
        base_dir: &Path,
        backbones: &BackbonePair,
    ) -> Result<()> {
        for utt in utts {
            if self.contains(&utt.utt_id) {
                continue;
            }
            let wav = read_wav(&utt.resolve_wav_path(base_dir))?;
            self.insert(utt.utt_id.clone(), backbones.extract(&wav)?);
        }
        Ok(())
    }
}
