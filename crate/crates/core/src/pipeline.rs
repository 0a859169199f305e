//! Experiment configuration files and the load-extract-pair-train sequence
//! shared by the command line and the end-to-end tests.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, BackbonePair, BackboneRegistry, FeatureStore};
use crate::datamodel::{load_manifest, Utterance};
use crate::error::{Error, Result};
use crate::pairgen::{build_scenario, PairGenConfig, Scenario, ScenarioManifests, ScenarioSplits};
use crate::samos::ModelConfig;
use crate::training::{Experiment, LabelCondition, MultiSeedReport, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub train_manifest: PathBuf,
    pub dev_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

/// Top-level TOML file. Relative paths are resolved against the file's
/// directory when loaded with [`ExperimentConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub pairs: PairGenConfig,
    #[serde(default)]
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data.train_manifest,
            &mut cfg.data.dev_manifest,
            &mut cfg.data.test_manifest,
            &mut cfg.out_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pairs.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.feature_dim != self.backbone.dim {
            return Err(Error::Config(format!(
                "model.feature_dim {} differs from backbone.dim {}",
                self.model.feature_dim, self.backbone.dim
            )));
        }
        Ok(())
    }

    /// Settings for the bundled synthetic corpus: full-size network, a
    /// larger step size than the default so the small corpus trains within
    /// 200 epochs.
    pub fn toy(data: DataConfig) -> Self {
        ExperimentConfig {
            data,
            pairs: PairGenConfig::default(),
            backbone: BackboneConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig {
                lr: TOY_LR,
                max_epochs: 200,
                ..TrainConfig::default()
            },
            out_dir: default_out_dir(),
        }
    }
}

/// SGD step size used for the synthetic corpus.
pub const TOY_LR: f64 = 0.01;

/// Manifests, encoders and cached features for all three splits.
pub struct PreparedData {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub backbones: BackbonePair,
    pub store: FeatureStore,
}

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

/// Loads the manifests and runs both encoders over every utterance once.
pub fn prepare_data(cfg: &ExperimentConfig, registry: &BackboneRegistry) -> Result<PreparedData> {
    let mos_required = cfg.train.label_condition != LabelCondition::Lm;
    let train = load_manifest(&cfg.data.train_manifest, mos_required)?;
    // dev selection and test correlations always need absolute labels
    let dev = load_manifest(&cfg.data.dev_manifest, true)?;
    let test = load_manifest(&cfg.data.test_manifest, false)?;
    let backbones = registry.build_pair(&cfg.backbone)?;
    let mut store = FeatureStore::new();
    for (path, utts) in [
        (&cfg.data.train_manifest, &train),
        (&cfg.data.dev_manifest, &dev),
        (&cfg.data.test_manifest, &test),
    ] {
        store.extend_from_manifest(utts.iter(), manifest_dir(path), &backbones)?;
    }
    info!("extracted features for {} utterances", store.len());
    Ok(PreparedData {
        train,
        dev,
        test,
        backbones,
        store,
    })
}

impl PreparedData {
    pub fn splits(&self, scenario: Scenario, pairs: &PairGenConfig) -> Result<ScenarioSplits> {
        build_scenario(
            scenario,
            ScenarioManifests {
                train: &self.train,
                dev: &self.dev,
                test: &self.test,
            },
            pairs,
        )
    }
}

/// `<out_dir>/<condition>_<scenario>`
pub fn run_dir(out_dir: &Path, condition: LabelCondition, scenario: Scenario) -> PathBuf {
    out_dir.join(format!("{condition}_{scenario}"))
}

/// Builds the scenario's pairs and trains every seed in `cfg.train.seeds`.
pub fn run_scenario(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    scenario: Scenario,
    write_artifacts: bool,
) -> Result<MultiSeedReport> {
    let splits = data.splits(scenario, &cfg.pairs)?;
    info!(
        "{scenario}: {} train / {} dev / {} test pairs",
        splits.train.pairs.len(),
        splits.dev.pairs.len(),
        splits.test.pairs.len()
    );
    let experiment = Experiment {
        model: cfg.model.clone(),
        backbone: cfg.backbone.clone(),
        train: cfg.train.clone(),
        scenario: Some(scenario),
        splits: &splits,
        store: &data.store,
        out_dir: write_artifacts.then(|| run_dir(&cfg.out_dir, cfg.train.label_condition, scenario)),
    };
    experiment.multi_seed_run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::toy(DataConfig {
            train_manifest: "train.csv".into(),
            dev_manifest: "dev.csv".into(),
            test_manifest: "test.csv".into(),
        });
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, &text).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded.data.dev_manifest, dir.path().join("dev.csv"));
        assert_eq!(loaded.out_dir, dir.path().join("runs"));
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "[data]\ntrain_manifest = \"a.csv\"\ndev_manifest = \"b.csv\"\ntest_manifest = \"c.csv\"\n",
        )
        .unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.model.feature_dim, 768);
        assert!(cfg.validate().is_ok());
        let bad = ExperimentConfig {
            backbone: BackboneConfig {
                dim: 16,
                ..BackboneConfig::default()
            },
            ..cfg
        };
        assert!(bad.validate().is_err());
    }
}
