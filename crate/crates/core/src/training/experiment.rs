use std::path::{Path, PathBuf};

use log::{error, info};
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_SCHEMA};
use super::trainer::{train, write_epoch_log, SystemSrccValidator, TrainRun};
use super::TrainConfig;
use crate::backbone::{BackboneConfig, FeatureStore};
use crate::datamodel::{save_pairs, save_predictions, PredictionRecord};
use crate::error::{Error, Result};
use crate::eval::{evaluate_split, save_report, EvalReport, RunGroupInfo, RUN_GROUP_FILE};
use crate::pairgen::{Scenario, ScenarioSplits};
use crate::samos::{ModelConfig, SaMos};

/// Everything needed to train and test one scenario under one label
/// condition, for any number of seeds.
pub struct Experiment<'a> {
    pub model: ModelConfig,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub scenario: Option<Scenario>,
    pub splits: &'a ScenarioSplits,
    pub store: &'a FeatureStore,
    /// When set, artifacts go to `<out_dir>/seed_<n>/`.
    pub out_dir: Option<PathBuf>,
}

pub struct SeedRun {
    pub seed: u64,
    pub run: TrainRun,
    pub checkpoint: Checkpoint,
    pub report: EvalReport,
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub acc: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub seeds: Vec<SeedOutcome>,
    /// Arithmetic mean of the ACC of every seed that finished.
    pub mean_acc: Option<f64>,
    pub complete: bool,
}

impl Experiment<'_> {
    fn seed_dir(&self, seed: u64) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join(format!("seed_{seed}")))
    }

    /// Trains from the seed, keeps the best dev-SRCC checkpoint and evaluates
    /// it on the test split.
    pub fn run_seed(&self, seed: u64) -> Result<SeedRun> {
        let model = SaMos::new(self.model.clone(), seed)?;
        let mut validator = SystemSrccValidator::new(&self.splits.dev, self.store)?;
        let run = train(model, &self.splits.train, self.store, &self.train, seed, &mut validator)?;
        let checkpoint = Checkpoint {
            meta: CheckpointMeta {
                schema: CHECKPOINT_SCHEMA.into(),
                model: self.model.clone(),
                backbone: self.backbone.clone(),
                train: self.train.clone(),
                scenario: self.scenario,
                seed,
                epoch: run.best_epoch,
                dev_srcc: Some(run.best_dev_srcc),
            },
            model: run.best_model.clone(),
        };
        let (mut report, predictions) = evaluate_split(&checkpoint.model, self.store, &self.splits.test)?;
        report.scenario = self.scenario.map(|s| s.to_string());
        report.label_condition = Some(self.train.label_condition);
        report.seed = Some(seed);
        info!(
            "seed {seed}: best epoch {} (dev SRCC {:.4}), test ACC {:.4}",
            run.best_epoch, run.best_dev_srcc, report.acc
        );
        let seed_run = SeedRun {
            seed,
            run,
            checkpoint,
            report,
            predictions,
        };
        if let Some(dir) = self.seed_dir(seed) {
            seed_run.write_to(&dir)?;
        }
        Ok(seed_run)
    }

    /// Runs every configured seed. A failing seed is recorded and the rest
    /// still run.
    pub fn multi_seed_run(&self) -> Result<MultiSeedReport> {
        self.train.validate()?;
        if let Some(dir) = &self.out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            if let Some(scenario) = self.scenario {
                let info = RunGroupInfo {
                    condition: self.train.label_condition,
                    scenario,
                    seeds: self.train.seeds.clone(),
                };
                let json = serde_json::to_string_pretty(&info).map_err(|e| Error::Serde(e.to_string()))?;
                crate::datamodel::write_text(&dir.join(RUN_GROUP_FILE), &(json + "\n"))?;
            }
            for (name, split) in [
                ("train", &self.splits.train),
                ("dev", &self.splits.dev),
                ("test", &self.splits.test),
            ] {
                save_pairs(&dir.join(format!("pairs_{name}.csv")), &split.pairs)?;
            }
        }
        let mut seeds = Vec::new();
        for &seed in &self.train.seeds {
            seeds.push(match self.run_seed(seed) {
                Ok(r) => SeedOutcome {
                    seed,
                    acc: Some(r.report.acc),
                    best_epoch: Some(r.run.best_epoch),
                    error: None,
                },
                Err(e) => {
                    error!("seed {seed} failed: {e}");
                    SeedOutcome {
                        seed,
                        acc: None,
                        best_epoch: None,
                        error: Some(e.to_string()),
                    }
                }
            });
        }
        let accs: Vec<f64> = seeds.iter().filter_map(|s| s.acc).collect();
        let report = MultiSeedReport {
            complete: accs.len() == seeds.len(),
            mean_acc: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
            seeds,
        };
        if let Some(dir) = &self.out_dir {
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Serde(e.to_string()))?;
            crate::datamodel::write_text(&dir.join("summary.json"), &(json + "\n"))?;
        }
        Ok(report)
    }
}

impl SeedRun {
    /// `checkpoint.psqa`, `epochs.csv`, `predictions.csv` and `report.json`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.checkpoint.save(&dir.join("checkpoint.psqa"))?;
        write_epoch_log(&dir.join("epochs.csv"), &self.run.epochs)?;
        save_predictions(&dir.join("predictions.csv"), &self.predictions)?;
        save_report(&dir.join("report.json"), &self.report)
    }
}
