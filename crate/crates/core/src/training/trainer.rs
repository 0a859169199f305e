use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{pair_batch_loss, utterance_batch_loss, LossBreakdown};
use super::{LabelCondition, TrainConfig};
use crate::backbone::FeatureStore;
use crate::datamodel::{DatasetSplit, SpeechPair, Utterance};
use crate::error::{Error, Result};
use crate::eval::system_level_srcc;
use crate::samos::SaMos;

/// Computes the selection statistic after each epoch. `None` marks an epoch
/// where it is undefined; such epochs never count as improvements.
pub trait DevValidator {
    fn dev_srcc(&mut self, model: &SaMos, epoch: usize) -> Result<Option<f64>>;
}

impl<F> DevValidator for F
where
    F: FnMut(&SaMos, usize) -> Result<Option<f64>>,
{
    fn dev_srcc(&mut self, model: &SaMos, epoch: usize) -> Result<Option<f64>> {
        self(model, epoch)
    }
}

/// System-level SRCC of absolute predictions over the utterances that appear
/// in the dev pairs.
pub struct SystemSrccValidator<'a> {
    store: &'a FeatureStore,
    utterances: Vec<Utterance>,
}

impl<'a> SystemSrccValidator<'a> {
    pub fn new(dev: &DatasetSplit, store: &'a FeatureStore) -> Result<Self> {
        let utterances: Vec<Utterance> = dev.paired_utterances().into_iter().cloned().collect();
        if utterances.is_empty() {
            return Err(Error::Empty("dev split has no paired utterances".into()));
        }
        for u in &utterances {
            u.require_mos()?;
            store.get(&u.utt_id)?;
        }
        let systems: BTreeSet<&str> = utterances.iter().map(|u| u.system_id.as_str()).collect();
        if systems.len() < 2 {
            return Err(Error::TooFewSystems(systems.len()));
        }
        Ok(SystemSrccValidator { store, utterances })
    }
}

impl DevValidator for SystemSrccValidator<'_> {
    fn dev_srcc(&mut self, model: &SaMos, epoch: usize) -> Result<Option<f64>> {
        let mut scores = BTreeMap::new();
        for u in &self.utterances {
            scores.insert(u.utt_id.clone(), model.score(self.store.get(&u.utt_id)?)?);
        }
        match system_level_srcc(&scores, &self.utterances) {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedCorrelation(why)) => {
                warn!("epoch {epoch}: dev SRCC undefined ({why})");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// Tracks the best epoch (strict improvement, earliest wins ties) and the
/// number of epochs since it.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTracker {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl SelectionTracker {
    pub fn new(patience: usize) -> Self {
        SelectionTracker {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records an epoch; returns whether it became the new best.
    pub fn observe(&mut self, epoch: usize, srcc: Option<f64>) -> bool {
        let improved = match (srcc, self.best) {
            (Some(v), None) => !v.is_nan(),
            (Some(v), Some((_, best))) => v > best,
            (None, _) => false,
        };
        if improved {
            self.best = srcc.map(|v| (epoch, v));
            self.since_best = 0;
        } else if self.best.is_some() {
            self.since_best += 1;
        }
        improved
    }

    /// Patience counts from the best epoch, so leading epochs with an
    /// undefined SRCC never stop training on their own.
    pub fn should_stop(&self) -> bool {
        self.best.is_some() && self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub loss_m: Option<f64>,
    pub loss_p: Option<f64>,
    pub loss: f64,
    pub dev_srcc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub seed: u64,
    pub best_model: SaMos,
    pub best_epoch: usize,
    pub best_dev_srcc: f64,
    pub epochs: Vec<EpochReport>,
    pub stopped_early: bool,
}

/// One unit of training data.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingExample {
    Pair(SpeechPair),
    Utterance { utt_id: String, mos: f64 },
}

fn training_examples(split: &DatasetSplit, cfg: &TrainConfig) -> Result<Vec<TrainingExample>> {
    let examples: Vec<TrainingExample> = match cfg.label_condition {
        LabelCondition::MosOnly => split
            .paired_utterances()
            .into_iter()
            .map(|u| {
                Ok(TrainingExample::Utterance {
                    utt_id: u.utt_id.clone(),
                    mos: u.require_mos()?,
                })
            })
            .collect::<Result<_>>()?,
        _ => {
            let mut v: Vec<TrainingExample> = split.pairs.iter().cloned().map(TrainingExample::Pair).collect();
            if cfg.swap_augment {
                v.extend(split.pairs.iter().map(|p| TrainingExample::Pair(p.swapped())));
            }
            v
        }
    };
    if examples.is_empty() {
        return Err(Error::Empty(format!("{} split has no training examples", split.name)));
    }
    Ok(examples)
}

/// Loss of a batch and its gradient with respect to every parameter.
pub fn batch_gradient(
    model: &SaMos,
    store: &FeatureStore,
    condition: LabelCondition,
    batch: &[&TrainingExample],
) -> Result<(LossBreakdown, SaMos)> {
    let mut grads = model.zeros_like();
    let loss = accumulate_gradient(model, store, condition, batch, &mut grads)?;
    Ok((loss, grads))
}

fn accumulate_gradient(
    model: &SaMos,
    store: &FeatureStore,
    condition: LabelCondition,
    batch: &[&TrainingExample],
    grads: &mut SaMos,
) -> Result<LossBreakdown> {
    let pairs: Vec<&SpeechPair> = batch
        .iter()
        .filter_map(|e| match e {
            TrainingExample::Pair(p) => Some(p),
            TrainingExample::Utterance { .. } => None,
        })
        .collect();
    if !pairs.is_empty() {
        if pairs.len() != batch.len() {
            return Err(Error::Config("batch mixes pairs and single utterances".into()));
        }
        let mut forwards = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let fx = store.get(&p.x_id)?;
            let fy = store.get(&p.y_id)?;
            forwards.push((fx, model.forward(fx)?, fy, model.forward(fy)?));
        }
        let preds: Vec<(f64, f64)> = forwards.iter().map(|(_, (sx, _), _, (sy, _))| (*sx, *sy)).collect();
        let (loss, d) = pair_batch_loss(condition, &pairs, &preds)?;
        for ((fx, (_, tx), fy, (_, ty)), (dx, dy)) in forwards.iter().zip(d) {
            model.backward(fx, tx, dx, grads);
            model.backward(fy, ty, dy, grads);
        }
        return Ok(loss);
    }
    if condition != LabelCondition::MosOnly {
        return Err(Error::Config(format!("{condition} training needs pairs")));
    }
    let mut forwards = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for e in batch {
        if let TrainingExample::Utterance { utt_id, mos } = e {
            let f = store.get(utt_id)?;
            forwards.push((f, model.forward(f)?));
            labels.push(*mos);
        }
    }
    let preds: Vec<f64> = forwards.iter().map(|(_, (s, _))| *s).collect();
    let (loss, d) = utterance_batch_loss(&preds, &labels)?;
    for ((f, (_, t)), g) in forwards.iter().zip(d) {
        model.backward(f, t, g, grads);
    }
    Ok(loss)
}

/// Plain SGD over shuffled examples. After every epoch the validator scores
/// the model; the best-scoring parameters are kept and training stops once
/// `patience` epochs pass without strict improvement.
pub fn train(
    initial: SaMos,
    split: &DatasetSplit,
    store: &FeatureStore,
    cfg: &TrainConfig,
    seed: u64,
    validator: &mut dyn DevValidator,
) -> Result<TrainRun> {
    cfg.validate()?;
    let examples = training_examples(split, cfg)?;
    let step_size = match cfg.label_condition {
        LabelCondition::MosOnly => 2 * cfg.batch_size,
        _ => cfg.batch_size,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut model = initial;
    let mut grads = model.zeros_like();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut tracker = SelectionTracker::new(cfg.patience);
    let mut best_model = None;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut sum_m, mut sum_p, mut sum) = (0.0, 0.0, 0.0);
        for (step, chunk) in order.chunks(step_size).enumerate() {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &examples[i]).collect();
            grads.fill(0.0);
            let loss = accumulate_gradient(&model, store, cfg.label_condition, &batch, &mut grads).map_err(
                |e| match e {
                    Error::NonFinite(detail) => Error::NonFiniteLoss { epoch, step, detail },
                    other => other,
                },
            )?;
            if !loss.total.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!("loss {} (mos {:?}, pref {:?})", loss.total, loss.mos, loss.pref),
                });
            }
            let w = batch.len() as f64;
            sum_m += loss.mos.unwrap_or(0.0) * w;
            sum_p += loss.pref.unwrap_or(0.0) * w;
            sum += loss.total * w;
            model.sgd_step(&grads, cfg.lr);
        }
        let n = examples.len() as f64;
        let sample = match examples[0] {
            TrainingExample::Pair(_) => pair_batch_loss_kinds(cfg.label_condition),
            TrainingExample::Utterance { .. } => (true, false),
        };
        let dev_srcc = validator.dev_srcc(&model, epoch)?;
        let report = EpochReport {
            epoch,
            loss_m: sample.0.then_some(sum_m / n),
            loss_p: sample.1.then_some(sum_p / n),
            loss: sum / n,
            dev_srcc,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: loss {:.6} dev_srcc {}",
            report.loss,
            dev_srcc.map_or("undefined".to_string(), |v| format!("{v:.4}"))
        );
        epochs.push(report);
        if tracker.observe(epoch, dev_srcc) {
            best_model = Some(model.clone());
        }
        if tracker.should_stop() {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    let (best_epoch, best_dev_srcc) = tracker
        .best()
        .ok_or_else(|| Error::UndefinedCorrelation("dev SRCC was undefined after every epoch".into()))?;
    Ok(TrainRun {
        seed,
        best_model: best_model.expect("tracked alongside the best epoch"),
        best_epoch,
        best_dev_srcc,
        epochs,
        stopped_early,
    })
}

/// Which loss terms a pair condition reports: (MOS, preference).
fn pair_batch_loss_kinds(condition: LabelCondition) -> (bool, bool) {
    match condition {
        LabelCondition::La => (true, true),
        LabelCondition::Lm => (false, true),
        LabelCondition::MosOnly => (true, false),
    }
}

const EPOCH_LOG_HEADER: [&str; 6] = ["epoch", "loss_m", "loss_p", "loss", "dev_srcc", "seconds"];

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_epoch_log(path: &Path, epochs: &[EpochReport]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    w.write_record(EPOCH_LOG_HEADER).map_err(|e| Error::csv(path, e))?;
    for e in epochs {
        w.write_record([
            e.epoch.to_string(),
            opt_cell(e.loss_m),
            opt_cell(e.loss_p),
            e.loss.to_string(),
            opt_cell(e.dev_srcc),
            format!("{:.3}", e.seconds),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = i as u64 + 2;
        let num = |k: usize| -> Result<Option<f64>> {
            let cell = rec.get(k).unwrap_or("");
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>()
                .map(Some)
                .map_err(|e| parse_err(line, format!("column {}: {e}", EPOCH_LOG_HEADER[k])))
        };
        out.push(EpochReport {
            epoch: rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|e| parse_err(line, format!("epoch: {e}")))?,
            loss_m: num(1)?,
            loss_p: num(2)?,
            loss: num(3)?.ok_or_else(|| parse_err(line, "missing loss".into()))?,
            dev_srcc: num(4)?,
            seconds: num(5)?.unwrap_or(0.0),
        });
    }
    Ok(out)
}
