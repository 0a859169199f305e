//! Preference accuracy, rank correlations, test-split evaluation and the
//! cross-run summary table.

mod metrics;
mod report;

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

pub use metrics::{
    accuracy_summary, average_ranks, preference_accuracy, sign_accuracy, spearman_srcc, system_level_srcc, utterance_level_srcc,
    AccuracySummary,
};
pub use report::{collect_runs, render_report, ReportFormat, ReportRow, RunGroupInfo, RUN_GROUP_FILE};

use crate::backbone::FeatureStore;
use crate::datamodel::{DatasetSplit, PredictionRecord, SpeechPair, Utterance};
use crate::error::{Error, Result};
use crate::samos::{prediction_record, SaMos};
use crate::training::LabelCondition;

/// Metrics of one model on one pair set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Option<String>,
    pub label_condition: Option<LabelCondition>,
    pub seed: Option<u64>,
    pub acc: f64,
    /// Accuracy over pairs whose label is not a tie.
    pub acc_excluding_ties: Option<f64>,
    /// Absent when the utterances lack MOS labels or the correlation is
    /// undefined.
    pub utt_srcc: Option<f64>,
    pub sys_srcc: Option<f64>,
    pub n_pairs: usize,
    pub n_ties: usize,
}

/// Predicted MOS for every utterance referenced by `pairs`, each scored once.
pub fn score_paired_utterances(
    model: &SaMos,
    store: &FeatureStore,
    pairs: &[SpeechPair],
) -> Result<BTreeMap<String, f64>> {
    let mut scores = BTreeMap::new();
    for p in pairs {
        for id in [&p.x_id, &p.y_id] {
            if !scores.contains_key(id) {
                scores.insert(id.clone(), model.score(store.get(id)?)?);
            }
        }
    }
    Ok(scores)
}

fn optional_srcc(kind: &str, value: Result<f64>) -> Result<Option<f64>> {
    match value {
        Ok(v) => Ok(Some(v)),
        Err(e @ (Error::UndefinedCorrelation(_) | Error::TooFewSystems(_) | Error::MissingMos(_))) => {
            warn!("{kind} SRCC not reported: {e}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Scores every pair, then computes accuracy and both correlation levels on
/// the de-duplicated utterance set.
pub fn evaluate_pairs(
    model: &SaMos,
    store: &FeatureStore,
    pairs: &[SpeechPair],
    utterances: &[Utterance],
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    if pairs.is_empty() {
        return Err(Error::Empty("no pairs to evaluate".into()));
    }
    let scores = score_paired_utterances(model, store, pairs)?;
    let preds = pairs
        .iter()
        .map(|p| prediction_record(&p.x_id, &p.y_id, scores[&p.x_id], scores[&p.y_id]))
        .collect::<Result<Vec<_>>>()?;
    let acc = accuracy_summary(&preds, pairs)?;
    let report = EvalReport {
        scenario: None,
        label_condition: None,
        seed: None,
        acc: acc.acc,
        acc_excluding_ties: acc.acc_excluding_ties,
        utt_srcc: optional_srcc("utterance-level", utterance_level_srcc(&scores, utterances))?,
        sys_srcc: optional_srcc("system-level", system_level_srcc(&scores, utterances))?,
        n_pairs: acc.n_pairs,
        n_ties: acc.n_ties,
    };
    Ok((report, preds))
}

pub fn evaluate_split(
    model: &SaMos,
    store: &FeatureStore,
    split: &DatasetSplit,
) -> Result<(EvalReport, Vec<PredictionRecord>)> {
    evaluate_pairs(model, store, &split.pairs, &split.utterances)
}

pub fn save_report(path: &Path, report: &EvalReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Serde(e.to_string()))?;
    crate::datamodel::write_text(path, &(json + "\n"))
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}
