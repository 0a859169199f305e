use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::datamodel::{PredictionRecord, PreferenceLabel, SpeechPair, Utterance};
use crate::error::{Error, Result};

fn check_aligned(preds: &[PredictionRecord], labels: &[SpeechPair]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(Error::Empty("no pairs to score".into()));
    }
    for (index, (p, l)) in preds.iter().zip(labels).enumerate() {
        if p.x_id != l.x_id || p.y_id != l.y_id {
            return Err(Error::Misaligned {
                index,
                pred: format!("{}, {}", p.x_id, p.y_id),
                label: format!("{}, {}", l.x_id, l.y_id),
            });
        }
        if p.pref_hat.is_nan() {
            return Err(Error::NonFinite(format!("preference for ({}, {})", p.x_id, p.y_id)));
        }
    }
    Ok(())
}

/// Fraction of pairs whose predicted preference sign equals the label
/// exactly. A nonzero prediction on a tied label is an error, as is a zero
/// prediction on a decided one.
pub fn preference_accuracy(preds: &[PredictionRecord], labels: &[SpeechPair]) -> Result<f64> {
    check_aligned(preds, labels)?;
    let pref: Vec<f64> = preds.iter().map(|p| p.pref_hat).collect();
    let signs: Vec<PreferenceLabel> = labels.iter().map(|l| l.s_p).collect();
    sign_accuracy(&pref, &signs)
}

/// Same rule on bare arrays of predicted preferences and labels.
pub fn sign_accuracy(pref_hat: &[f64], labels: &[PreferenceLabel]) -> Result<f64> {
    if pref_hat.len() != labels.len() {
        return Err(Error::LengthMismatch(pref_hat.len(), labels.len()));
    }
    if pref_hat.is_empty() {
        return Err(Error::Empty("no pairs to score".into()));
    }
    if let Some(i) = pref_hat.iter().position(|p| p.is_nan()) {
        return Err(Error::NonFinite(format!("preference at index {i}")));
    }
    let correct = pref_hat
        .iter()
        .zip(labels)
        .filter(|(p, l)| PreferenceLabel::sign_of(**p) == **l)
        .count();
    Ok(correct as f64 / pref_hat.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub acc: f64,
    /// Accuracy over pairs with a nonzero label; absent when every label ties.
    pub acc_excluding_ties: Option<f64>,
    pub n_pairs: usize,
    pub n_ties: usize,
}

pub fn accuracy_summary(preds: &[PredictionRecord], labels: &[SpeechPair]) -> Result<AccuracySummary> {
    let acc = preference_accuracy(preds, labels)?;
    let (decided_p, decided_l): (Vec<PredictionRecord>, Vec<SpeechPair>) = preds
        .iter()
        .zip(labels)
        .filter(|(_, l)| l.s_p != PreferenceLabel::Equal)
        .map(|(p, l)| (p.clone(), l.clone()))
        .unzip();
    let n_ties = labels.len() - decided_l.len();
    let acc_excluding_ties = if decided_l.is_empty() {
        None
    } else {
        Some(preference_accuracy(&decided_p, &decided_l)?)
    };
    Ok(AccuracySummary {
        acc,
        acc_excluding_ties,
        n_pairs: labels.len(),
        n_ties,
    })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman_srcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!("{} observation(s)", pred.len())));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    pearson(&average_ranks(pred), &average_ranks(truth))
        .ok_or_else(|| Error::UndefinedCorrelation("constant input vector".into()))
}

fn labelled_scores<'a>(
    utt_preds: &'a BTreeMap<String, f64>,
    utterances: &'a [Utterance],
) -> Result<Vec<(&'a Utterance, f64)>> {
    let index: HashMap<&str, &Utterance> = utterances.iter().map(|u| (u.utt_id.as_str(), u)).collect();
    utt_preds
        .iter()
        .map(|(id, &score)| {
            let utt = index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::UnknownUtterance(id.clone()))?;
            utt.require_mos()?;
            Ok((utt, score))
        })
        .collect()
}

/// SRCC between predicted and true MOS over the scored utterances.
pub fn utterance_level_srcc(utt_preds: &BTreeMap<String, f64>, utterances: &[Utterance]) -> Result<f64> {
    let scored = labelled_scores(utt_preds, utterances)?;
    let pred: Vec<f64> = scored.iter().map(|(_, s)| *s).collect();
    let truth: Vec<f64> = scored.iter().map(|(u, _)| u.mos.expect("checked")).collect();
    spearman_srcc(&pred, &truth)
}

/// SRCC between per-system mean prediction and per-system mean true MOS,
/// both over the scored utterances of each system.
pub fn system_level_srcc(utt_preds: &BTreeMap<String, f64>, utterances: &[Utterance]) -> Result<f64> {
    let scored = labelled_scores(utt_preds, utterances)?;
    let mut systems: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for (utt, score) in scored {
        let entry = systems.entry(utt.system_id.as_str()).or_insert((0.0, 0.0, 0));
        entry.0 += score;
        entry.1 += utt.mos.expect("checked");
        entry.2 += 1;
    }
    if systems.len() < 2 {
        return Err(Error::TooFewSystems(systems.len()));
    }
    let (pred, truth): (Vec<f64>, Vec<f64>) = systems
        .values()
        .map(|&(p, t, n)| (p / n as f64, t / n as f64))
        .unzip();
    spearman_srcc(&pred, &truth)
}
