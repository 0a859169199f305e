use serde::{Deserialize, Serialize};

use super::LabelCondition;
use crate::datamodel::{PreferenceLabel, SpeechPair};
use crate::error::{Error, Result};
use crate::samos::{preference_from_diff, preference_slope};

fn check_batch(len: usize, other: usize) -> Result<()> {
    if len != other {
        return Err(Error::LengthMismatch(len, other));
    }
    if len == 0 {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    Ok(())
}

/// Mean over pairs of `(s_x - pred_x)^2 + (s_y - pred_y)^2`.
pub fn mos_loss(preds: &[(f64, f64)], labels: &[(f64, f64)]) -> Result<f64> {
    check_batch(preds.len(), labels.len())?;
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&(px, py), &(sx, sy))| (sx - px).powi(2) + (sy - py).powi(2))
        .sum();
    Ok(sum / preds.len() as f64)
}

/// Mean over pairs of `(s_p - pred_p)^2`.
pub fn pref_loss(preds: &[f64], labels: &[PreferenceLabel]) -> Result<f64> {
    check_batch(preds.len(), labels.len())?;
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, l)| (l.as_f64() - p).powi(2))
        .sum();
    Ok(sum / preds.len() as f64)
}

/// Mean squared error over single utterances.
pub fn utterance_mos_loss(preds: &[f64], labels: &[f64]) -> Result<f64> {
    check_batch(preds.len(), labels.len())?;
    let sum: f64 = preds.iter().zip(labels).map(|(p, s)| (s - p).powi(2)).sum();
    Ok(sum / preds.len() as f64)
}

/// Combines the two terms as the label condition prescribes. Missing terms
/// required by the condition are an error.
pub fn total_loss(condition: LabelCondition, l_m: Option<f64>, l_p: Option<f64>) -> Result<f64> {
    let need = |v: Option<f64>, what: &str| {
        v.ok_or_else(|| Error::Config(format!("{condition} training needs the {what} loss")))
    };
    Ok(match condition {
        LabelCondition::La => need(l_m, "MOS")? + need(l_p, "preference")?,
        LabelCondition::Lm => need(l_p, "preference")?,
        LabelCondition::MosOnly => need(l_m, "MOS")?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mos: Option<f64>,
    pub pref: Option<f64>,
    pub total: f64,
}

/// Loss of a batch of pairs and its gradient with respect to each predicted
/// MOS. MOS labels are read only when the condition uses them.
pub fn pair_batch_loss(
    condition: LabelCondition,
    pairs: &[&SpeechPair],
    preds: &[(f64, f64)],
) -> Result<(LossBreakdown, Vec<(f64, f64)>)> {
    check_batch(pairs.len(), preds.len())?;
    if condition == LabelCondition::MosOnly {
        return Err(Error::Config("MOS-only training runs on utterances, not pairs".into()));
    }
    let n = pairs.len() as f64;
    let mut grads = vec![(0.0, 0.0); pairs.len()];
    let mut l_m = None;
    if condition == LabelCondition::La {
        let labels = pairs
            .iter()
            .map(|p| match (p.s_m_x, p.s_m_y) {
                (Some(x), Some(y)) => Ok((x, y)),
                (None, _) => Err(Error::MissingMos(p.x_id.clone())),
                (_, None) => Err(Error::MissingMos(p.y_id.clone())),
            })
            .collect::<Result<Vec<_>>>()?;
        l_m = Some(mos_loss(preds, &labels)?);
        for (g, (&(px, py), &(sx, sy))) in grads.iter_mut().zip(preds.iter().zip(&labels)) {
            g.0 += -2.0 * (sx - px) / n;
            g.1 += -2.0 * (sy - py) / n;
        }
    }
    let prefs: Vec<f64> = preds.iter().map(|&(x, y)| preference_from_diff(x - y)).collect();
    let labels: Vec<PreferenceLabel> = pairs.iter().map(|p| p.s_p).collect();
    let l_p = pref_loss(&prefs, &labels)?;
    for (g, (&f, l)) in grads.iter_mut().zip(prefs.iter().zip(&labels)) {
        let d_diff = -2.0 * (l.as_f64() - f) * preference_slope(f) / n;
        g.0 += d_diff;
        g.1 -= d_diff;
    }
    let total = total_loss(condition, l_m, Some(l_p))?;
    Ok((
        LossBreakdown {
            mos: l_m,
            pref: Some(l_p),
            total,
        },
        grads,
    ))
}

/// Loss of a batch of single utterances and its gradient.
pub fn utterance_batch_loss(preds: &[f64], labels: &[f64]) -> Result<(LossBreakdown, Vec<f64>)> {
    let l_m = utterance_mos_loss(preds, labels)?;
    let n = preds.len() as f64;
    let grads = preds.iter().zip(labels).map(|(p, s)| -2.0 * (s - p) / n).collect();
    Ok((
        LossBreakdown {
            mos: Some(l_m),
            pref: None,
            total: l_m,
        },
        grads,
    ))
}
