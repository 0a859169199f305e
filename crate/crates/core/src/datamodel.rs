//! Domain records shared by every stage: utterances, labelled speech pairs,
//! dataset splits and per-pair predictions, plus their CSV encodings.
//!
//! Manifest files use the header `utt_id,wav_path,system_id,mos,transcript`
//! (an optional trailing `sample_rate` column is accepted). Pair files use
//! `x_id,y_id,s_m_x,s_m_y,s_p,cluster_id`, with `cluster_id = -1` for pairs
//! that do not come from a content cluster. Empty cells mean "absent".
//! Files are UTF-8 with LF line endings.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["utt_id", "wav_path", "system_id", "mos", "transcript"];
pub const PAIR_HEADER: [&str; 6] = ["x_id", "y_id", "s_m_x", "s_m_y", "s_p", "cluster_id"];
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

pub const MOS_MIN: f64 = 1.0;
pub const MOS_MAX: f64 = 5.0;

/// One audio sample with its provenance and (optional) averaged MOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utt_id: String,
    /// As written in the manifest; relative paths are resolved against the
    /// manifest's directory when audio is loaded.
    pub wav_path: PathBuf,
    pub system_id: String,
    pub mos: Option<f64>,
    pub transcript: Option<String>,
    pub sample_rate: u32,
}

impl Utterance {
    pub fn validate(&self) -> Result<()> {
        if self.utt_id.is_empty() {
            return Err(Error::Config("empty utt_id".into()));
        }
        if let Some(mos) = self.mos {
            if !mos.is_finite() || !(MOS_MIN..=MOS_MAX).contains(&mos) {
                return Err(Error::MosOutOfRange {
                    utt_id: self.utt_id.clone(),
                    mos,
                });
            }
        }
        if self.sample_rate == 0 {
            return Err(Error::Config(format!(
                "utterance `{}` has a zero sample rate",
                self.utt_id
            )));
        }
        Ok(())
    }

    pub fn require_mos(&self) -> Result<f64> {
        self.mos
            .ok_or_else(|| Error::MissingMos(self.utt_id.clone()))
    }

    /// Audio location, resolving relative paths against `base_dir`.
    pub fn resolve_wav_path(&self, base_dir: &Path) -> PathBuf {
        if self.wav_path.is_absolute() {
            self.wav_path.clone()
        } else {
            base_dir.join(&self.wav_path)
        }
    }
}

/// Relative preference label `sgn(s_m_x - s_m_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum PreferenceLabel {
    Worse,
    Equal,
    Better,
}

impl PreferenceLabel {
    pub fn as_i8(self) -> i8 {
        match self {
            PreferenceLabel::Worse => -1,
            PreferenceLabel::Equal => 0,
            PreferenceLabel::Better => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_i8())
    }

    pub fn from_i64(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(PreferenceLabel::Worse),
            0 => Ok(PreferenceLabel::Equal),
            1 => Ok(PreferenceLabel::Better),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    /// Sign of a real value with exact zero comparison.
    pub fn sign_of(v: f64) -> Self {
        if v > 0.0 {
            PreferenceLabel::Better
        } else if v < 0.0 {
            PreferenceLabel::Worse
        } else {
            PreferenceLabel::Equal
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            PreferenceLabel::Worse => PreferenceLabel::Better,
            PreferenceLabel::Equal => PreferenceLabel::Equal,
            PreferenceLabel::Better => PreferenceLabel::Worse,
        }
    }
}

impl From<PreferenceLabel> for i8 {
    fn from(l: PreferenceLabel) -> i8 {
        l.as_i8()
    }
}

impl TryFrom<i8> for PreferenceLabel {
    type Error = Error;
    fn try_from(v: i8) -> Result<Self> {
        PreferenceLabel::from_i64(i64::from(v))
    }
}

impl fmt::Display for PreferenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// `sgn(s_m_x - s_m_y)` with exact equality for ties.
pub fn derive_preference_label(s_m_x: f64, s_m_y: f64) -> Result<PreferenceLabel> {
    if !s_m_x.is_finite() || !s_m_y.is_finite() {
        return Err(Error::NonFinite(format!(
            "MOS pair ({s_m_x}, {s_m_y})"
        )));
    }
    Ok(PreferenceLabel::sign_of(s_m_x - s_m_y))
}

/// The five-tuple `(x, y, s_m_x, s_m_y, s_p)` plus the content cluster the
/// pair was drawn from, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechPair {
    pub x_id: String,
    pub y_id: String,
    pub s_m_x: Option<f64>,
    pub s_m_y: Option<f64>,
    pub s_p: PreferenceLabel,
    pub cluster_id: Option<usize>,
}

impl SpeechPair {
    /// Pair labelled from two MOS values.
    pub fn labelled(
        x: &Utterance,
        y: &Utterance,
        cluster_id: Option<usize>,
    ) -> Result<Self> {
        let s_m_x = x.require_mos()?;
        let s_m_y = y.require_mos()?;
        Ok(SpeechPair {
            x_id: x.utt_id.clone(),
            y_id: y.utt_id.clone(),
            s_m_x: Some(s_m_x),
            s_m_y: Some(s_m_y),
            s_p: derive_preference_label(s_m_x, s_m_y)?,
            cluster_id,
        })
    }

    /// The same comparison presented in the opposite order.
    pub fn swapped(&self) -> Self {
        SpeechPair {
            x_id: self.y_id.clone(),
            y_id: self.x_id.clone(),
            s_m_x: self.s_m_y,
            s_m_y: self.s_m_x,
            s_p: self.s_p.reversed(),
            cluster_id: self.cluster_id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_id == self.y_id {
            return Err(Error::Config(format!(
                "pair compares `{}` with itself",
                self.x_id
            )));
        }
        if let (Some(x), Some(y)) = (self.s_m_x, self.s_m_y) {
            let derived = derive_preference_label(x, y)?;
            if derived != self.s_p {
                return Err(Error::Config(format!(
                    "pair ({}, {}) has s_p = {} but its MOS values give {}",
                    self.x_id, self.y_id, self.s_p, derived
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        })
    }
}

/// How the pairs of a split were constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioTag {
    Matched,
    Unmatched,
    None,
}

impl fmt::Display for ScenarioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioTag::Matched => "matched",
            ScenarioTag::Unmatched => "unmatched",
            ScenarioTag::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub utterances: Vec<Utterance>,
    pub pairs: Vec<SpeechPair>,
    pub scenario_tag: ScenarioTag,
}

impl DatasetSplit {
    pub fn utterance_index(&self) -> HashMap<&str, &Utterance> {
        self.utterances
            .iter()
            .map(|u| (u.utt_id.as_str(), u))
            .collect()
    }

    /// Utterances referenced by at least one pair, deduplicated, in order of
    /// first appearance.
    pub fn paired_utterances(&self) -> Vec<&Utterance> {
        let index = self.utterance_index();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for pair in &self.pairs {
            for id in [&pair.x_id, &pair.y_id] {
                if seen.insert(id.as_str()) {
                    if let Some(u) = index.get(id.as_str()) {
                        out.push(*u);
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let index = self.utterance_index();
        if index.len() != self.utterances.len() {
            let mut seen = HashSet::new();
            for u in &self.utterances {
                if !seen.insert(u.utt_id.as_str()) {
                    return Err(Error::DuplicateUtterance(u.utt_id.clone()));
                }
            }
        }
        for pair in &self.pairs {
            pair.validate()?;
            for id in [&pair.x_id, &pair.y_id] {
                if !index.contains_key(id.as_str()) {
                    return Err(Error::UnknownUtterance(id.clone()));
                }
            }
            if self.scenario_tag == ScenarioTag::Matched && pair.cluster_id.is_none() {
                return Err(Error::Config(format!(
                    "matched split `{}` holds pair ({}, {}) without a cluster id",
                    self.name, pair.x_id, pair.y_id
                )));
            }
        }
        Ok(())
    }
}

/// Predicted absolute scores for both members of a pair and the derived
/// preference score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub x_id: String,
    pub y_id: String,
    pub mos_hat_x: f64,
    pub mos_hat_y: f64,
    pub pref_hat: f64,
}

fn parse_opt_f64(cell: &str, what: &str, path: &Path, line: u64) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>().map(Some).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad {what} `{cell}`: {e}"),
    })
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn check_header(path: &Path, got: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let ok = got.len() >= expected.len()
        && expected.iter().zip(got.iter()).all(|(e, g)| *e == g);
    if !ok {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(())
}

/// Reads and validates a manifest. Rejects duplicate ids and MOS values
/// outside [1, 5]; with `require_mos`, every row must carry a MOS.
pub fn load_manifest(path: &Path, require_mos: bool) -> Result<Vec<Utterance>> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    check_header(path, &header, &MANIFEST_HEADER)?;
    let rate_col = match header.len() {
        5 => None,
        6 if &header[5] == "sample_rate" => Some(5),
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "unexpected extra manifest columns".into(),
            })
        }
    };

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let sample_rate = match rate_col.map(|c| &record[c]) {
            None | Some("") => DEFAULT_SAMPLE_RATE,
            Some(cell) => cell.parse::<u32>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("bad sample_rate `{cell}`: {e}"),
            })?,
        };
        let utt = Utterance {
            utt_id: record[0].to_string(),
            wav_path: PathBuf::from(&record[1]),
            system_id: record[2].to_string(),
            mos: parse_opt_f64(&record[3], "mos", path, line)?,
            transcript: (!record[4].is_empty()).then(|| record[4].to_string()),
            sample_rate,
        };
        utt.validate()?;
        if require_mos && utt.mos.is_none() {
            return Err(Error::MissingMos(utt.utt_id));
        }
        if !seen.insert(utt.utt_id.clone()) {
            return Err(Error::DuplicateUtterance(utt.utt_id));
        }
        out.push(utt);
    }
    Ok(out)
}

/// Writes a manifest. The `sample_rate` column is emitted only when some
/// utterance differs from the 16 kHz default.
pub fn save_manifest(path: &Path, utterances: &[Utterance]) -> Result<()> {
    let with_rate = utterances
        .iter()
        .any(|u| u.sample_rate != DEFAULT_SAMPLE_RATE);
    let mut w = csv_writer(path)?;
    let mut header: Vec<&str> = MANIFEST_HEADER.to_vec();
    if with_rate {
        header.push("sample_rate");
    }
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for u in utterances {
        let mut row = vec![
            u.utt_id.clone(),
            u.wav_path.to_string_lossy().into_owned(),
            u.system_id.clone(),
            fmt_opt_f64(u.mos),
            u.transcript.clone().unwrap_or_default(),
        ];
        if with_rate {
            row.push(u.sample_rate.to_string());
        }
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_pairs(path: &Path, pairs: &[SpeechPair]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(PAIR_HEADER).map_err(|e| Error::csv(path, e))?;
    for p in pairs {
        let cluster = p
            .cluster_id
            .map_or_else(|| "-1".to_string(), |c| c.to_string());
        w.write_record([
            p.x_id.as_str(),
            p.y_id.as_str(),
            &fmt_opt_f64(p.s_m_x),
            &fmt_opt_f64(p.s_m_y),
            &p.s_p.to_string(),
            &cluster,
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a pair file. When `manifest` is given every referenced utt_id must
/// resolve to one of its utterances.
pub fn load_pairs(path: &Path, manifest: Option<&[Utterance]>) -> Result<Vec<SpeechPair>> {
    let known: Option<HashSet<&str>> =
        manifest.map(|m| m.iter().map(|u| u.utt_id.as_str()).collect());
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    check_header(path, &header, &PAIR_HEADER)?;
    if header.len() != PAIR_HEADER.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "unexpected extra pair columns".into(),
        });
    }

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let s_p = i64::from_str(&record[4])
            .map_err(|e| parse_err(format!("bad s_p `{}`: {e}", &record[4])))
            .and_then(|v| PreferenceLabel::from_i64(v).map_err(|e| parse_err(e.to_string())))?;
        let cluster_raw = i64::from_str(&record[5])
            .map_err(|e| parse_err(format!("bad cluster_id `{}`: {e}", &record[5])))?;
        let cluster_id = match cluster_raw {
            -1 => None,
            c if c >= 0 => Some(c as usize),
            c => return Err(parse_err(format!("bad cluster_id {c}"))),
        };
        let pair = SpeechPair {
            x_id: record[0].to_string(),
            y_id: record[1].to_string(),
            s_m_x: parse_opt_f64(&record[2], "s_m_x", path, line)?,
            s_m_y: parse_opt_f64(&record[3], "s_m_y", path, line)?,
            s_p,
            cluster_id,
        };
        pair.validate().map_err(|e| parse_err(e.to_string()))?;
        if let Some(known) = &known {
            for id in [&pair.x_id, &pair.y_id] {
                if !known.contains(id.as_str()) {
                    return Err(Error::UnknownUtterance(id.clone()));
                }
            }
        }
        out.push(pair);
    }
    Ok(out)
}

pub fn save_predictions(path: &Path, preds: &[PredictionRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x_id", "y_id", "mos_hat_x", "mos_hat_y", "pref_hat"])
        .map_err(|e| Error::csv(path, e))?;
    for p in preds {
        w.write_record([
            p.x_id.clone(),
            p.y_id.clone(),
            p.mos_hat_x.to_string(),
            p.mos_hat_y.to_string(),
            p.pref_hat.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `contents` to `path`, creating parent directories.
pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}
