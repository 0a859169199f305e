//! Construction of labelled speech pairs from a MOS manifest.
//!
//! Content-matched pairs come from clustering transcripts and pairing every
//! two members of a cluster. Content-unmatched pairs take one random
//! utterance from each of two systems, once for every system pair. The four
//! train/test combinations of the two procedures are [`Scenario`]s.

mod cluster;
mod text;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cluster::{cluster_transcripts, dbscan, ContentCluster};
pub use text::{edit_distance, normalize_transcript, normalized_levenshtein};

use crate::datamodel::{
    DatasetSplit, PreferenceLabel, ScenarioTag, SpeechPair, SplitName, Utterance,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairGenConfig {
    /// Neighbourhood radius on normalized edit distance, in (0, 1].
    pub eps: f64,
    pub min_samples: usize,
    pub rng_seed: u64,
    pub keep_tied_pairs: bool,
}

impl Default for PairGenConfig {
    fn default() -> Self {
        PairGenConfig {
            eps: 0.2,
            min_samples: 1,
            rng_seed: 0,
            keep_tied_pairs: true,
        }
    }
}

impl PairGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!("eps must be in (0, 1], got {}", self.eps)));
        }
        if self.min_samples == 0 {
            return Err(Error::Config("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    Matched,
    Unmatched,
}

impl PairMode {
    pub fn tag(self) -> ScenarioTag {
        match self {
            PairMode::Matched => ScenarioTag::Matched,
            PairMode::Unmatched => ScenarioTag::Unmatched,
        }
    }

    fn short(self) -> &'static str {
        match self {
            PairMode::Matched => "m",
            PairMode::Unmatched => "nm",
        }
    }
}

impl FromStr for PairMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" | "m" => Ok(PairMode::Matched),
            "unmatched" | "nm" => Ok(PairMode::Unmatched),
            other => Err(Error::Config(format!("unknown pair mode `{other}`"))),
        }
    }
}

/// Train-side and test-side pairing procedure, written `m-m`, `nm-m`,
/// `m-nm` or `nm-nm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Scenario {
    pub train: PairMode,
    pub test: PairMode,
}

impl Scenario {
    /// Fixed reporting order.
    pub const ALL: [Scenario; 4] = [
        Scenario::new(PairMode::Matched, PairMode::Matched),
        Scenario::new(PairMode::Unmatched, PairMode::Matched),
        Scenario::new(PairMode::Matched, PairMode::Unmatched),
        Scenario::new(PairMode::Unmatched, PairMode::Unmatched),
    ];

    pub const fn new(train: PairMode, test: PairMode) -> Self {
        Scenario { train, test }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.train.short(), self.test.short())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (train, test) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("bad scenario `{s}`")))?;
        match (train, test) {
            ("m" | "nm", "m" | "nm") => Ok(Scenario::new(train.parse()?, test.parse()?)),
            _ => Err(Error::Config(format!("bad scenario `{s}`"))),
        }
    }
}

impl TryFrom<String> for Scenario {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.to_string()
    }
}

fn ordered_pair(a: &Utterance, b: &Utterance, cluster_id: Option<usize>) -> Result<SpeechPair> {
    if a.utt_id <= b.utt_id {
        SpeechPair::labelled(a, b, cluster_id)
    } else {
        SpeechPair::labelled(b, a, cluster_id)
    }
}

fn keep(pair: &SpeechPair, cfg: &PairGenConfig) -> bool {
    cfg.keep_tied_pairs || pair.s_p != PreferenceLabel::Equal
}

/// Every unordered pair inside each cluster, `x_id < y_id`, in cluster order.
pub fn build_matched_pairs(
    clusters: &[ContentCluster],
    manifest: &[Utterance],
    cfg: &PairGenConfig,
) -> Result<Vec<SpeechPair>> {
    let index: HashMap<&str, &Utterance> =
        manifest.iter().map(|u| (u.utt_id.as_str(), u)).collect();
    let mut pairs = Vec::new();
    for cluster in clusters {
        let mut members: Vec<&Utterance> = cluster
            .member_ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::UnknownUtterance(id.clone()))
            })
            .collect::<Result<_>>()?;
        members.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
        for (i, x) in members.iter().enumerate() {
            for y in &members[i + 1..] {
                let pair = ordered_pair(x, y, Some(cluster.cluster_id))?;
                if keep(&pair, cfg) {
                    pairs.push(pair);
                }
            }
        }
    }
    Ok(pairs)
}

/// FNV-1a over the seed and both system ids; keys one RNG stream per system
/// pair so that sampling does not depend on iteration order.
fn system_pair_seed(seed: u64, sys_a: &str, sys_b: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let bytes = seed
        .to_le_bytes()
        .into_iter()
        .chain(sys_a.bytes())
        .chain([0xff])
        .chain(sys_b.bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// One pair per system pair: `C(K, 2)` pairs for `K` systems.
pub fn build_unmatched_pairs(utts: &[Utterance], cfg: &PairGenConfig) -> Result<Vec<SpeechPair>> {
    let mut groups: BTreeMap<&str, Vec<&Utterance>> = BTreeMap::new();
    for u in utts {
        if u.system_id.is_empty() {
            return Err(Error::Config(format!("utterance `{}` has no system_id", u.utt_id)));
        }
        groups.entry(u.system_id.as_str()).or_default().push(u);
    }
    if groups.len() < 2 {
        return Err(Error::TooFewSystems(groups.len()));
    }
    for members in groups.values_mut() {
        members.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    }

    let systems: Vec<(&str, &Vec<&Utterance>)> = groups.iter().map(|(k, v)| (*k, v)).collect();
    let mut pairs = Vec::with_capacity(systems.len() * (systems.len() - 1) / 2);
    for (i, (sys_a, group_a)) in systems.iter().enumerate() {
        for (sys_b, group_b) in &systems[i + 1..] {
            let mut rng = ChaCha8Rng::seed_from_u64(system_pair_seed(cfg.rng_seed, sys_a, sys_b));
            let x = group_a[rng.random_range(0..group_a.len())];
            let y = group_b[rng.random_range(0..group_b.len())];
            let pair = ordered_pair(x, y, None)?;
            if keep(&pair, cfg) {
                pairs.push(pair);
            }
        }
    }
    Ok(pairs)
}

/// Pairs for one split under the given procedure.
pub fn build_pairs(mode: PairMode, utts: &[Utterance], cfg: &PairGenConfig) -> Result<Vec<SpeechPair>> {
    match mode {
        PairMode::Matched => {
            let clusters = cluster_transcripts(utts, cfg)?;
            build_matched_pairs(&clusters, utts, cfg)
        }
        PairMode::Unmatched => build_unmatched_pairs(utts, cfg),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScenarioManifests<'a> {
    pub train: &'a [Utterance],
    pub dev: &'a [Utterance],
    pub test: &'a [Utterance],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSplits {
    pub train: DatasetSplit,
    pub dev: DatasetSplit,
    pub test: DatasetSplit,
}

/// Builds the three splits for a scenario. The dev split follows the
/// train-side procedure.
pub fn build_scenario(
    scenario: Scenario,
    manifests: ScenarioManifests<'_>,
    cfg: &PairGenConfig,
) -> Result<ScenarioSplits> {
    cfg.validate()?;
    let mut seen = HashSet::new();
    for u in manifests.train.iter().chain(manifests.dev).chain(manifests.test) {
        if !seen.insert(u.utt_id.as_str()) {
            return Err(Error::DuplicateUtterance(u.utt_id.clone()));
        }
    }
    let split = |name, mode: PairMode, utts: &[Utterance]| -> Result<DatasetSplit> {
        let split = DatasetSplit {
            name,
            utterances: utts.to_vec(),
            pairs: build_pairs(mode, utts, cfg)?,
            scenario_tag: mode.tag(),
        };
        split.validate()?;
        Ok(split)
    };
    Ok(ScenarioSplits {
        train: split(SplitName::Train, scenario.train, manifests.train)?,
        dev: split(SplitName::Dev, scenario.train, manifests.dev)?,
        test: split(SplitName::Test, scenario.test, manifests.test)?,
    })
}
