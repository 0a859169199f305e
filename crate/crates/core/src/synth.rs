//! Synthetic corpus with a known quality ordering: harmonic "utterances"
//! degraded by white noise at fixed SNRs, one system per SNR, MOS an affine
//! function of SNR plus a little seeded jitter.

use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::backbone::{write_wav, Waveform};
use crate::datamodel::{save_manifest, Utterance, DEFAULT_SAMPLE_RATE, MOS_MAX, MOS_MIN};
use crate::error::{Error, Result};

const WORDS: [&str; 24] = [
    "amber", "river", "quiet", "stone", "yellow", "garden", "morning", "signal", "copper", "window", "silver",
    "harbor", "forest", "paper", "rocket", "winter", "candle", "mirror", "pepper", "meadow", "thunder", "velvet",
    "orange", "planet",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Clean source waveforms; each is degraded at every SNR.
    pub base_utterances: usize,
    pub snr_db: Vec<f64>,
    pub duration_secs: f64,
    pub sample_rate: u32,
    /// Base waveforms assigned to train and dev; the rest go to test.
    pub train_bases: usize,
    pub dev_bases: usize,
    /// Standard deviation of the jitter added to the SNR-derived MOS.
    pub mos_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            base_utterances: 60,
            snr_db: vec![30.0, 24.0, 18.0, 12.0, 6.0, 0.0],
            duration_secs: 0.2,
            sample_rate: DEFAULT_SAMPLE_RATE,
            train_bases: 40,
            dev_bases: 10,
            mos_noise: 0.05,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.len() < 2 {
            return Err(Error::TooFewSystems(self.snr_db.len()));
        }
        if self.train_bases == 0 || self.dev_bases == 0 || self.train_bases + self.dev_bases >= self.base_utterances {
            return Err(Error::Config(format!(
                "need at least one base waveform per split: {} train + {} dev of {}",
                self.train_bases, self.dev_bases, self.base_utterances
            )));
        }
        if self.duration_secs.is_nan() || self.duration_secs <= 0.0 || self.sample_rate == 0 {
            return Err(Error::Config("duration and sample rate must be positive".into()));
        }
        Ok(())
    }

    fn snr_range(&self) -> (f64, f64) {
        let lo = self.snr_db.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.snr_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Noise-free MOS for an SNR: 1 at the lowest level, 5 at the highest.
    pub fn mos_for_snr(&self, snr: f64) -> f64 {
        let (lo, hi) = self.snr_range();
        if hi == lo {
            return MOS_MAX;
        }
        MOS_MIN + (MOS_MAX - MOS_MIN) * (snr - lo) / (hi - lo)
    }
}

pub fn system_id(snr: f64) -> String {
    format!("sys_snr{snr:02.0}")
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub utterance: Utterance,
    pub waveform: Waveform,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<SynthUtterance>,
    pub dev: Vec<SynthUtterance>,
    pub test: Vec<SynthUtterance>,
}

fn clean_waveform(rng: &mut ChaCha8Rng, n: usize, sample_rate: u32) -> Vec<f64> {
    let f0 = rng.random_range(100.0..300.0);
    let harmonics: Vec<f64> = (1..=6).map(|h| rng.random_range(0.2..1.0) / h as f64).collect();
    let phases: Vec<f64> = (0..harmonics.len())
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let vibrato = rng.random_range(2.0..6.0);
    let sr = f64::from(sample_rate);
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let pitch = f0 * (1.0 + 0.02 * (std::f64::consts::TAU * vibrato * t).sin());
            let envelope = (std::f64::consts::PI * i as f64 / n as f64).sin().powf(0.5);
            let voiced: f64 = harmonics
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(h, (a, p))| a * (std::f64::consts::TAU * pitch * (h + 1) as f64 * t + p).sin())
                .sum();
            envelope * voiced
        })
        .collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    for v in &mut out {
        *v *= 0.1 / rms;
    }
    out
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(4..7);
    (0..len).map(|_| *WORDS.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

/// Builds the corpus in memory. Splits are disjoint in base waveform, so no
/// clean source appears in two splits.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = (cfg.duration_secs * f64::from(cfg.sample_rate)).round() as usize;
    let jitter = Normal::new(0.0, cfg.mos_noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut bases: Vec<usize> = (0..cfg.base_utterances).collect();
    bases.shuffle(&mut rng);
    let mut corpus = SynthCorpus {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    let mut per_base = Vec::with_capacity(cfg.base_utterances);
    for _ in 0..cfg.base_utterances {
        per_base.push((clean_waveform(&mut rng, n, cfg.sample_rate), sentence(&mut rng)));
    }
    for (rank, &base) in bases.iter().enumerate() {
        let (clean, transcript) = &per_base[base];
        let signal_power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
        for &snr in &cfg.snr_db {
            let noise_std = (signal_power / 10f64.powf(snr / 10.0)).sqrt();
            let noise = Normal::new(0.0, noise_std).map_err(|e| Error::Config(e.to_string()))?;
            let samples: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
            let mos = (cfg.mos_for_snr(snr) + jitter.sample(&mut rng)).clamp(MOS_MIN, MOS_MAX);
            let utt_id = format!("b{base:03}_snr{snr:02.0}");
            let item = SynthUtterance {
                utterance: Utterance {
                    wav_path: PathBuf::from(format!("wav/{utt_id}.wav")),
                    utt_id,
                    system_id: system_id(snr),
                    mos: Some(mos),
                    transcript: Some(transcript.clone()),
                    sample_rate: cfg.sample_rate,
                },
                waveform: Waveform::new(samples, cfg.sample_rate)?,
            };
            if rank < cfg.train_bases {
                corpus.train.push(item);
            } else if rank < cfg.train_bases + cfg.dev_bases {
                corpus.dev.push(item);
            } else {
                corpus.test.push(item);
            }
        }
    }
    for split in [&mut corpus.train, &mut corpus.dev, &mut corpus.test] {
        split.sort_by(|a, b| a.utterance.utt_id.cmp(&b.utterance.utt_id));
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFiles {
    pub train_manifest: PathBuf,
    pub dev_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

/// Writes `wav/*.wav` and `{train,dev,test}.csv` under `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<CorpusFiles> {
    std::fs::create_dir_all(dir.join("wav")).map_err(|e| Error::io(dir, e))?;
    let write_split = |name: &str, items: &[SynthUtterance]| -> Result<PathBuf> {
        for item in items {
            write_wav(&dir.join(&item.utterance.wav_path), &item.waveform)?;
        }
        let path = dir.join(format!("{name}.csv"));
        let utts: Vec<Utterance> = items.iter().map(|i| i.utterance.clone()).collect();
        save_manifest(&path, &utts)?;
        Ok(path)
    };
    Ok(CorpusFiles {
        train_manifest: write_split("train", &corpus.train)?,
        dev_manifest: write_split("dev", &corpus.dev)?,
        test_manifest: write_split("test", &corpus.test)?,
    })
}
