//! Offline stand-in for a pretrained speech encoder.
//!
//! Frames the waveform (25 ms Hann window, 20 ms hop, so 50 frames per
//! second), computes band log-energies from a small DFT plus a few
//! time-domain statistics, and maps them to `dim` channels through fixed
//! pseudo-random projections, one per emitted "layer". Projection entries are
//! generated from integer hashing and all transcendental functions come from
//! `libm`, so output is bit-identical across runs and platforms.

use ndarray::{Array2, Array3};

use super::{Backbone, FeatureSequence, LayerStack, Waveform};
use crate::error::{Error, Result};

pub const TOY_SAMPLE_RATE: u32 = 16_000;
pub const TOY_WINDOW: usize = 400;
pub const TOY_HOP: usize = 320;
pub const TOY_FRAME_RATE: f64 = 50.0;

const DFT_BINS: usize = 64;
const BIN_SPACING_HZ: f64 = 125.0;
const BINS_PER_BAND: usize = 4;
const BANDS: usize = DFT_BINS / BINS_PER_BAND;
/// bands + frame energy + zero-crossing rate + difference energy + bias
pub const TOY_STATS: usize = BANDS + 4;

const LOG_FLOOR: f64 = 1e-10;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [-1, 1) from an integer key, exactly representable.
fn hashed_uniform(seed: u64, layer: u64, row: u64, col: u64) -> f64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ layer);
    h = splitmix64(h ^ row);
    h = splitmix64(h ^ col);
    let unit = (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * unit - 1.0
}

#[derive(Debug, Clone)]
pub struct ToyBackbone {
    name: String,
    dim: usize,
    projections: Vec<Array2<f64>>,
    window: Vec<f64>,
    cos_table: Array2<f64>,
    sin_table: Array2<f64>,
}

impl ToyBackbone {
    pub fn new(dim: usize, layers: usize, seed: u64) -> Result<Self> {
        if dim == 0 || layers == 0 {
            return Err(Error::Config(format!(
                "toy backbone needs positive dim and layer count, got {dim} x {layers}"
            )));
        }
        let scale = libm::sqrt(3.0 / TOY_STATS as f64);
        let projections = (0..layers)
            .map(|l| {
                Array2::from_shape_fn((dim, TOY_STATS), |(r, c)| {
                    scale * hashed_uniform(seed, l as u64, r as u64, c as u64)
                })
            })
            .collect();
        let two_pi = 2.0 * std::f64::consts::PI;
        let window = (0..TOY_WINDOW)
            .map(|n| 0.5 - 0.5 * libm::cos(two_pi * n as f64 / (TOY_WINDOW - 1) as f64))
            .collect();
        let phase = |k: usize, n: usize| {
            two_pi * BIN_SPACING_HZ * (k + 1) as f64 * n as f64 / f64::from(TOY_SAMPLE_RATE)
        };
        let cos_table = Array2::from_shape_fn((DFT_BINS, TOY_WINDOW), |(k, n)| libm::cos(phase(k, n)));
        let sin_table = Array2::from_shape_fn((DFT_BINS, TOY_WINDOW), |(k, n)| libm::sin(phase(k, n)));
        Ok(ToyBackbone {
            name: format!("toy(seed={seed})"),
            dim,
            projections,
            window,
            cos_table,
            sin_table,
        })
    }

    /// Number of frames for `samples` input samples.
    pub fn frame_count(samples: usize) -> usize {
        samples.div_ceil(TOY_HOP)
    }

    fn frame_stats(&self, wav: &Waveform) -> Result<Vec<[f64; TOY_STATS]>> {
        if wav.is_empty() {
            return Err(Error::Audio("zero-length waveform".into()));
        }
        let resampled;
        let samples = if wav.sample_rate == TOY_SAMPLE_RATE {
            &wav.samples
        } else {
            resampled = wav.resampled(TOY_SAMPLE_RATE);
            &resampled.samples
        };
        let frames = Self::frame_count(samples.len());
        let mut frame = vec![0.0; TOY_WINDOW];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let start = t * TOY_HOP;
            for (n, v) in frame.iter_mut().enumerate() {
                *v = samples.get(start + n).copied().unwrap_or(0.0) * self.window[n];
            }
            let mut stats = [0.0; TOY_STATS];
            for (b, stat) in stats.iter_mut().take(BANDS).enumerate() {
                let mut power = 0.0;
                for k in b * BINS_PER_BAND..(b + 1) * BINS_PER_BAND {
                    let (mut re, mut im) = (0.0, 0.0);
                    for ((x, c), s) in frame.iter().zip(self.cos_table.row(k)).zip(self.sin_table.row(k)) {
                        re += x * c;
                        im += x * s;
                    }
                    power += (re * re + im * im) / TOY_WINDOW as f64;
                }
                *stat = log_scaled(power / BINS_PER_BAND as f64);
            }
            let energy = frame.iter().map(|v| v * v).sum::<f64>() / TOY_WINDOW as f64;
            let mut crossings = 0usize;
            let mut diff_energy = 0.0;
            for n in 1..TOY_WINDOW {
                if (frame[n] >= 0.0) != (frame[n - 1] >= 0.0) {
                    crossings += 1;
                }
                let d = frame[n] - frame[n - 1];
                diff_energy += d * d;
            }
            stats[BANDS] = log_scaled(energy);
            stats[BANDS + 1] = 2.0 * crossings as f64 / TOY_WINDOW as f64;
            stats[BANDS + 2] = log_scaled(diff_energy / (TOY_WINDOW - 1) as f64);
            stats[BANDS + 3] = 1.0;
            out.push(stats);
        }
        Ok(out)
    }

    fn project(&self, layer: usize, stats: &[[f64; TOY_STATS]]) -> Array2<f64> {
        let p = &self.projections[layer];
        let mut out = Array2::zeros((stats.len(), self.dim));
        for (t, s) in stats.iter().enumerate() {
            for d in 0..self.dim {
                let mut acc = 0.0;
                for k in 0..TOY_STATS {
                    acc += p[[d, k]] * s[k];
                }
                out[[t, d]] = libm::tanh(acc);
            }
        }
        out
    }
}

/// Natural log mapped to roughly unit scale for typical speech levels.
fn log_scaled(power: f64) -> f64 {
    (libm::log(power + LOG_FLOOR) + 10.0) / 5.0
}

impl Backbone for ToyBackbone {
    fn name(&self) -> &str {
        &self.name
    }

    fn sample_rate(&self) -> u32 {
        TOY_SAMPLE_RATE
    }

    fn frame_rate(&self) -> f64 {
        TOY_FRAME_RATE
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn num_layers(&self) -> usize {
        self.projections.len()
    }

    fn extract_semantic(&self, wav: &Waveform) -> Result<FeatureSequence> {
        let stats = self.frame_stats(wav)?;
        FeatureSequence::new(
            self.project(self.projections.len() - 1, &stats),
            TOY_FRAME_RATE,
            self.name.clone(),
        )
    }

    fn extract_acoustic_stack(&self, wav: &Waveform) -> Result<LayerStack> {
        let stats = self.frame_stats(wav)?;
        let mut layers = Array3::zeros((self.projections.len(), stats.len(), self.dim));
        for l in 0..self.projections.len() {
            layers
                .index_axis_mut(ndarray::Axis(0), l)
                .assign(&self.project(l, &stats));
        }
        LayerStack::new(layers, TOY_FRAME_RATE, self.name.clone())
    }
}
