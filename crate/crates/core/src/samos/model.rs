use ndarray::{concatenate, s, Array1, Array2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{prefixed, BiLstm, BiLstmTrace, FeatureProcessor, Linear, Params, ProcessorTrace};
use crate::backbone::{softmax, LayerWeights, UttFeatures};
use crate::error::{Error, Result};

pub const SA_MOS: &str = "sa-mos";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Registry key; only `sa-mos` is built in.
    pub architecture: String,
    /// Channel count of both backbones.
    pub feature_dim: usize,
    /// Hidden states in the acoustic stack.
    pub acoustic_layers: usize,
    pub processor_dim: usize,
    /// Units per LSTM direction.
    pub lstm_hidden: usize,
    pub head_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: SA_MOS.into(),
            feature_dim: 768,
            acoustic_layers: 3,
            processor_dim: 64,
            lstm_hidden: 128,
            head_dim: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.architecture != SA_MOS {
            return Err(Error::Config(format!("unknown architecture `{}`", self.architecture)));
        }
        let dims = [
            self.feature_dim,
            self.acoustic_layers,
            self.processor_dim,
            self.lstm_hidden,
            self.head_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Scores one utterance: two residual feature processors, a BiLSTM over the
/// concatenated branches, a per-frame two-layer head and a mean over frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SaMos {
    config: ModelConfig,
    pub layer_weights: LayerWeights,
    pub semantic_processor: FeatureProcessor,
    pub acoustic_processor: FeatureProcessor,
    pub lstm: BiLstm,
    pub head_hidden: Linear,
    pub head_out: Linear,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    alpha: Array1<f64>,
    acoustic_mix: Array2<f64>,
    semantic_trace: ProcessorTrace,
    acoustic_trace: ProcessorTrace,
    fused: Array2<f64>,
    lstm_out: Array2<f64>,
    lstm_trace: BiLstmTrace,
    head_pre: Array2<f64>,
    head_act: Array2<f64>,
}

impl SaMos {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.feature_dim;
        Ok(SaMos {
            layer_weights: LayerWeights::zeros(config.acoustic_layers),
            semantic_processor: FeatureProcessor::init(d, config.processor_dim, &mut rng),
            acoustic_processor: FeatureProcessor::init(d, config.processor_dim, &mut rng),
            lstm: BiLstm::init(2 * d, config.lstm_hidden, &mut rng),
            head_hidden: Linear::init(2 * config.lstm_hidden, config.head_dim, &mut rng),
            head_out: Linear::init(config.head_dim, 1, &mut rng),
            config,
        })
    }

    /// Same shapes, all parameters zero. Used as a gradient accumulator.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.feature_dim;
        Ok(SaMos {
            layer_weights: LayerWeights::zeros(config.acoustic_layers),
            semantic_processor: FeatureProcessor::zeros(d, config.processor_dim),
            acoustic_processor: FeatureProcessor::zeros(d, config.processor_dim),
            lstm: BiLstm::zeros(2 * d, config.lstm_hidden),
            head_hidden: Linear::zeros(2 * config.lstm_hidden, config.head_dim),
            head_out: Linear::zeros(config.head_dim, 1),
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone()).expect("config already validated")
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_input(&self, feats: &UttFeatures) -> Result<()> {
        let d = self.config.feature_dim;
        if feats.semantic.dim() != d || feats.acoustic.dim() != d {
            return Err(Error::Shape(format!(
                "model expects {d}-dim features, got semantic {} / acoustic {}",
                feats.semantic.dim(),
                feats.acoustic.dim()
            )));
        }
        if feats.acoustic.num_layers() != self.config.acoustic_layers {
            return Err(Error::Shape(format!(
                "model expects {} acoustic layers, got {}",
                self.config.acoustic_layers,
                feats.acoustic.num_layers()
            )));
        }
        if feats.semantic.len() != feats.acoustic.len() {
            return Err(Error::Shape(format!(
                "branch lengths differ: {} vs {}",
                feats.semantic.len(),
                feats.acoustic.len()
            )));
        }
        Ok(())
    }

    /// Predicted MOS.
    pub fn score(&self, feats: &UttFeatures) -> Result<f64> {
        self.forward(feats).map(|(score, _)| score)
    }

    pub fn forward(&self, feats: &UttFeatures) -> Result<(f64, ForwardTrace)> {
        self.check_input(feats)?;
        let alpha = softmax(&self.layer_weights.raw);
        let stack = &feats.acoustic.layers;
        let mut acoustic_mix = Array2::<f64>::zeros((feats.acoustic.len(), self.config.feature_dim));
        for (l, layer) in stack.outer_iter().enumerate() {
            acoustic_mix.scaled_add(alpha[l], &layer);
        }
        let semantic = feats.semantic.frames.view();
        let (r_s, semantic_trace) = self.semantic_processor.forward_residual(&semantic);
        let (r_a, acoustic_trace) = self.acoustic_processor.forward_residual(&acoustic_mix.view());
        let fused = concatenate![Axis(1), r_s, r_a];
        let (lstm_out, lstm_trace) = self.lstm.run(&fused.view());
        let head_pre = self.head_hidden.forward(&lstm_out.view());
        let head_act = head_pre.mapv(|v| v.max(0.0));
        let frame_scores = self.head_out.forward(&head_act.view());
        let score = frame_scores.mean().expect("at least one frame");
        if !score.is_finite() {
            return Err(Error::NonFinite(format!(
                "predicted MOS over {} frames ({} from {})",
                frame_scores.len(),
                score,
                feats.semantic.source
            )));
        }
        Ok((
            score,
            ForwardTrace {
                alpha,
                acoustic_mix,
                semantic_trace,
                acoustic_trace,
                fused,
                lstm_out,
                lstm_trace,
                head_pre,
                head_act,
            },
        ))
    }

    /// Adds `d_score * d score / d theta` into `grads`.
    pub fn backward(&self, feats: &UttFeatures, trace: &ForwardTrace, d_score: f64, grads: &mut SaMos) {
        let t_len = trace.fused.nrows();
        let d = self.config.feature_dim;
        let d_frames = Array2::from_elem((t_len, 1), d_score / t_len as f64);
        let mut d_pre = self
            .head_out
            .backward(&trace.head_act.view(), &d_frames.view(), &mut grads.head_out);
        d_pre.zip_mut_with(&trace.head_pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let d_lstm_out = self
            .head_hidden
            .backward(&trace.lstm_out.view(), &d_pre.view(), &mut grads.head_hidden);
        let d_fused = self
            .lstm
            .backprop(&trace.fused.view(), &trace.lstm_trace, &d_lstm_out.view(), &mut grads.lstm);
        // the input gradient of the semantic branch stops at the frozen encoder
        self.semantic_processor.backward_residual(
            &feats.semantic.frames.view(),
            &trace.semantic_trace,
            &d_fused.slice(s![.., ..d]),
            &mut grads.semantic_processor,
        );
        let d_mix = self.acoustic_processor.backward_residual(
            &trace.acoustic_mix.view(),
            &trace.acoustic_trace,
            &d_fused.slice(s![.., d..]),
            &mut grads.acoustic_processor,
        );
        let d_alpha: Array1<f64> = feats
            .acoustic
            .layers
            .outer_iter()
            .map(|layer| (&layer * &d_mix).sum())
            .collect();
        let weighted = trace.alpha.dot(&d_alpha);
        grads.layer_weights.raw += &(&trace.alpha * &(d_alpha - weighted));
    }

    /// `theta -= lr * grad` for every parameter.
    pub fn sgd_step(&mut self, grads: &SaMos, lr: f64) {
        for ((_, mut p), (_, g)) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            Zip::from(&mut p).and(&g).for_each(|p, &g| *p -= lr * g);
        }
    }

    /// Sets every parameter to `value`.
    pub fn fill(&mut self, value: f64) {
        for (_, mut t) in self.tensors_mut() {
            t.fill(value);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

impl Params for SaMos {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = vec![(
            "acoustic.layer_weights".to_string(),
            self.layer_weights.raw.view().into_dyn(),
        )];
        out.extend(prefixed("semantic.processor", self.semantic_processor.tensors()));
        out.extend(prefixed("acoustic.processor", self.acoustic_processor.tensors()));
        out.extend(prefixed("head.bilstm", self.lstm.tensors()));
        out.extend(prefixed("head.linear1", self.head_hidden.tensors()));
        out.extend(prefixed("head.linear_out", self.head_out.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = vec![(
            "acoustic.layer_weights".to_string(),
            self.layer_weights.raw.view_mut().into_dyn(),
        )];
        out.extend(prefixed("semantic.processor", self.semantic_processor.tensors_mut()));
        out.extend(prefixed("acoustic.processor", self.acoustic_processor.tensors_mut()));
        out.extend(prefixed("head.bilstm", self.lstm.tensors_mut()));
        out.extend(prefixed("head.linear1", self.head_hidden.tensors_mut()));
        out.extend(prefixed("head.linear_out", self.head_out.tensors_mut()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{FeatureSequence, LayerStack};
    use ndarray::{array, Array3};
    use rand::Rng;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            architecture: SA_MOS.into(),
            feature_dim: 3,
            acoustic_layers: 2,
            processor_dim: 2,
            lstm_hidden: 2,
            head_dim: 3,
        }
    }

    fn random_feats(cfg: &ModelConfig, frames: usize, seed: u64) -> UttFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.feature_dim;
        let sem = Array2::from_shape_simple_fn((frames, d), || rng.random_range(-1.0..1.0));
        let ac = Array3::from_shape_simple_fn((cfg.acoustic_layers, frames, d), || rng.random_range(-1.0..1.0));
        UttFeatures::new(
            FeatureSequence::new(sem, 50.0, "s").unwrap(),
            LayerStack::new(ac, 50.0, "a").unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_head_outputs_the_bias() {
        let cfg = tiny_config();
        let mut m = SaMos::new(cfg.clone(), 1).unwrap();
        m.head_out.weight.fill(0.0);
        m.head_out.bias[0] = 2.75;
        for seed in 0..3 {
            assert_eq!(m.score(&random_feats(&cfg, 4 + seed as usize, seed)).unwrap(), 2.75);
        }
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let cfg = tiny_config();
        let f = random_feats(&cfg, 5, 9);
        let a = SaMos::new(cfg.clone(), 4).unwrap();
        let b = SaMos::new(cfg.clone(), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.score(&f).unwrap().to_bits(), b.score(&f).unwrap().to_bits());
        assert_ne!(a, SaMos::new(cfg, 5).unwrap());
    }

    #[test]
    fn full_size_parameter_count() {
        let m = SaMos::zeros(ModelConfig::default()).unwrap();
        let proc = 768 * 64 + 64 + 64 * 768 + 768;
        let lstm_dir = 512 * 1536 + 512 * 128 + 512;
        let head = 256 * 64 + 64 + 64 + 1;
        assert_eq!(m.num_params(), 3 + 2 * proc + 2 * lstm_dir + head);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = SaMos::new(tiny_config(), 1).unwrap();
        let other = ModelConfig {
            feature_dim: 4,
            ..tiny_config()
        };
        assert!(matches!(m.score(&random_feats(&other, 3, 0)), Err(Error::Shape(_))));
        let bad = ModelConfig {
            architecture: "utp".into(),
            ..tiny_config()
        };
        assert!(SaMos::new(bad, 0).is_err());
    }

    /// Every dimension set to one so the whole network is scalar arithmetic.
    #[test]
    fn two_frame_scalar_network_matches_hand_computation() {
        let cfg = ModelConfig {
            architecture: SA_MOS.into(),
            feature_dim: 1,
            acoustic_layers: 2,
            processor_dim: 1,
            lstm_hidden: 1,
            head_dim: 1,
        };
        let mut m = SaMos::zeros(cfg).unwrap();
        m.layer_weights.raw = array![0.0, 2f64.ln()];
        m.semantic_processor.down.weight[[0, 0]] = 1.0;
        m.semantic_processor.up.weight[[0, 0]] = 0.5;
        m.acoustic_processor.up.bias[0] = 0.25;
        // forward direction: gates from x_sem only; backward direction: from x_ac only
        m.lstm.forward.w_ih = array![[1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        m.lstm.forward.w_hh = array![[0.0], [0.0], [0.5], [0.0]];
        m.lstm.backward.w_ih = array![[0.0, 1.0], [0.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        m.head_hidden.weight = array![[1.0, -1.0]];
        m.head_hidden.bias[0] = 0.1;
        m.head_out.weight[[0, 0]] = 2.0;
        m.head_out.bias[0] = 3.0;

        let sem = [0.5, -1.0];
        let layers = [[1.0, 2.0], [-1.0, 4.0]];
        let feats = UttFeatures::new(
            FeatureSequence::new(array![[sem[0]], [sem[1]]], 50.0, "s").unwrap(),
            LayerStack::new(
                Array3::from_shape_vec((2, 2, 1), vec![layers[0][0], layers[0][1], layers[1][0], layers[1][1]]).unwrap(),
                50.0,
                "a",
            )
            .unwrap(),
        )
        .unwrap();

        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let gelu = |x: f64| 0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()));
        // softmax([0, ln 2]) = (1/3, 2/3)
        let mix = [
            layers[0][0] / 3.0 + 2.0 * layers[1][0] / 3.0,
            layers[0][1] / 3.0 + 2.0 * layers[1][1] / 3.0,
        ];
        let r_s: Vec<f64> = sem.iter().map(|&x| x + 0.5 * gelu(x)).collect();
        let r_a: Vec<f64> = mix.iter().map(|&x| x + 0.25).collect();
        let cell = |z_i: f64, z_f: f64, z_g: f64, z_o: f64, c_prev: f64| {
            let c = sig(z_f) * c_prev + sig(z_i) * z_g.tanh();
            (sig(z_o) * c.tanh(), c)
        };
        let (hf0, cf0) = cell(r_s[0], 0.0, r_s[0], r_s[0], 0.0);
        let (hf1, _) = cell(r_s[1], 0.0, r_s[1] + 0.5 * hf0, r_s[1], cf0);
        let (hb1, cb1) = cell(r_a[1], 0.0, r_a[1], r_a[1], 0.0);
        let (hb0, _) = cell(r_a[0], 0.0, r_a[0], r_a[0], cb1);
        let frame = |hf: f64, hb: f64| 2.0 * (hf - hb + 0.1).max(0.0) + 3.0;
        let expected = 0.5 * (frame(hf0, hb0) + frame(hf1, hb1));

        let got = m.score(&feats).unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }

    fn numeric_check(cfg: ModelConfig, frames: usize) {
        let m = SaMos::new(cfg.clone(), 17).unwrap();
        let mut m = m;
        m.layer_weights.raw = array![0.3, -0.2];
        let f = random_feats(&cfg, frames, 2);
        let (_, trace) = m.forward(&f).unwrap();
        let mut grads = m.zeros_like();
        m.backward(&f, &trace, 1.0, &mut grads);
        let analytic: Vec<(String, Vec<f64>)> = grads
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.iter().copied().collect()))
            .collect();
        let h = 1e-5;
        for (ti, (name, values)) in analytic.iter().enumerate() {
            for (k, &a) in values.iter().enumerate() {
                let perturbed = |delta: f64| {
                    let mut p = m.clone();
                    let mut tensors = p.tensors_mut();
                    let t = &mut tensors[ti].1;
                    let v = t.iter_mut().nth(k).unwrap();
                    *v += delta;
                    drop(tensors);
                    p.score(&f).unwrap()
                };
                let num = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
                assert!(err < 1e-4, "{name}[{k}] analytic {a} numeric {num}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        numeric_check(tiny_config(), 4);
    }

    #[test]
    fn sgd_step_moves_against_the_gradient() {
        let cfg = tiny_config();
        let mut m = SaMos::new(cfg.clone(), 3).unwrap();
        let before = m.clone();
        let mut g = m.zeros_like();
        for (_, mut t) in g.tensors_mut() {
            t.fill(2.0);
        }
        m.sgd_step(&g, 0.25);
        for ((_, a), (_, b)) in m.tensors().into_iter().zip(before.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x, y - 0.5);
            }
        }
    }
}
