use ndarray::{s, Array1, Array2, Array3, Axis};

use crate::error::{Error, Result};

/// Frame-aligned `T x D` feature matrix emitted by an extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
    pub frame_rate: f64,
    pub source: String,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>, frame_rate: f64, source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        if frames.nrows() == 0 {
            return Err(Error::Shape(format!("{source}: feature sequence has no frames")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{source} features")));
        }
        Ok(FeatureSequence {
            frames: frames.as_standard_layout().into_owned(),
            frame_rate,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn truncated(&self, frames: usize) -> Self {
        FeatureSequence {
            frames: self.frames.slice(s![..frames, ..]).to_owned(),
            frame_rate: self.frame_rate,
            source: self.source.clone(),
        }
    }
}

/// Hidden states of every encoder layer, `L x T x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Array3<f64>,
    pub frame_rate: f64,
    pub source: String,
}

impl LayerStack {
    pub fn new(layers: Array3<f64>, frame_rate: f64, source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        let (l, t, _) = layers.dim();
        if l == 0 || t == 0 {
            return Err(Error::Shape(format!("{source}: empty layer stack {:?}", layers.dim())));
        }
        if layers.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{source} hidden states")));
        }
        Ok(LayerStack {
            layers: layers.as_standard_layout().into_owned(),
            frame_rate,
            source,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.dim().0
    }

    pub fn len(&self) -> usize {
        self.layers.dim().1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.layers.dim().2
    }

    /// The final layer as a sequence.
    pub fn last_layer(&self) -> FeatureSequence {
        FeatureSequence {
            frames: self.layers.index_axis(Axis(0), self.num_layers() - 1).to_owned(),
            frame_rate: self.frame_rate,
            source: self.source.clone(),
        }
    }

    pub fn truncated(&self, frames: usize) -> Self {
        LayerStack {
            layers: self.layers.slice(s![.., ..frames, ..]).to_owned(),
            frame_rate: self.frame_rate,
            source: self.source.clone(),
        }
    }
}

/// Learnable per-layer mixing weights; normalized with a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub raw: Array1<f64>,
}

impl LayerWeights {
    /// Uniform mixture.
    pub fn zeros(layers: usize) -> Self {
        LayerWeights {
            raw: Array1::zeros(layers),
        }
    }

    pub fn normalized(&self) -> Array1<f64> {
        softmax(&self.raw)
    }
}

pub fn softmax(raw: &Array1<f64>) -> Array1<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = raw.mapv(|v| (v - max).exp());
    let total = exp.sum();
    exp / total
}

/// `out[t, d] = sum_l softmax(w)[l] * stack[l, t, d]`.
pub fn aggregate_layers(stack: &LayerStack, weights: &LayerWeights) -> Result<FeatureSequence> {
    if weights.raw.len() != stack.num_layers() {
        return Err(Error::Shape(format!(
            "{} layer weights for a {}-layer stack",
            weights.raw.len(),
            stack.num_layers()
        )));
    }
    let alpha = weights.normalized();
    let mut out = Array2::<f64>::zeros((stack.len(), stack.dim()));
    for (l, layer) in stack.layers.outer_iter().enumerate() {
        out.scaled_add(alpha[l], &layer);
    }
    Ok(FeatureSequence {
        frames: out,
        frame_rate: stack.frame_rate,
        source: stack.source.clone(),
    })
}

/// Truncates both sequences to the shorter length.
pub fn align_lengths(
    a: &FeatureSequence,
    b: &FeatureSequence,
) -> Result<(FeatureSequence, FeatureSequence)> {
    if a.frame_rate != b.frame_rate {
        return Err(Error::FrameRate(a.frame_rate, b.frame_rate));
    }
    let t = a.len().min(b.len());
    Ok((a.truncated(t), b.truncated(t)))
}
