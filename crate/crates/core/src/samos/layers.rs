//! Differentiable building blocks with explicit forward traces and backward
//! passes. Gradients accumulate into a parameter-shaped twin of each layer.

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

/// Named views over every parameter tensor, in a fixed order.
pub trait Params {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)>;
    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)>;
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

fn uniform_vector(len: usize, bound: f64, rng: &mut impl Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.random_range(-bound..bound))
}

/// Affine map `y = x W^T + b`; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Uniform in `+-1/sqrt(in)`.
    pub fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            weight: uniform_matrix(output, input, bound, rng),
            bias: uniform_vector(output, bound, rng),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: &ArrayView2<f64>, dy: &ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &dy.t().dot(x);
        grad.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }
}

impl Params for Linear {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("weight".into(), self.weight.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        vec![
            ("weight".into(), self.weight.view_mut().into_dyn()),
            ("bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two affine maps with a GELU between them: `in -> hidden -> in`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureProcessor {
    pub down: Linear,
    pub up: Linear,
}

#[derive(Debug, Clone)]
pub struct ProcessorTrace {
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
}

impl FeatureProcessor {
    pub fn init(dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        FeatureProcessor {
            down: Linear::init(dim, hidden, rng),
            up: Linear::init(hidden, dim, rng),
        }
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        FeatureProcessor {
            down: Linear::zeros(dim, hidden),
            up: Linear::zeros(hidden, dim),
        }
    }

    /// `x + up(gelu(down(x)))`.
    pub fn forward_residual(&self, x: &ArrayView2<f64>) -> (Array2<f64>, ProcessorTrace) {
        let hidden_pre = self.down.forward(x);
        let hidden = hidden_pre.mapv(gelu);
        let out = self.up.forward(&hidden.view()) + x;
        (out, ProcessorTrace { hidden_pre, hidden })
    }

    pub fn backward_residual(
        &self,
        x: &ArrayView2<f64>,
        trace: &ProcessorTrace,
        d_out: &ArrayView2<f64>,
        grad: &mut FeatureProcessor,
    ) -> Array2<f64> {
        let d_hidden = self.up.backward(&trace.hidden.view(), d_out, &mut grad.up);
        let mut d_pre = d_hidden;
        d_pre.zip_mut_with(&trace.hidden_pre, |d, &h| *d *= gelu_grad(h));
        let dx = self.down.backward(x, &d_pre.view(), &mut grad.down);
        dx + d_out
    }
}

impl Params for FeatureProcessor {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        prefixed("down", self.down.tensors())
            .into_iter()
            .chain(prefixed("up", self.up.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        prefixed("down", self.down.tensors_mut())
            .into_iter()
            .chain(prefixed("up", self.up.tensors_mut()))
            .collect()
    }
}

pub(crate) fn prefixed<T>(prefix: &str, items: Vec<(String, T)>) -> Vec<(String, T)> {
    items
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect()
}

/// One direction of an LSTM. Gate order in the stacked weights is input,
/// forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `4H x in`
    pub w_ih: Array2<f64>,
    /// `4H x H`
    pub w_hh: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Per-step activations, stored in time order regardless of direction.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    input_gate: Array2<f64>,
    forget_gate: Array2<f64>,
    cell_gate: Array2<f64>,
    output_gate: Array2<f64>,
    cell: Array2<f64>,
    cell_tanh: Array2<f64>,
    pub hidden: Array2<f64>,
}

impl LstmCell {
    /// Uniform in `+-1/sqrt(H)`.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        LstmCell {
            w_ih: uniform_matrix(4 * hidden, input, bound, rng),
            w_hh: uniform_matrix(4 * hidden, hidden, bound, rng),
            bias: uniform_vector(4 * hidden, bound, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.ncols()
    }

    fn order(len: usize, reverse: bool) -> Box<dyn Iterator<Item = usize>> {
        if reverse {
            Box::new((0..len).rev())
        } else {
            Box::new(0..len)
        }
    }

    pub fn forward(&self, x: &ArrayView2<f64>, reverse: bool) -> LstmTrace {
        let t_len = x.nrows();
        let h = self.hidden_size();
        let pre_input = x.dot(&self.w_ih.t()) + &self.bias;
        let mut trace = LstmTrace {
            input_gate: Array2::zeros((t_len, h)),
            forget_gate: Array2::zeros((t_len, h)),
            cell_gate: Array2::zeros((t_len, h)),
            output_gate: Array2::zeros((t_len, h)),
            cell: Array2::zeros((t_len, h)),
            cell_tanh: Array2::zeros((t_len, h)),
            hidden: Array2::zeros((t_len, h)),
        };
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for t in Self::order(t_len, reverse) {
            let z = &pre_input.row(t) + &self.w_hh.dot(&h_prev);
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                let c = f * c_prev[k] + i * g;
                let ct = c.tanh();
                trace.input_gate[[t, k]] = i;
                trace.forget_gate[[t, k]] = f;
                trace.cell_gate[[t, k]] = g;
                trace.output_gate[[t, k]] = o;
                trace.cell[[t, k]] = c;
                trace.cell_tanh[[t, k]] = ct;
                c_prev[k] = c;
                h_prev[k] = o * ct;
            }
            trace.hidden.row_mut(t).assign(&h_prev);
        }
        trace
    }

    /// Backpropagation through time. `d_hidden` is `dL/dh_t` from above, in
    /// time order. Returns `dL/dx`.
    pub fn backward(
        &self,
        x: &ArrayView2<f64>,
        trace: &LstmTrace,
        d_hidden: &ArrayView2<f64>,
        reverse: bool,
        grad: &mut LstmCell,
    ) -> Array2<f64> {
        let t_len = x.nrows();
        let h = self.hidden_size();
        let mut d_pre = Array2::<f64>::zeros((t_len, 4 * h));
        // hidden state fed into each step
        let mut h_in = Array2::<f64>::zeros((t_len, h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        let steps: Vec<usize> = Self::order(t_len, reverse).collect();
        for (pos, &t) in steps.iter().enumerate().rev() {
            let prev = pos.checked_sub(1).map(|p| steps[p]);
            if let Some(p) = prev {
                h_in.row_mut(t).assign(&trace.hidden.row(p));
            }
            let mut dz = d_pre.row_mut(t);
            for k in 0..h {
                let i = trace.input_gate[[t, k]];
                let f = trace.forget_gate[[t, k]];
                let g = trace.cell_gate[[t, k]];
                let o = trace.output_gate[[t, k]];
                let ct = trace.cell_tanh[[t, k]];
                let c_prev = prev.map_or(0.0, |p| trace.cell[[p, k]]);
                let dh = d_hidden[[t, k]] + dh_next[k];
                let d_o = dh * ct;
                let dc = dh * o * (1.0 - ct * ct) + dc_next[k];
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next = self.w_hh.t().dot(&d_pre.row(t));
        }
        grad.w_hh += &d_pre.t().dot(&h_in);
        grad.w_ih += &d_pre.t().dot(x);
        grad.bias += &d_pre.sum_axis(Axis(0));
        d_pre.dot(&self.w_ih)
    }
}

impl Params for LstmCell {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        vec![
            ("w_ih".into(), self.w_ih.view().into_dyn()),
            ("w_hh".into(), self.w_hh.view().into_dyn()),
            ("bias".into(), self.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        vec![
            ("w_ih".into(), self.w_ih.view_mut().into_dyn()),
            ("w_hh".into(), self.w_hh.view_mut().into_dyn()),
            ("bias".into(), self.bias.view_mut().into_dyn()),
        ]
    }
}

/// Forward and backward LSTM over the same input; outputs concatenated
/// `[forward, backward]` per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    fwd: LstmTrace,
    bwd: LstmTrace,
}

impl BiLstm {
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiLstm {
            forward: LstmCell::init(input, hidden, rng),
            backward: LstmCell::init(input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstm {
            forward: LstmCell::zeros(input, hidden),
            backward: LstmCell::zeros(input, hidden),
        }
    }

    pub fn run(&self, x: &ArrayView2<f64>) -> (Array2<f64>, BiLstmTrace) {
        let fwd = self.forward.forward(x, false);
        let bwd = self.backward.forward(x, true);
        let h = self.forward.hidden_size();
        let mut out = Array2::zeros((x.nrows(), 2 * h));
        out.slice_mut(s![.., ..h]).assign(&fwd.hidden);
        out.slice_mut(s![.., h..]).assign(&bwd.hidden);
        (out, BiLstmTrace { fwd, bwd })
    }

    pub fn backprop(
        &self,
        x: &ArrayView2<f64>,
        trace: &BiLstmTrace,
        d_out: &ArrayView2<f64>,
        grad: &mut BiLstm,
    ) -> Array2<f64> {
        let h = self.forward.hidden_size();
        let dx_f = self
            .forward
            .backward(x, &trace.fwd, &d_out.slice(s![.., ..h]), false, &mut grad.forward);
        let dx_b = self
            .backward
            .backward(x, &trace.bwd, &d_out.slice(s![.., h..]), true, &mut grad.backward);
        dx_f + dx_b
    }
}

impl Params for BiLstm {
    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        prefixed("forward", self.forward.tensors())
            .into_iter()
            .chain(prefixed("backward", self.backward.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        prefixed("forward", self.forward.tensors_mut())
            .into_iter()
            .chain(prefixed("backward", self.backward.tensors_mut()))
            .collect()
    }
}
