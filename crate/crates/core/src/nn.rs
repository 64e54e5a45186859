//! Dense layers, MLPs with cached activations, named parameter blocks and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Borrowed view of one named parameter block, row-major.
pub struct Block<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

pub struct BlockMut<'a> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a mut [f64],
}

/// Anything exposing its parameters as an ordered list of named blocks.
pub trait Parameterized {
    fn blocks(&self) -> Vec<Block<'_>>;
    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.data.iter().copied()).collect()
    }

    fn set_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        for b in self.blocks_mut() {
            let n = b.data.len();
            b.data.copy_from_slice(&values[at..at + n]);
            at += n;
        }
    }

    fn fill(&mut self, v: f64) {
        for b in self.blocks_mut() {
            b.data.fill(v);
        }
    }

    fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }
}

/// `y = act(x W^T + b)` applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    /// He-style normal initialization for relu, Glorot-style otherwise.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let gain = match activation {
            Activation::Relu => 2.0,
            _ => 1.0,
        };
        let std = (gain / input.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let weight = Array2::from_shape_fn((output, input), |_| normal.sample(rng));
        Self {
            weight,
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        let act = self.activation;
        if act != Activation::Identity {
            y.mapv_inplace(|v| act.apply(v));
        }
        y
    }

    /// Backward pass given the layer input, its output and `dL/dy`.
    /// Accumulates into `grad` and returns `dL/dx` when requested.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        mut dy: Array2<f64>,
        grad: &mut DenseLayer,
        need_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let act = self.activation;
        if act != Activation::Identity {
            ndarray::Zip::from(&mut dy)
                .and(&y)
                .for_each(|d, &yv| *d *= act.derivative_from_output(yv));
        }
        grad.weight += &dy.t().dot(&x);
        grad.bias += &dy.sum_axis(Axis(0));
        need_input_grad.then(|| dy.dot(&self.weight))
    }
}

/// Stack of dense layers; the forward pass keeps every activation for backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Activations of one MLP forward pass: `acts[0]` is the input.
pub struct MlpTrace {
    pub acts: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace holds the input")
    }
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`; hidden layers use `hidden`, the last `last`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, last: Activation, rng: &mut R) -> Self {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { last } else { hidden };
                DenseLayer::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.input_dim(), l.output_dim(), l.activation))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_dim())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim())
    }

    pub fn check_shapes(&self) -> Result<()> {
        for w in self.layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::dims("mlp layer chain", w[0].output_dim(), w[1].input_dim()));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: Array2<f64>) -> MlpTrace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for l in &self.layers {
            let y = l.forward(acts.last().unwrap().view());
            acts.push(y);
        }
        MlpTrace { acts }
    }

    pub fn predict(&self, x: Array2<f64>) -> Array2<f64> {
        let mut h = x;
        for l in &self.layers {
            h = l.forward(h.view());
        }
        h
    }

    /// Accumulates parameter gradients into `grad`; returns `dL/dinput` if asked.
    pub fn backward(&self, trace: &MlpTrace, dout: Array2<f64>, grad: &mut Mlp, need_input_grad: bool) -> Option<Array2<f64>> {
        let mut d = dout;
        let n = self.layers.len();
        for i in (0..n).rev() {
            let want = i > 0 || need_input_grad;
            match self.layers[i].backward(trace.acts[i].view(), trace.acts[i + 1].view(), d, &mut grad.layers[i], want) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }

    pub fn named_blocks<'a>(&'a self, prefix: &str) -> Vec<Block<'a>> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            out.push(Block {
                name: format!("{prefix}.{i}.weight"),
                rows: l.weight.nrows(),
                cols: l.weight.ncols(),
                data: l.weight.as_slice().expect("standard layout"),
            });
            out.push(Block {
                name: format!("{prefix}.{i}.bias"),
                rows: 1,
                cols: l.bias.len(),
                data: l.bias.as_slice().expect("standard layout"),
            });
        }
        out
    }

    pub fn named_blocks_mut<'a>(&'a mut self, prefix: &str) -> Vec<BlockMut<'a>> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter_mut().enumerate() {
            let (rows, cols) = l.weight.dim();
            out.push(BlockMut {
                name: format!("{prefix}.{i}.weight"),
                rows,
                cols,
                data: l.weight.as_slice_mut().expect("standard layout"),
            });
            let n = l.bias.len();
            out.push(BlockMut {
                name: format!("{prefix}.{i}.bias"),
                rows: 1,
                cols: n,
                data: l.bias.as_slice_mut().expect("standard layout"),
            });
        }
        out
    }
}

impl Parameterized for Mlp {
    fn blocks(&self) -> Vec<Block<'_>> {
        self.named_blocks("mlp")
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        self.named_blocks_mut("mlp")
    }
}

/// Adam with fixed hyperparameters; moment buffers follow block order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update<P: Parameterized>(&mut self, params: &mut P, grads: &P) {
        self.update_with_lr(params, grads, self.lr);
    }

    pub fn update_with_lr<P: Parameterized>(&mut self, params: &mut P, grads: &P, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let g_blocks = grads.blocks();
        let mut at = 0;
        for (p, g) in params.blocks_mut().into_iter().zip(g_blocks.iter()) {
            for (w, &gv) in p.data.iter_mut().zip(g.data.iter()) {
                let m = &mut self.m[at];
                let v = &mut self.v[at];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gv;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gv * gv;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                at += 1;
            }
        }
    }
}

/// Cosine decay from `base` at step 0 to zero at `total`.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total) as f64) / total as f64;
    0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Relative gap between an analytic and a finite-difference derivative.
/// `floor` keeps near-zero components from dominating; pass something scaled to
/// the loss magnitude since central differences lose `|L| * 1e-16 / h` absolutely.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}
