//! Diffusion action decoder.
//!
//! Chunks of `H x 28` upper-body joint targets are generated by reversing a
//! DDPM noising process. The denoiser is a plain MLP over the flattened noisy
//! chunk, the global point-cloud feature, proprioception and a sinusoidal
//! step embedding. Its raw output is a clean-chunk estimate `x0`; the noise
//! prediction used by the loss is derived from it as
//! `(a_k - sqrt(ab_k) x0) / sqrt(1 - ab_k)`, so the training objective is
//! still the usual noise MSE.

mod checkpoint;
mod schedule;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::ik::action_limits;
use crate::nn::{Activation, Block, BlockMut, Mlp, Parameterized};
use crate::pointcloud::AggregatedCloud;
use crate::rng::seeded;
use crate::{ACTION_DIM, LOWER_BODY_DIM, PROPRIO_DIM};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use schedule::{
    eps_from_x0, posterior_step, q_sample_array, standard_normal, x0_from_eps, NoiseSchedule, DEFAULT_BETA_END,
    DEFAULT_BETA_START, DEFAULT_STEPS,
};

pub const DEFAULT_HORIZON: usize = 8;
pub const DEFAULT_EXECUTE: usize = 4;
pub const DEFAULT_EMBED_WIDTH: usize = 32;

/// `H x 28` joint targets, one row per control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    data: Array2<f64>,
}

impl ActionChunk {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.ncols() != ACTION_DIM {
            return Err(Error::dims("action chunk columns", ACTION_DIM, data.ncols()));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidInput("action chunk needs at least one row".into()));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let h = rows.len();
        let mut data = Array2::zeros((h, ACTION_DIM));
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ACTION_DIM {
                return Err(Error::dims("action row", ACTION_DIM, r.len()));
            }
            data.row_mut(i).assign(&ArrayView1::from(r.as_slice()));
        }
        Self::new(data)
    }

    pub fn horizon(&self) -> usize {
        self.data.nrows()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.data.row(t)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Row-major flattening, `H * 28` long.
    pub fn flatten(&self) -> Array1<f64> {
        Array1::from_iter(self.data.iter().copied())
    }

    pub fn clamp(&mut self, lo: &[f64], hi: &[f64]) {
        for mut row in self.data.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = v.clamp(lo[j], hi[j]);
            }
        }
    }
}

/// Policy conditioning: global point-cloud feature and proprioception as fed
/// to the network (see [`ActionNormalizer::proprio_input`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub feature: Array1<f64>,
    pub proprio: Array1<f64>,
}

impl Observation {
    pub fn new(feature: Array1<f64>, proprio: Array1<f64>) -> Result<Self> {
        if proprio.len() != PROPRIO_DIM {
            return Err(Error::dims("proprioception", PROPRIO_DIM, proprio.len()));
        }
        Ok(Self { feature, proprio })
    }
}

/// Interleaved `(sin, cos)` pairs at geometrically spaced frequencies.
pub fn timestep_embedding(k: usize, width: usize) -> Result<Array1<f64>> {
    if width == 0 || width % 2 != 0 {
        return Err(Error::InvalidInput(format!("embedding width must be even and positive, got {width}")));
    }
    let half = width / 2;
    let mut out = Array1::zeros(width);
    for i in 0..half {
        let freq = 10_000f64.powf(-(i as f64) / half as f64);
        let a = k as f64 * freq;
        out[2 * i] = a.sin();
        out[2 * i + 1] = a.cos();
    }
    Ok(out)
}

/// Per-dimension affine map of actions onto `[-1, 1]` from dataset extrema.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionNormalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Dimensions that never move still get a usable scale.
const MIN_SCALE: f64 = 1e-2;

impl ActionNormalizer {
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; ACTION_DIM],
            scale: vec![1.0; ACTION_DIM],
        }
    }

    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut lo = vec![f64::INFINITY; ACTION_DIM];
        let mut hi = vec![f64::NEG_INFINITY; ACTION_DIM];
        let mut any = false;
        for r in rows {
            if r.len() != ACTION_DIM {
                return Err(Error::dims("action row", ACTION_DIM, r.len()));
            }
            any = true;
            for j in 0..ACTION_DIM {
                lo[j] = lo[j].min(r[j]);
                hi[j] = hi[j].max(r[j]);
            }
        }
        if !any {
            return Err(Error::InvalidInput("cannot fit action statistics on no data".into()));
        }
        Ok(Self {
            mean: lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            scale: lo.iter().zip(&hi).map(|(l, h)| (0.5 * (h - l)).max(MIN_SCALE)).collect(),
        })
    }

    pub fn normalize(&self, chunk: ArrayView2<f64>) -> Array2<f64> {
        let mut out = chunk.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    pub fn denormalize(&self, chunk: ArrayView2<f64>) -> Array2<f64> {
        let mut out = chunk.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.scale[j] + self.mean[j];
            }
        }
        out
    }

    /// Network input for proprioception: the lower body passes through, the
    /// upper body shares the action statistics.
    pub fn proprio_input(&self, proprio: &[f64]) -> Result<Array1<f64>> {
        if proprio.len() != PROPRIO_DIM {
            return Err(Error::dims("proprioception", PROPRIO_DIM, proprio.len()));
        }
        Ok(Array1::from_iter(proprio.iter().enumerate().map(|(i, &v)| {
            if i < LOWER_BODY_DIM {
                v
            } else {
                let j = i - LOWER_BODY_DIM;
                (v - self.mean[j]) / self.scale[j]
            }
        })))
    }
}

/// Clean-chunk estimator over `[noisy chunk; feature; proprio; step embedding]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub mlp: Mlp,
    pub horizon: usize,
    pub feature_dim: usize,
    pub emb_width: usize,
    /// Clip clean-chunk estimates to `[-1, 1]` while sampling.
    pub clip_sample: bool,
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(
        horizon: usize,
        feature_dim: usize,
        hidden: &[usize],
        emb_width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if horizon == 0 || feature_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidInput("denoiser widths must be positive".into()));
        }
        timestep_embedding(0, emb_width)?;
        let cw = horizon * ACTION_DIM;
        let mut widths = vec![cw + feature_dim + PROPRIO_DIM + emb_width];
        widths.extend_from_slice(hidden);
        widths.push(cw);
        Ok(Self {
            mlp: Mlp::init(&widths, Activation::Relu, Activation::Identity, rng),
            horizon,
            feature_dim,
            emb_width,
            clip_sample: true,
        })
    }

    pub fn chunk_width(&self) -> usize {
        self.horizon * ACTION_DIM
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.mlp.layers[..self.mlp.layers.len() - 1].iter().map(|l| l.output_dim()).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mlp: self.mlp.zeros_like(),
            horizon: self.horizon,
            feature_dim: self.feature_dim,
            emb_width: self.emb_width,
            clip_sample: self.clip_sample,
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        self.mlp.check_shapes()?;
        let cw = self.chunk_width();
        let input = cw + self.feature_dim + PROPRIO_DIM + self.emb_width;
        if self.mlp.input_dim() != input {
            return Err(Error::dims("denoiser input", input, self.mlp.input_dim()));
        }
        if self.mlp.output_dim() != cw {
            return Err(Error::dims("denoiser output", cw, self.mlp.output_dim()));
        }
        Ok(())
    }

    fn input(&self, noisy: ArrayView2<f64>, feats: ArrayView2<f64>, proprio: ArrayView2<f64>, ks: &[usize]) -> Result<Array2<f64>> {
        let b = noisy.nrows();
        let cw = self.chunk_width();
        if noisy.ncols() != cw {
            return Err(Error::dims("flattened chunk", cw, noisy.ncols()));
        }
        if feats.dim() != (b, self.feature_dim) {
            return Err(Error::dims("global feature", self.feature_dim, feats.ncols()));
        }
        if proprio.dim() != (b, PROPRIO_DIM) {
            return Err(Error::dims("proprioception", PROPRIO_DIM, proprio.ncols()));
        }
        if ks.len() != b {
            return Err(Error::dims("diffusion steps", b, ks.len()));
        }
        let mut x = Array2::zeros((b, self.mlp.input_dim()));
        x.slice_mut(s![.., ..cw]).assign(&noisy);
        x.slice_mut(s![.., cw..cw + self.feature_dim]).assign(&feats);
        let p0 = cw + self.feature_dim;
        x.slice_mut(s![.., p0..p0 + PROPRIO_DIM]).assign(&proprio);
        let e0 = p0 + PROPRIO_DIM;
        for (r, &k) in ks.iter().enumerate() {
            x.slice_mut(s![r, e0..]).assign(&timestep_embedding(k, self.emb_width)?);
        }
        Ok(x)
    }

    /// Clean-chunk estimates, `B x (H * 28)`.
    pub fn predict_x0(&self, noisy: ArrayView2<f64>, feats: ArrayView2<f64>, proprio: ArrayView2<f64>, ks: &[usize]) -> Result<Array2<f64>> {
        Ok(self.mlp.predict(self.input(noisy, feats, proprio, ks)?))
    }
}

impl Parameterized for Denoiser {
    fn blocks(&self) -> Vec<Block<'_>> {
        self.mlp.named_blocks("denoiser")
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        self.mlp.named_blocks_mut("denoiser")
    }
}

/// Loss and gradients of a denoising minibatch.
pub struct DenoiseLoss {
    pub loss: f64,
    pub grad: Denoiser,
    /// `dL/dfeature`, `B x D`, for backpropagation into the encoder.
    pub d_features: Array2<f64>,
}

/// Per-step weight on the squared noise error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossWeighting {
    /// Plain noise MSE.
    Noise,
    /// `min(snr, gamma) / snr`: caps the weight of nearly clean steps, which
    /// otherwise dominate the plain loss.
    MinSnr(f64),
}

impl LossWeighting {
    pub fn weight(self, alpha_bar: f64) -> f64 {
        match self {
            LossWeighting::Noise => 1.0,
            LossWeighting::MinSnr(gamma) => {
                let snr = alpha_bar / (1.0 - alpha_bar);
                snr.min(gamma) / snr
            }
        }
    }
}

/// Weighted noise MSE averaged over batch and chunk entries, for explicit
/// steps `ks` and noise `eps` (both `B x (H * 28)` like `a0`).
#[allow(clippy::too_many_arguments)]
pub fn denoise_loss(
    den: &Denoiser,
    sched: &NoiseSchedule,
    a0: ArrayView2<f64>,
    feats: ArrayView2<f64>,
    proprio: ArrayView2<f64>,
    ks: &[usize],
    eps: ArrayView2<f64>,
    weighting: LossWeighting,
) -> Result<DenoiseLoss> {
    if a0.dim() != eps.dim() {
        return Err(Error::dims("noise shape", a0.len(), eps.len()));
    }
    let b = a0.nrows();
    if b == 0 {
        return Err(Error::InvalidInput("empty minibatch".into()));
    }
    for &k in ks {
        sched.check_step(k)?;
    }
    let mut noisy = Array2::zeros(a0.dim());
    for (r, &k) in ks.iter().enumerate().take(b) {
        let ab = sched.alpha_bar(k);
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        ndarray::Zip::from(noisy.row_mut(r))
            .and(a0.row(r))
            .and(eps.row(r))
            .for_each(|o, &x, &e| *o = sa * x + sn * e);
    }
    let input = den.input(noisy.view(), feats, proprio, ks)?;
    let trace = den.mlp.forward(input);
    let x0 = trace.output();
    let count = a0.len() as f64;
    let mut loss = 0.0;
    let mut dx0 = Array2::zeros(a0.dim());
    for (r, &k) in ks.iter().enumerate() {
        let ab = sched.alpha_bar(k);
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        let w = weighting.weight(ab);
        for c in 0..a0.ncols() {
            let pred = (noisy[[r, c]] - sa * x0[[r, c]]) / sn;
            let diff = pred - eps[[r, c]];
            loss += w * diff * diff;
            dx0[[r, c]] = -(sa / sn) * 2.0 * w * diff / count;
        }
    }
    let mut grad = den.zeros_like();
    let dinput = den.mlp.backward(&trace, dx0, &mut grad.mlp, true).expect("input gradient requested");
    let cw = den.chunk_width();
    Ok(DenoiseLoss {
        loss: loss / count,
        grad,
        d_features: dinput.slice(s![.., cw..cw + den.feature_dim]).to_owned(),
    })
}

/// Single-sample training loss with `k` and `eps` drawn from `seed`.
pub fn training_loss(
    den: &Denoiser,
    sched: &NoiseSchedule,
    obs: &Observation,
    a0: &ActionChunk,
    seed: u64,
) -> Result<(f64, Denoiser, Array1<f64>)> {
    let mut rng = seeded(seed);
    let k = rng.random_range(1..=sched.steps());
    let cw = a0.horizon() * ACTION_DIM;
    let eps = standard_normal(1, cw, &mut rng);
    let a0 = a0.flatten().insert_axis(Axis(0));
    let out = denoise_loss(
        den,
        sched,
        a0.view(),
        obs.feature.view().insert_axis(Axis(0)),
        obs.proprio.view().insert_axis(Axis(0)),
        &[k],
        eps.view(),
        LossWeighting::Noise,
    )?;
    Ok((out.loss, out.grad, out.d_features.row(0).to_owned()))
}

fn reverse_step<R: Rng + ?Sized>(
    den: &Denoiser,
    sched: &NoiseSchedule,
    obs: &Observation,
    a_k: ArrayView2<f64>,
    k: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    sched.check_step(k)?;
    let flat = a_k.to_shape((1, a_k.len())).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut x0 = den.predict_x0(
        flat.view(),
        obs.feature.view().insert_axis(Axis(0)),
        obs.proprio.view().insert_axis(Axis(0)),
        &[k],
    )?;
    if den.clip_sample {
        x0.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    }
    let x0 = x0.into_shape_with_order(a_k.dim()).expect("chunk-shaped prediction");
    posterior_step(sched, a_k, x0.view(), k, rng)
}

/// One reverse step `a_k -> a_{k-1}`; the noise for the step comes from `seed`.
pub fn p_sample_step(
    den: &Denoiser,
    sched: &NoiseSchedule,
    obs: &Observation,
    a_k: &ActionChunk,
    k: usize,
    seed: u64,
) -> Result<ActionChunk> {
    ActionChunk::new(reverse_step(den, sched, obs, a_k.view(), k, &mut seeded(seed))?)
}

/// Full reverse chain from seeded noise, in normalized action units, clamped
/// to `[-1, 1]`.
pub fn sample(den: &Denoiser, sched: &NoiseSchedule, obs: &Observation, seed: u64) -> Result<ActionChunk> {
    let mut rng = seeded(seed);
    let mut a = standard_normal(den.horizon, ACTION_DIM, &mut rng);
    for k in (1..=sched.steps()).rev() {
        a = reverse_step(den, sched, obs, a.view(), k, &mut rng)?;
    }
    a.mapv_inplace(|v| v.clamp(-1.0, 1.0));
    ActionChunk::new(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub encoder: EncoderConfig,
    pub horizon: usize,
    pub execute: usize,
    pub hidden: Vec<usize>,
    pub emb_width: usize,
    pub window: usize,
    pub clip_sample: bool,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            horizon: DEFAULT_HORIZON,
            execute: DEFAULT_EXECUTE,
            hidden: vec![256, 256],
            emb_width: DEFAULT_EMBED_WIDTH,
            window: crate::pointcloud::DEFAULT_WINDOW,
            clip_sample: true,
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
        }
    }
}

/// Encoder, denoiser, schedule and action statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub encoder: Encoder,
    pub denoiser: Denoiser,
    pub schedule: NoiseSchedule,
    pub normalizer: ActionNormalizer,
    /// Frames aggregated per observation.
    pub window: usize,
    /// Chunk rows executed before replanning.
    pub execute: usize,
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(cfg: &PolicyConfig, normalizer: ActionNormalizer, rng: &mut R) -> Result<Self> {
        if cfg.execute == 0 || cfg.execute > cfg.horizon {
            return Err(Error::InvalidInput(format!(
                "executed steps must lie in 1..={}, got {}",
                cfg.horizon, cfg.execute
            )));
        }
        if cfg.window == 0 {
            return Err(Error::InvalidInput("temporal window must be >= 1".into()));
        }
        let encoder = Encoder::new(&cfg.encoder, rng)?;
        let mut denoiser = Denoiser::new(cfg.horizon, encoder.feature_dim(), &cfg.hidden, cfg.emb_width, rng)?;
        denoiser.clip_sample = cfg.clip_sample;
        Ok(Self {
            encoder,
            denoiser,
            schedule: NoiseSchedule::linear(cfg.steps, cfg.beta_start, cfg.beta_end)?,
            normalizer,
            window: cfg.window,
            execute: cfg.execute,
        })
    }

    pub fn horizon(&self) -> usize {
        self.denoiser.horizon
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            denoiser: self.denoiser.zeros_like(),
            schedule: self.schedule.clone(),
            normalizer: self.normalizer.clone(),
            window: self.window,
            execute: self.execute,
        }
    }

    pub fn observe(&self, cloud: &AggregatedCloud, proprio: &[f64]) -> Result<Observation> {
        let feature = crate::encoder::encoder_forward(&self.encoder, cloud)?;
        Observation::new(feature, self.normalizer.proprio_input(proprio)?)
    }

    /// Samples a chunk in joint units, clamped to the action limits.
    pub fn act(&self, cloud: &AggregatedCloud, proprio: &[f64], seed: u64) -> Result<ActionChunk> {
        let obs = self.observe(cloud, proprio)?;
        let norm = sample(&self.denoiser, &self.schedule, &obs, seed)?;
        let mut chunk = ActionChunk::new(self.normalizer.denormalize(norm.view()))?;
        let (lo, hi) = action_limits();
        chunk.clamp(&lo, &hi);
        Ok(chunk)
    }

    /// Mean loss over a minibatch and gradients for every parameter.
    pub fn batch_loss<R: Rng + ?Sized>(
        &self,
        clouds: &[&AggregatedCloud],
        proprio: &[&[f64]],
        chunks: &[&ActionChunk],
        weighting: LossWeighting,
        rng: &mut R,
    ) -> Result<(f64, Policy)> {
        let b = clouds.len();
        if proprio.len() != b || chunks.len() != b {
            return Err(Error::dims("minibatch", b, proprio.len().min(chunks.len())));
        }
        let cw = self.denoiser.chunk_width();
        let (feats, trace) = self.encoder.forward_batch(clouds)?;
        let mut p = Array2::zeros((b, PROPRIO_DIM));
        let mut a0 = Array2::zeros((b, cw));
        for r in 0..b {
            p.row_mut(r).assign(&self.normalizer.proprio_input(proprio[r])?);
            if chunks[r].horizon() != self.horizon() {
                return Err(Error::dims("chunk horizon", self.horizon(), chunks[r].horizon()));
            }
            let n = self.normalizer.normalize(chunks[r].view());
            a0.row_mut(r).assign(&Array1::from_iter(n.iter().copied()));
        }
        let ks: Vec<usize> = (0..b).map(|_| rng.random_range(1..=self.schedule.steps())).collect();
        let eps = standard_normal(b, cw, rng);
        let out = denoise_loss(&self.denoiser, &self.schedule, a0.view(), feats.view(), p.view(), &ks, eps.view(), weighting)?;
        let mut grad = self.zeros_like();
        grad.denoiser = out.grad;
        self.encoder.backward_batch(&trace, out.d_features.view(), &mut grad.encoder);
        Ok((out.loss, grad))
    }
}

impl Parameterized for Policy {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut b = self.encoder.blocks();
        b.extend(self.denoiser.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut b = self.encoder.blocks_mut();
        b.extend(self.denoiser.blocks_mut());
        b
    }
}
