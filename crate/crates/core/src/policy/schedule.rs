use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_BETA_START: f64 = 1e-3;
pub const DEFAULT_BETA_END: f64 = 0.2;

/// DDPM noise schedule over steps `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// `alpha_bars[k]` for `k = 0..=K`, with `alpha_bars[0] = 1`.
    alpha_bars: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_STEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).expect("valid default schedule")
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidInput("schedule needs at least one step".into()));
        }
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidInput("schedule needs at least one step".into()));
        }
        if let Some(&b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::OutOfRange {
                what: "beta".into(),
                value: b,
            });
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for b in &betas {
            let prev = alpha_bars[alpha_bars.len() - 1];
            alpha_bars.push(prev * (1.0 - b));
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn check_step(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.steps() {
            return Err(Error::OutOfRange {
                what: format!("diffusion step (1..={})", self.steps()),
                value: k as f64,
            });
        }
        Ok(())
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        1.0 - self.betas[k - 1]
    }

    /// Cumulative product; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bars[k]
    }

    /// Variance of the reverse-step posterior `q(a_{k-1} | a_k, a_0)`.
    pub fn posterior_variance(&self, k: usize) -> f64 {
        (1.0 - self.alpha_bar(k - 1)) / (1.0 - self.alpha_bar(k)) * self.beta(k)
    }
}

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::dims("noise shape", a.len(), b.len()));
    }
    Ok(())
}

/// Forward process: `sqrt(ab_k) a0 + sqrt(1 - ab_k) eps`.
pub fn q_sample_array(a0: ArrayView2<f64>, k: usize, eps: ArrayView2<f64>, sched: &NoiseSchedule) -> Result<Array2<f64>> {
    sched.check_step(k)?;
    same_shape(&a0, &eps)?;
    let ab = sched.alpha_bar(k);
    Ok(blend(a0, ab.sqrt(), eps, (1.0 - ab).sqrt()))
}

fn blend(a: ArrayView2<f64>, ca: f64, b: ArrayView2<f64>, cb: f64) -> Array2<f64> {
    let mut out = Array2::zeros(a.dim());
    ndarray::Zip::from(&mut out)
        .and(&a)
        .and(&b)
        .for_each(|o, &x, &y| *o = ca * x + cb * y);
    out
}

/// Noise implied by a clean-sample estimate: `(a_k - sqrt(ab_k) x0) / sqrt(1 - ab_k)`.
pub fn eps_from_x0(a_k: ArrayView2<f64>, x0: ArrayView2<f64>, k: usize, sched: &NoiseSchedule) -> Result<Array2<f64>> {
    sched.check_step(k)?;
    same_shape(&a_k, &x0)?;
    let ab = sched.alpha_bar(k);
    let s = (1.0 - ab).sqrt();
    Ok(blend(a_k, 1.0 / s, x0, -ab.sqrt() / s))
}

/// Clean sample implied by a noise estimate: `(a_k - sqrt(1 - ab_k) eps) / sqrt(ab_k)`.
pub fn x0_from_eps(a_k: ArrayView2<f64>, eps: ArrayView2<f64>, k: usize, sched: &NoiseSchedule) -> Result<Array2<f64>> {
    sched.check_step(k)?;
    same_shape(&a_k, &eps)?;
    let ab = sched.alpha_bar(k);
    Ok(blend(a_k, 1.0 / ab.sqrt(), eps, -(1.0 - ab).sqrt() / ab.sqrt()))
}

/// One reverse step given a clean-sample estimate: posterior mean plus
/// `sqrt(posterior_variance)` Gaussian noise, none at `k = 1`.
pub fn posterior_step<R: Rng + ?Sized>(
    sched: &NoiseSchedule,
    a_k: ArrayView2<f64>,
    x0: ArrayView2<f64>,
    k: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    sched.check_step(k)?;
    same_shape(&a_k, &x0)?;
    let ab = sched.alpha_bar(k);
    let ab_prev = sched.alpha_bar(k - 1);
    let c0 = ab_prev.sqrt() * sched.beta(k) / (1.0 - ab);
    let ck = sched.alpha(k).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    let mut out = blend(x0, c0, a_k, ck);
    if k > 1 {
        let sigma = sched.posterior_variance(k).sqrt();
        out.mapv_inplace(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));
    }
    Ok(out)
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}
