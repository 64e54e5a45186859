//! Conditional diffusion on a two-mode toy: a cue bit in the observation picks
//! which of two action chunks to produce.

use ndarray::{Array1, Array2};
use omnidp::nn::{cosine_lr, Adam, Parameterized};
use omnidp::policy::{denoise_loss, sample, ActionChunk, Denoiser, LossWeighting, NoiseSchedule, Observation};
use omnidp::rng::seeded;
use omnidp::{ACTION_DIM, PROPRIO_DIM};
use rand::Rng;

const H: usize = 2;

fn mode(cue: bool) -> Array1<f64> {
    Array1::from_elem(H * ACTION_DIM, if cue { 0.6 } else { -0.6 })
}

fn obs(cue: bool) -> Observation {
    let mut f = Array1::zeros(4);
    f[0] = if cue { 1.0 } else { -1.0 };
    Observation::new(f, Array1::zeros(PROPRIO_DIM)).expect("toy shapes")
}

fn main() -> omnidp::Result<()> {
    let sched = NoiseSchedule::default();
    let mut den = Denoiser::new(H, 4, &[64, 64], 16, &mut seeded(0))?;
    let mut adam = Adam::new(3e-3, den.param_count());
    let mut rng = seeded(1);
    let (b, steps) = (32, 1500);
    for step in 0..steps {
        let cues: Vec<bool> = (0..b).map(|_| rng.random_bool(0.5)).collect();
        let mut a0 = Array2::zeros((b, H * ACTION_DIM));
        let mut feats = Array2::zeros((b, 4));
        for (r, &c) in cues.iter().enumerate() {
            a0.row_mut(r).assign(&mode(c));
            feats[[r, 0]] = if c { 1.0 } else { -1.0 };
        }
        let ks: Vec<usize> = (0..b).map(|_| rng.random_range(1..=sched.steps())).collect();
        let eps = omnidp::policy::standard_normal(b, H * ACTION_DIM, &mut rng);
        let p = Array2::zeros((b, PROPRIO_DIM));
        let out = denoise_loss(&den, &sched, a0.view(), feats.view(), p.view(), &ks, eps.view(), LossWeighting::MinSnr(1.0))?;
        adam.update_with_lr(&mut den, &out.grad, cosine_lr(3e-3, step, steps));
        if step % 500 == 0 {
            println!("step {step}: loss {:.5}", out.loss);
        }
    }
    for cue in [false, true] {
        let mut right = 0;
        for s in 0..20 {
            let chunk: ActionChunk = sample(&den, &sched, &obs(cue), s)?;
            let err = (&chunk.flatten() - &mode(cue)).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
            right += usize::from(err < 0.1);
        }
        println!("cue {cue}: {right}/20 samples within 0.1 of the cued mode");
    }
    Ok(())
}
