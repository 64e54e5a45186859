//! Behavior cloning on recorded episodes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{cosine_lr, Adam, Parameterized};
use crate::pointcloud::AggregatedCloud;
use crate::policy::{ActionChunk, ActionNormalizer, LossWeighting, Policy, PolicyConfig};
use crate::rng::{derive_seed, seeded};
use crate::{ACTION_DIM, PROPRIO_DIM};

use super::episode::{write_episode, Episode};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub policy: PolicyConfig,
    pub steps: usize,
    pub batch: usize,
    /// Peak Adam step size; decays to zero on a cosine.
    pub lr: f64,
    pub weighting: LossWeighting,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            policy: PolicyConfig::default(),
            steps: 2000,
            batch: 32,
            lr: 1e-3,
            weighting: LossWeighting::MinSnr(1.0),
            seed: 0,
        }
    }
}

/// One supervised example: observation at tick `t` and the next `H` actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub cloud: AggregatedCloud,
    pub proprio: Vec<f64>,
    pub chunk: ActionChunk,
}

/// Sorts episodes by (task, sensor, seed), breaking ties on their encoded bytes,
/// so the file order of a dataset never matters.
pub fn canonical_order(episodes: &mut [Episode]) -> Result<()> {
    let mut keyed = Vec::with_capacity(episodes.len());
    for (i, ep) in episodes.iter().enumerate() {
        let mut bytes = Vec::new();
        write_episode(ep, &mut bytes)?;
        keyed.push(((ep.header.task, ep.header.sensor, ep.header.seed), bytes, i));
    }
    keyed.sort();
    let order: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();
    let sorted: Vec<Episode> = order.iter().map(|&i| episodes[i].clone()).collect();
    episodes.clone_from_slice(&sorted);
    Ok(())
}

/// Chunks `actions[t..t+horizon]`, repeating the final action past the end.
pub fn make_samples(episodes: &[Episode], horizon: usize) -> Result<Vec<Sample>> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be >= 1".into()));
    }
    let mut out = Vec::new();
    for ep in episodes {
        ep.validate()?;
        let actions: Vec<Vec<f64>> = ep.frames.iter().map(|f| f.action_f64()).collect();
        let last = actions.len().saturating_sub(1);
        for (t, f) in ep.frames.iter().enumerate() {
            let rows: Vec<Vec<f64>> = (0..horizon).map(|h| actions[(t + h).min(last)].clone()).collect();
            out.push(Sample {
                cloud: f.cloud(),
                proprio: f.proprio_f64(),
                chunk: ActionChunk::from_rows(&rows)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: Policy,
    /// Minibatch loss at every step.
    pub losses: Vec<f64>,
}

pub fn train(cfg: &TrainConfig, episodes: &[Episode]) -> Result<TrainOutput> {
    if episodes.is_empty() {
        return Err(Error::InvalidInput("training needs at least one episode".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::OutOfRange {
            what: "learning rate".into(),
            value: cfg.lr,
        });
    }
    for ep in episodes {
        for f in &ep.frames {
            if f.proprio.len() != PROPRIO_DIM {
                return Err(Error::dims("episode proprio", PROPRIO_DIM, f.proprio.len()));
            }
            if f.action.len() != ACTION_DIM {
                return Err(Error::dims("episode action", ACTION_DIM, f.action.len()));
            }
        }
    }
    let mut eps = episodes.to_vec();
    canonical_order(&mut eps)?;
    let samples = make_samples(&eps, cfg.policy.horizon)?;
    let rows: Vec<Vec<f64>> = eps.iter().flat_map(|e| e.frames.iter().map(|f| f.action_f64())).collect();
    let normalizer = ActionNormalizer::fit(rows.iter().map(|r| r.as_slice()))?;

    let mut policy = Policy::new(&cfg.policy, normalizer, &mut seeded(derive_seed(cfg.seed, 0)))?;
    let mut rng = seeded(derive_seed(cfg.seed, 1));
    let mut adam = Adam::new(cfg.lr, policy.param_count());
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.random_range(0..samples.len())).collect();
        let clouds: Vec<&AggregatedCloud> = idx.iter().map(|&i| &samples[i].cloud).collect();
        let proprio: Vec<&[f64]> = idx.iter().map(|&i| samples[i].proprio.as_slice()).collect();
        let chunks: Vec<&ActionChunk> = idx.iter().map(|&i| &samples[i].chunk).collect();
        let (loss, grad) = policy.batch_loss(&clouds, &proprio, &chunks, cfg.weighting, &mut rng)?;
        if !loss.is_finite() || !grad.all_finite() {
            return Err(Error::NonFinite(format!("loss {loss} at step {step}")));
        }
        adam.update_with_lr(&mut policy, &grad, cosine_lr(cfg.lr, step, cfg.steps));
        losses.push(loss);
    }
    if !policy.all_finite() {
        return Err(Error::NonFinite("parameters after training".into()));
    }
    Ok(TrainOutput { policy, losses })
}

pub const LOSS_CSV_HEADER: &str = "step,loss";

pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from(LOSS_CSV_HEADER);
    s.push('\n');
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{i},{l}");
    }
    s
}

pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    fs::write(path, loss_csv(losses))?;
    Ok(())
}
