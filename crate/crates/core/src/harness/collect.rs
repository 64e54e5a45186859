//! Scripted-expert demonstration collection.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ik::ExpertConfig;
use crate::rng::derive_seed;

use super::episode::{save_episode, Episode};
use super::rollout::{run_episode, ExpertAgent};
use super::sensor::{SensorKind, SensorSettings};
use super::task::TaskSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct CollectConfig {
    pub task: TaskSpec,
    pub sensor: SensorKind,
    pub settings: SensorSettings,
    pub expert: ExpertConfig,
    pub episodes: usize,
    pub seed: u64,
    /// Episodes whose expert failed to converge on at least this fraction of
    /// ticks are regenerated.
    pub max_nonconverged_fraction: f64,
    /// Also regenerate episodes in which the expert did not succeed or collided.
    pub require_success: bool,
    /// Attempts per requested episode before giving up.
    pub max_attempts_per_episode: usize,
}

impl CollectConfig {
    pub fn new(task: TaskSpec, sensor: SensorKind, episodes: usize, seed: u64) -> Self {
        Self {
            task,
            sensor,
            settings: SensorSettings::default(),
            expert: ExpertConfig::default(),
            episodes,
            seed,
            max_nonconverged_fraction: 0.2,
            require_success: true,
            max_attempts_per_episode: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollectReport {
    pub kept: usize,
    pub attempts: usize,
    pub discarded_nonconverged: usize,
    pub discarded_failed: usize,
}

impl fmt::Display for CollectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kept {} of {} attempts ({} non-converged, {} failed)",
            self.kept, self.attempts, self.discarded_nonconverged, self.discarded_failed
        )
    }
}

/// Seed of the scene behind collection attempt `attempt`.
pub fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    derive_seed(seed, 0xC011_0000 + attempt as u64)
}

/// Runs the expert until `cfg.episodes` episodes pass the filters.
pub fn collect(cfg: &CollectConfig) -> Result<(Vec<Episode>, CollectReport)> {
    if cfg.episodes == 0 {
        return Err(Error::InvalidInput("episode count must be >= 1".into()));
    }
    let budget = cfg.episodes * cfg.max_attempts_per_episode.max(1);
    let mut report = CollectReport::default();
    let mut out = Vec::with_capacity(cfg.episodes);
    while out.len() < cfg.episodes {
        if report.attempts == budget {
            return Err(Error::InvalidInput(format!(
                "expert produced only {} usable episodes in {budget} attempts",
                out.len()
            )));
        }
        let seed = attempt_seed(cfg.seed, report.attempts);
        report.attempts += 1;
        let inst = cfg.task.generate(seed)?;
        let mut agent = ExpertAgent::new(cfg.expert.clone(), 1);
        let (ep, outcome) = run_episode(&cfg.task, &inst, seed, cfg.sensor, &cfg.settings, &mut agent)?;
        if outcome.nonconverged_ticks as f64 >= cfg.max_nonconverged_fraction * outcome.steps as f64 {
            report.discarded_nonconverged += 1;
            continue;
        }
        if cfg.require_success && (!outcome.success || outcome.collision) {
            report.discarded_failed += 1;
            continue;
        }
        out.push(ep);
    }
    report.kept = out.len();
    Ok((out, report))
}

pub fn episode_file_name(index: usize) -> String {
    format!("episode_{index:04}.odpe")
}

/// Writes `episode_0000.odpe`, `episode_0001.odpe`, ... into `dir`.
pub fn write_dataset(dir: &Path, episodes: &[Episode]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    episodes
        .iter()
        .enumerate()
        .map(|(i, ep)| {
            let path = dir.join(episode_file_name(i));
            save_episode(ep, &path)?;
            Ok(path)
        })
        .collect()
}
