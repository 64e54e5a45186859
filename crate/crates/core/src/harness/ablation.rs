//! Full model against its no-omni and no-tap variants.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::encoder::Pooling;
use crate::error::{Error, Result};
use crate::ik::ExpertConfig;

use super::collect::{collect, CollectConfig};
use super::rollout::{evaluate, Metrics};
use super::sensor::{SensorKind, SensorSettings};
use super::task::TaskSpec;
use super::train::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// LiDAR, multi-frame window, time-aware pooling.
    Full,
    /// Depth-camera clouds from collection through evaluation.
    NoOmni,
    /// LiDAR, single frame, max pooling.
    NoTap,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoOmni, Variant::NoTap];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoOmni => "no-omni",
            Variant::NoTap => "no-tap",
        }
    }

    pub fn sensor(self) -> SensorKind {
        match self {
            Variant::NoOmni => SensorKind::DepthCam,
            _ => SensorKind::Lidar,
        }
    }

    /// Collection settings and training config for this variant, derived from
    /// the full model's.
    pub fn apply(self, settings: &SensorSettings, train: &TrainConfig) -> (SensorSettings, TrainConfig) {
        let mut s = settings.clone();
        let mut t = train.clone();
        t.policy.window = s.preprocess.window;
        if self == Variant::NoTap {
            s.preprocess.window = 1;
            t.policy.window = 1;
            t.policy.encoder.pooling = Pooling::Max;
        }
        (s, t)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub task: TaskSpec,
    /// Full-model sensing; variants adjust sensor, window and pooling.
    pub settings: SensorSettings,
    pub expert: ExpertConfig,
    pub train: TrainConfig,
    pub episodes: usize,
    pub collect_seed: u64,
    pub trials: usize,
    pub eval_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub metrics: Metrics,
}

pub const ABLATION_CSV_HEADER: &str = "variant,trials,successes,collisions,success_rate,collision_rate";

/// Collects, trains and evaluates one variant end to end.
pub fn run_variant(cfg: &AblationConfig, variant: Variant) -> Result<AblationRow> {
    let (settings, train_cfg) = variant.apply(&cfg.settings, &cfg.train);
    let mut cc = CollectConfig::new(cfg.task.clone(), variant.sensor(), cfg.episodes, cfg.collect_seed);
    cc.settings = settings.clone();
    cc.expert = cfg.expert.clone();
    let (episodes, _) = collect(&cc)?;
    let trained = train(&train_cfg, &episodes)?;
    let metrics = evaluate(&trained.policy, &cfg.task, variant.sensor(), &settings, cfg.trials, cfg.eval_seed)?;
    Ok(AblationRow { variant, metrics })
}

/// Rows in the fixed order full, no-omni, no-tap.
pub fn ablation_suite(cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    Variant::ALL.into_iter().map(|v| run_variant(cfg, v)).collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.metrics.csv_row(r.variant.name()));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::harness::TaskId;
    use crate::policy::PolicyConfig;

    #[test]
    fn variants_change_only_their_factor() {
        let s = SensorSettings::default();
        let t = TrainConfig::default();
        let (fs, ft) = Variant::Full.apply(&s, &t);
        assert_eq!(fs, s);
        assert_eq!(ft.policy.window, s.preprocess.window);
        let (os, ot) = Variant::NoOmni.apply(&s, &t);
        assert_eq!((os, ot), (fs.clone(), ft.clone()));
        assert_eq!(Variant::NoOmni.sensor(), SensorKind::DepthCam);
        let (ns, nt) = Variant::NoTap.apply(&s, &t);
        assert_eq!(ns.preprocess.window, 1);
        assert_eq!(nt.policy.window, 1);
        assert_eq!(nt.policy.encoder.pooling, Pooling::Max);
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }

    #[test]
    fn suite_emits_three_rows_with_trial_counts() {
        let cfg = AblationConfig {
            task: TaskSpec::new(TaskId::FlickerOv),
            settings: SensorSettings::default(),
            expert: ExpertConfig::default(),
            train: TrainConfig {
                policy: PolicyConfig {
                    encoder: EncoderConfig {
                        widths: vec![8],
                        head_hidden: 4,
                        ..EncoderConfig::default()
                    },
                    hidden: vec![16],
                    emb_width: 8,
                    horizon: 2,
                    execute: 1,
                    steps: 5,
                    ..PolicyConfig::default()
                },
                steps: 3,
                batch: 4,
                ..TrainConfig::default()
            },
            episodes: 1,
            collect_seed: 0,
            trials: 2,
            eval_seed: 0,
        };
        let rows = ablation_suite(&cfg).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.variant.name()).collect();
        assert_eq!(names, ["full", "no-omni", "no-tap"]);
        assert!(rows.iter().all(|r| r.metrics.trials == 2));
        let csv = ablation_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with(ABLATION_CSV_HEADER));
        assert!(matches!(crate::plot::parse_csv(&csv).unwrap(), crate::plot::PlotData::Metrics(r) if r.len() == 3));
    }
}
