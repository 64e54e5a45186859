//! Flat `key = value` run configuration with `#` comments.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::encoder::{EncoderConfig, Pooling};
use crate::error::{Error, Result};
use crate::harness::{CollectConfig, SensorKind, SensorSettings, TaskId, TaskSpec, TrainConfig};
use crate::ik::{ExpertConfig, IkWeights};
use crate::policy::{LossWeighting, PolicyConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskId,
    pub sensor: SensorKind,
    pub point_budget: usize,
    pub window: usize,
    pub crop_radius: f64,
    pub lidar_points: usize,
    /// Pointwise MLP widths before the feature layer.
    pub encoder_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub attention_hidden: usize,
    pub pooling: Pooling,
    pub feature_conditioned: bool,
    pub denoiser_hidden: Vec<usize>,
    pub timestep_embedding: usize,
    pub diffusion_steps: usize,
    pub horizon: usize,
    pub execute: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub clip_sample: bool,
    pub ik_pos: f64,
    pub ik_ori: f64,
    pub ik_reg: f64,
    pub ik_smooth: f64,
    pub episodes: usize,
    pub train_steps: usize,
    pub batch: usize,
    pub learning_rate: f64,
    /// Min-SNR cap on the loss weights; 0 trains on the plain noise MSE.
    pub loss_gamma: f64,
    pub seed: u64,
    pub eval_trials: usize,
    pub eval_seed: u64,
    /// Episode directory read by `train` when `--in` is absent.
    pub dataset: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let expert = ExpertConfig::default();
        Self {
            task: TaskId::PickOv,
            sensor: SensorKind::Lidar,
            point_budget: 128,
            window: 3,
            crop_radius: crate::pointcloud::DEFAULT_CROP_RADIUS,
            lidar_points: 8000,
            encoder_hidden: vec![32],
            feature_dim: 64,
            attention_hidden: 16,
            pooling: Pooling::TimeAware,
            feature_conditioned: false,
            denoiser_hidden: vec![256, 256],
            timestep_embedding: crate::policy::DEFAULT_EMBED_WIDTH,
            diffusion_steps: crate::policy::DEFAULT_STEPS,
            horizon: 4,
            execute: 2,
            beta_start: crate::policy::DEFAULT_BETA_START,
            beta_end: crate::policy::DEFAULT_BETA_END,
            clip_sample: true,
            ik_pos: expert.weights.pos,
            ik_ori: expert.weights.ori,
            ik_reg: expert.weights.reg,
            ik_smooth: expert.weights.smooth,
            episodes: 100,
            train_steps: 3000,
            batch: 64,
            learning_rate: 3e-3,
            loss_gamma: 1.0,
            seed: 0,
            eval_trials: 20,
            eval_seed: 1000,
            dataset: None,
        }
    }
}

enum SetError {
    Unknown,
    Type(String),
    Range(String),
}

fn parse_as<T: FromStr>(v: &str, what: &str) -> Result<T, SetError> {
    v.parse().map_err(|_| SetError::Type(format!("expected {what}, got `{v}`")))
}

fn count(v: &str, min: i64, max: i64) -> Result<usize, SetError> {
    let n: i64 = parse_as(v, "an integer")?;
    if n < min || n > max {
        return Err(SetError::Range(format!("{n} is out of range {min}..={max}")));
    }
    Ok(n as usize)
}

fn real(v: &str, min: f64, max: f64, min_inclusive: bool) -> Result<f64, SetError> {
    let x: f64 = parse_as(v, "a number")?;
    let low_ok = if min_inclusive { x >= min } else { x > min };
    if !(low_ok && x <= max) {
        let open = if min_inclusive { "[" } else { "(" };
        return Err(SetError::Range(format!("{x} is out of range {open}{min}, {max}]")));
    }
    Ok(x)
}

fn widths(v: &str, allow_empty: bool) -> Result<Vec<usize>, SetError> {
    if v.is_empty() {
        return if allow_empty {
            Ok(Vec::new())
        } else {
            Err(SetError::Range("needs at least one width".into()))
        };
    }
    v.split(',').map(|w| count(w.trim(), 1, 65_536)).collect()
}

fn boolean(v: &str) -> Result<bool, SetError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(SetError::Type(format!("expected true or false, got `{v}`"))),
    }
}

fn join(ws: &[usize]) -> String {
    ws.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

const MAX_COUNT: i64 = 100_000_000;

impl RunConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<(), SetError> {
        match key {
            "task" => self.task = v.parse().map_err(|e: Error| SetError::Type(e.to_string()))?,
            "sensor" => self.sensor = v.parse().map_err(|e: Error| SetError::Type(e.to_string()))?,
            "point_budget" => self.point_budget = count(v, 1, 1_000_000)?,
            "window" => self.window = count(v, 1, 64)?,
            "crop_radius" => self.crop_radius = real(v, 0.0, 1e3, false)?,
            "lidar_points" => self.lidar_points = count(v, 1, 10_000_000)?,
            "encoder_hidden" => self.encoder_hidden = widths(v, true)?,
            "feature_dim" => self.feature_dim = count(v, 1, 65_536)?,
            "attention_hidden" => self.attention_hidden = count(v, 1, 65_536)?,
            "pooling" => {
                self.pooling = match v {
                    "tap" => Pooling::TimeAware,
                    "max" => Pooling::Max,
                    _ => return Err(SetError::Type(format!("expected tap or max, got `{v}`"))),
                }
            }
            "feature_conditioned" => self.feature_conditioned = boolean(v)?,
            "denoiser_hidden" => self.denoiser_hidden = widths(v, false)?,
            "timestep_embedding" => {
                let w = count(v, 2, 65_536)?;
                if w % 2 != 0 {
                    return Err(SetError::Range(format!("{w} must be even")));
                }
                self.timestep_embedding = w;
            }
            "diffusion_steps" => self.diffusion_steps = count(v, 1, 10_000)?,
            "horizon" => self.horizon = count(v, 1, 1024)?,
            "execute" => self.execute = count(v, 1, 1024)?,
            "beta_start" => self.beta_start = real(v, 0.0, 1.0, false)?,
            "beta_end" => self.beta_end = real(v, 0.0, 1.0, false)?,
            "clip_sample" => self.clip_sample = boolean(v)?,
            "ik_pos" => self.ik_pos = real(v, 0.0, 1e6, false)?,
            "ik_ori" => self.ik_ori = real(v, 0.0, 1e6, true)?,
            "ik_reg" => self.ik_reg = real(v, 0.0, 1e6, true)?,
            "ik_smooth" => self.ik_smooth = real(v, 0.0, 1e6, true)?,
            "episodes" => self.episodes = count(v, 1, MAX_COUNT)?,
            "train_steps" => self.train_steps = count(v, 0, MAX_COUNT)?,
            "batch" => self.batch = count(v, 1, 1_000_000)?,
            "learning_rate" => self.learning_rate = real(v, 0.0, 10.0, false)?,
            "loss_gamma" => self.loss_gamma = real(v, 0.0, 1e6, true)?,
            "seed" => self.seed = parse_as(v, "an unsigned integer")?,
            "eval_trials" => self.eval_trials = count(v, 1, MAX_COUNT)?,
            "eval_seed" => self.eval_seed = parse_as(v, "an unsigned integer")?,
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e = vec![
            ("task", self.task.to_string()),
            ("sensor", self.sensor.to_string()),
            ("point_budget", self.point_budget.to_string()),
            ("window", self.window.to_string()),
            ("crop_radius", self.crop_radius.to_string()),
            ("lidar_points", self.lidar_points.to_string()),
            ("encoder_hidden", join(&self.encoder_hidden)),
            ("feature_dim", self.feature_dim.to_string()),
            ("attention_hidden", self.attention_hidden.to_string()),
            ("pooling", self.pooling.name().to_string()),
            ("feature_conditioned", self.feature_conditioned.to_string()),
            ("denoiser_hidden", join(&self.denoiser_hidden)),
            ("timestep_embedding", self.timestep_embedding.to_string()),
            ("diffusion_steps", self.diffusion_steps.to_string()),
            ("horizon", self.horizon.to_string()),
            ("execute", self.execute.to_string()),
            ("beta_start", self.beta_start.to_string()),
            ("beta_end", self.beta_end.to_string()),
            ("clip_sample", self.clip_sample.to_string()),
            ("ik_pos", self.ik_pos.to_string()),
            ("ik_ori", self.ik_ori.to_string()),
            ("ik_reg", self.ik_reg.to_string()),
            ("ik_smooth", self.ik_smooth.to_string()),
            ("episodes", self.episodes.to_string()),
            ("train_steps", self.train_steps.to_string()),
            ("batch", self.batch.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("loss_gamma", self.loss_gamma.to_string()),
            ("seed", self.seed.to_string()),
            ("eval_trials", self.eval_trials.to_string()),
            ("eval_seed", self.eval_seed.to_string()),
        ];
        if let Some(d) = &self.dataset {
            e.push(("dataset", d.display().to_string()));
        }
        e
    }

    /// Parses and validates; omitted keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    key: content.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let err = |message: String| Error::Config {
                line,
                key: key.to_string(),
                message,
            };
            if let Some(prev) = seen.insert(key.to_string(), line) {
                return Err(err(format!("duplicate key (first set on line {prev})")));
            }
            match cfg.set(key, value) {
                Ok(()) => {}
                Err(SetError::Unknown) => return Err(err("unknown key".into())),
                Err(SetError::Type(m)) => return Err(err(format!("type mismatch: {m}"))),
                Err(SetError::Range(m)) => return Err(err(format!("range error: {m}"))),
            }
        }
        cfg.cross_check().map_err(|(key, message)| Error::Config {
            line: seen.get(key).copied().unwrap_or(0),
            key: key.to_string(),
            message,
        })?;
        Ok(cfg)
    }

    fn cross_check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.execute > self.horizon {
            return Err(("execute", format!("range error: {} exceeds horizon {}", self.execute, self.horizon)));
        }
        if self.beta_start > self.beta_end {
            return Err(("beta_end", format!("range error: {} is below beta_start {}", self.beta_end, self.beta_start)));
        }
        if self.beta_end >= 1.0 {
            return Err(("beta_end", "range error: must be below 1".into()));
        }
        Ok(())
    }

    /// Checks a programmatically built config against the same rules as `parse`.
    pub fn validate(&self) -> Result<()> {
        Self::parse(&self.render()).map(|_| ())
    }

    /// Every key in a fixed order; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec::new(self.task)
    }

    pub fn sensor_settings(&self) -> SensorSettings {
        let mut s = SensorSettings::default();
        s.lidar.points_per_frame = self.lidar_points;
        s.preprocess.budget = self.point_budget;
        s.preprocess.window = self.window;
        s.preprocess.crop_radius = self.crop_radius;
        s
    }

    pub fn expert_config(&self) -> ExpertConfig {
        ExpertConfig {
            weights: IkWeights {
                pos: self.ik_pos,
                ori: self.ik_ori,
                reg: self.ik_reg,
                smooth: self.ik_smooth,
            },
            ..ExpertConfig::default()
        }
    }

    pub fn collect_config(&self) -> CollectConfig {
        let mut c = CollectConfig::new(self.task_spec(), self.sensor, self.episodes, self.seed);
        c.settings = self.sensor_settings();
        c.expert = self.expert_config();
        c
    }

    pub fn policy_config(&self) -> PolicyConfig {
        let mut widths = self.encoder_hidden.clone();
        widths.push(self.feature_dim);
        PolicyConfig {
            encoder: EncoderConfig {
                widths,
                head_hidden: self.attention_hidden,
                pooling: self.pooling,
                feature_conditioned: self.feature_conditioned,
            },
            horizon: self.horizon,
            execute: self.execute,
            hidden: self.denoiser_hidden.clone(),
            emb_width: self.timestep_embedding,
            window: self.window,
            clip_sample: self.clip_sample,
            steps: self.diffusion_steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            policy: self.policy_config(),
            steps: self.train_steps,
            batch: self.batch,
            lr: self.learning_rate,
            weighting: if self.loss_gamma > 0.0 {
                LossWeighting::MinSnr(self.loss_gamma)
            } else {
                LossWeighting::Noise
            },
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# only a comment\n\n   \n").unwrap(), RunConfig::default());
    }

    #[test]
    fn values_and_comments_parse() {
        let c = RunConfig::parse("point_budget = 4096  # downsample\nsensor=depthcam\npooling = max\nencoder_hidden = 16, 32\n").unwrap();
        assert_eq!(c.point_budget, 4096);
        assert_eq!(c.sensor, SensorKind::DepthCam);
        assert_eq!(c.pooling, Pooling::Max);
        assert_eq!(c.encoder_hidden, vec![16, 32]);
        assert_eq!(c.policy_config().encoder.widths, vec![16, 32, 64]);
    }

    fn config_error(text: &str) -> (usize, String, String) {
        match RunConfig::parse(text) {
            Err(Error::Config { line, key, message }) => (line, key, message),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_name_key_and_line() {
        let (line, key, msg) = config_error("\npoint_budget = -1\n");
        assert_eq!((line, key.as_str()), (2, "point_budget"));
        assert!(msg.starts_with("range error"), "{msg}");

        let (line, key, msg) = config_error("seed = 1\nbogus = 3\n");
        assert_eq!((line, key.as_str(), msg.as_str()), (2, "bogus", "unknown key"));

        let (_, key, msg) = config_error("horizon = four");
        assert_eq!(key, "horizon");
        assert!(msg.starts_with("type mismatch"));

        let (line, key, _) = config_error("horizon = 4\nexecute = 5\n");
        assert_eq!((line, key.as_str()), (2, "execute"));

        let (line, _, msg) = config_error("seed = 1\nseed = 2\n");
        assert_eq!(line, 2);
        assert!(msg.contains("duplicate"));

        assert_eq!(config_error("just words").0, 1);
        assert_eq!(config_error("timestep_embedding = 7").1, "timestep_embedding");
        assert_eq!(config_error("task = wipe").1, "task");
    }

    #[test]
    fn builders_follow_the_config() {
        let c = RunConfig::parse("loss_gamma = 0\ntask = obstacle-ov\nwindow = 1\nik_ori = 0.4\n").unwrap();
        assert_eq!(c.train_config().weighting, LossWeighting::Noise);
        assert_eq!(c.task_spec().id, TaskId::ObstacleOv);
        assert_eq!(c.sensor_settings().preprocess.window, 1);
        assert_eq!(c.policy_config().window, 1);
        assert_eq!(c.expert_config().weights.ori, 0.4);
        assert_eq!(c.collect_config().episodes, 100);
        RunConfig::default().validate().unwrap();
    }

    proptest! {
        #[test]
        fn render_parse_round_trips(
            budget in 1usize..100_000,
            window in 1usize..8,
            lr in 1e-6f64..1.0,
            gamma in 0.0f64..10.0,
            hidden in proptest::collection::vec(1usize..512, 0..4),
            seed in any::<u64>(),
            task in 0u32..5,
            depth in any::<bool>(),
        ) {
            let c = RunConfig {
                point_budget: budget,
                window,
                learning_rate: lr,
                loss_gamma: gamma,
                encoder_hidden: hidden,
                seed,
                task: TaskId::from_code(task).unwrap(),
                sensor: if depth { SensorKind::DepthCam } else { SensorKind::Lidar },
                dataset: Some(PathBuf::from("runs/data")),
                ..RunConfig::default()
            };
            prop_assert_eq!(RunConfig::parse(&c.render()).unwrap(), c);
        }
    }
}
