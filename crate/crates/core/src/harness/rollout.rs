//! Closed-loop episodes, agents and trial metrics.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::ik::{expert_action, home_action, Arms, ExpertConfig, ExpertGoal, HandProfile};
use crate::pointcloud::AggregatedCloud;
use crate::policy::Policy;
use crate::rng::derive_seed;
use crate::{ACTION_DIM, LOWER_BODY_DIM, PROPRIO_DIM};

use super::episode::{Episode, EpisodeHeader, Frame};
use super::sensor::{SensorKind, SensorSettings, SensorStream};
use super::task::{grasping, in_collision, SceneInstance, Stage, TaskSpec};

/// Lower-body posture held by the scripted stabilizer.
pub const STANCE: [f64; LOWER_BODY_DIM] = [0.0; LOWER_BODY_DIM];

pub fn compose_proprio(upper: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(PROPRIO_DIM);
    p.extend_from_slice(&STANCE);
    p.extend_from_slice(upper);
    p
}

/// What an agent sees when it is asked for new actions.
pub struct TickContext<'a> {
    pub tick: usize,
    pub cloud: &'a AggregatedCloud,
    pub proprio: &'a [f64],
    /// Privileged task state, used by the scripted expert only.
    pub stage: &'a Stage,
    pub stage_index: usize,
}

pub struct Plan {
    /// Upper-body targets to execute on consecutive ticks (at least one).
    pub rows: Vec<Vec<f64>>,
    pub converged: bool,
}

pub trait Agent {
    fn act(&mut self, ctx: &TickContext<'_>) -> Result<Plan>;
}

/// Diffusion policy executing the first `execute` rows of every chunk.
pub struct PolicyAgent<'a> {
    pub policy: &'a Policy,
    seed: u64,
    calls: u64,
}

impl<'a> PolicyAgent<'a> {
    pub fn new(policy: &'a Policy, seed: u64) -> Self {
        Self { policy, seed, calls: 0 }
    }
}

impl Agent for PolicyAgent<'_> {
    fn act(&mut self, ctx: &TickContext<'_>) -> Result<Plan> {
        let chunk = self.policy.act(ctx.cloud, ctx.proprio, derive_seed(self.seed, self.calls))?;
        self.calls += 1;
        let e = self.policy.execute.clamp(1, chunk.horizon());
        Ok(Plan {
            rows: (0..e).map(|t| chunk.row(t).to_vec()).collect(),
            converged: true,
        })
    }
}

/// Scripted IK expert following the active stage's route.
pub struct ExpertAgent {
    pub arms: Arms,
    pub cfg: ExpertConfig,
    pub execute: usize,
    q_ref: Vec<f64>,
    stage_index: usize,
    route_pos: usize,
}

impl ExpertAgent {
    pub fn new(cfg: ExpertConfig, execute: usize) -> Self {
        Self {
            arms: Arms::reference(),
            cfg,
            execute: execute.max(1),
            q_ref: home_action(),
            stage_index: 0,
            route_pos: 0,
        }
    }
}

impl Agent for ExpertAgent {
    fn act(&mut self, ctx: &TickContext<'_>) -> Result<Plan> {
        if ctx.stage_index != self.stage_index {
            self.stage_index = ctx.stage_index;
            self.route_pos = 0;
        }
        let route = &ctx.stage.route;
        let pos = self.route_pos.min(route.len() - 1);
        let goal = ExpertGoal {
            side: ctx.stage.side,
            route: route[pos..].to_vec(),
        };
        let cfg = ExpertConfig {
            horizon: self.cfg.horizon.max(self.execute),
            ..self.cfg.clone()
        };
        let plan = expert_action(&goal, ctx.proprio, &self.arms, &self.q_ref, &cfg)?;
        let e = self.execute;
        self.route_pos = pos + plan.waypoints_passed[e - 1];
        Ok(Plan {
            rows: (0..e).map(|t| plan.chunk.row(t).to_vec()).collect(),
            converged: plan.converged,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Outcome {
    pub success: bool,
    pub collision: bool,
    pub steps: usize,
    /// Agent calls whose plan reported non-convergence, one count per executed tick.
    pub nonconverged_ticks: usize,
}

/// Runs one episode in a generated scene; `seed` drives sensing noise.
pub fn run_episode(
    task: &TaskSpec,
    inst: &SceneInstance,
    scene_seed: u64,
    sensor: SensorKind,
    settings: &SensorSettings,
    agent: &mut dyn Agent,
) -> Result<(Episode, Outcome)> {
    let arms = Arms::reference();
    let hand = HandProfile::default();
    let mut stream = SensorStream::new(sensor, settings, task.flicker, derive_seed(scene_seed, 1));
    let mut upper = home_action();
    let mut queue: VecDeque<(Vec<f64>, bool)> = VecDeque::new();
    let mut frames = Vec::new();
    let mut out = Outcome::default();
    let mut stage = 0;
    let mut hold = 0;
    let mut scene = inst.scene_after(0)?;

    for tick in 0..task.max_ticks {
        let t = tick as f64 * task.dt();
        let cloud = stream.observe(&scene, t)?;
        let proprio = compose_proprio(&upper);
        if queue.is_empty() {
            let ctx = TickContext {
                tick,
                cloud: &cloud,
                proprio: &proprio,
                stage: &inst.stages[stage],
                stage_index: stage,
            };
            let plan = agent.act(&ctx)?;
            if plan.rows.is_empty() {
                return Err(Error::InvalidInput("agent returned an empty plan".into()));
            }
            queue.extend(plan.rows.into_iter().map(|r| (r, plan.converged)));
        }
        let (action, converged) = queue.pop_front().expect("queue refilled above");
        if action.len() != ACTION_DIM {
            return Err(Error::dims("agent action", ACTION_DIM, action.len()));
        }
        frames.push(Frame::new(t, &proprio, &action, &cloud));
        out.nonconverged_ticks += usize::from(!converged);
        upper = action;
        out.steps = tick + 1;

        out.collision |= in_collision(&scene, &arms, &upper)?;
        if grasping(task, &inst.stages[stage], &arms, &upper, &hand)? {
            hold += 1;
        } else {
            hold = 0;
        }
        if hold >= task.hold_ticks {
            hold = 0;
            stage += 1;
            queue.clear();
            if stage == inst.stages.len() {
                out.success = true;
                break;
            }
            scene = inst.scene_after(stage)?;
        }
    }
    let episode = Episode {
        header: EpisodeHeader {
            task: task.id,
            sensor,
            point_budget: settings.preprocess.budget as u32,
            seed: scene_seed,
        },
        frames,
    };
    Ok((episode, out))
}

/// Policy rollout in the scene generated from `seed`, aggregating over the
/// policy's own window.
pub fn rollout(
    policy: &Policy,
    task: &TaskSpec,
    sensor: SensorKind,
    settings: &SensorSettings,
    seed: u64,
) -> Result<(Episode, Outcome)> {
    let inst = task.generate(seed)?;
    let mut settings = settings.clone();
    settings.preprocess.window = policy.window;
    let mut agent = PolicyAgent::new(policy, derive_seed(seed, 2));
    run_episode(task, &inst, seed, sensor, &settings, &mut agent)
}

/// Re-executes recorded actions in the episode's regenerated scene.
pub fn replay(task: &TaskSpec, ep: &Episode) -> Result<Outcome> {
    if task.id != ep.header.task {
        return Err(Error::InvalidInput(format!(
            "episode belongs to task {}, not {}",
            ep.header.task, task.id
        )));
    }
    let inst = task.generate(ep.header.seed)?;
    let arms = Arms::reference();
    let hand = HandProfile::default();
    let mut out = Outcome::default();
    let mut stage = 0;
    let mut hold = 0;
    let mut scene = inst.scene_after(0)?;
    for (tick, f) in ep.frames.iter().enumerate() {
        let upper = f.action_f64();
        out.steps = tick + 1;
        out.collision |= in_collision(&scene, &arms, &upper)?;
        hold = if grasping(task, &inst.stages[stage], &arms, &upper, &hand)? { hold + 1 } else { 0 };
        if hold >= task.hold_ticks {
            hold = 0;
            stage += 1;
            if stage == inst.stages.len() {
                out.success = true;
                break;
            }
            scene = inst.scene_after(stage)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Metrics {
    pub trials: u32,
    pub successes: u32,
    pub collisions: u32,
}

impl Metrics {
    pub fn from_outcomes(outcomes: &[Outcome]) -> Self {
        Self {
            trials: outcomes.len() as u32,
            successes: outcomes.iter().filter(|o| o.success).count() as u32,
            collisions: outcomes.iter().filter(|o| o.collision).count() as u32,
        }
    }

    pub fn failures(&self) -> u32 {
        self.trials - self.successes
    }

    pub fn success_rate(&self) -> f64 {
        quotient(self.successes, self.trials)
    }

    pub fn collision_rate(&self) -> f64 {
        quotient(self.collisions, self.trials)
    }
}

fn quotient(n: u32, d: u32) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub const METRICS_CSV_HEADER: &str = "label,trials,successes,collisions,success_rate,collision_rate";

impl Metrics {
    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{},{},{},{}",
            self.trials,
            self.successes,
            self.collisions,
            self.success_rate(),
            self.collision_rate()
        )
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} success, {}/{} collision",
            self.successes, self.trials, self.collisions, self.trials
        )
    }
}

/// Worker count from `OMNIDP_THREADS`; unset, unparsable or 0 means sequential.
pub fn eval_threads() -> usize {
    std::env::var("OMNIDP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Runs `f(i)` for every trial index, optionally across threads, and returns
/// the results in index order.
pub fn run_trials<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<&mut [Option<Result<T>>]> = slots.chunks_mut(n.div_ceil(threads)).collect();
        let mut start = 0;
        for chunk in chunks {
            let base = start;
            start += chunk.len();
            let f = &f;
            s.spawn(move || {
                for (j, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(f(base + j));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

/// Seed of evaluation trial `i`.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, 0x7121_0000 + i as u64)
}

pub fn evaluate(
    policy: &Policy,
    task: &TaskSpec,
    sensor: SensorKind,
    settings: &SensorSettings,
    n_trials: usize,
    seed: u64,
) -> Result<Metrics> {
    let outcomes = run_trials(n_trials, eval_threads(), |i| {
        rollout(policy, task, sensor, settings, trial_seed(seed, i)).map(|(_, o)| o)
    })?;
    Ok(Metrics::from_outcomes(&outcomes))
}

/// The scripted expert as a rollout agent, scored like a policy.
pub fn evaluate_expert(
    task: &TaskSpec,
    sensor: SensorKind,
    settings: &SensorSettings,
    cfg: &ExpertConfig,
    execute: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Metrics> {
    let outcomes = run_trials(n_trials, eval_threads(), |i| {
        let s = trial_seed(seed, i);
        let inst = task.generate(s)?;
        let mut agent = ExpertAgent::new(cfg.clone(), execute);
        run_episode(task, &inst, s, sensor, settings, &mut agent).map(|(_, o)| o)
    })?;
    Ok(Metrics::from_outcomes(&outcomes))
}
