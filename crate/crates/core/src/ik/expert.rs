//! Scripted demonstrator: interpolates the active hand along a waypoint
//! route, solves IK per chunk row, and drives the hands with a ramped
//! open/close profile.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{Rotation3, Transform, Vec3};
use crate::policy::ActionChunk;
use crate::{ACTION_DIM, ARM_DOF, HAND_DOF, LOWER_BODY_DIM, PROPRIO_DIM};

use super::chain::{reference_left_arm, reference_right_arm, KinematicChain};
use super::solver::{solve_ik, IkProblem, IkWeights, SolverSettings};

/// Fully closed hand posture, radians per finger joint.
pub const HAND_CLOSE_POSE: [f64; HAND_DOF] = [1.2, 1.1, 1.1, 1.1, 1.0, 0.8, 0.6];
pub const HAND_MAX: f64 = 1.5;

/// Resting arm posture: upper arm dropped to the side, forearm raised.
pub const HOME_ARM: [f64; ARM_DOF] = [1.35, 1.3, 0.0, -1.3, 0.0, 0.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Arm joints within the 28-dim action vector.
    pub fn arm_range(self) -> Range<usize> {
        match self {
            Side::Left => 0..ARM_DOF,
            Side::Right => ARM_DOF..2 * ARM_DOF,
        }
    }

    pub fn hand_range(self) -> Range<usize> {
        let base = 2 * ARM_DOF;
        match self {
            Side::Left => base..base + HAND_DOF,
            Side::Right => base + HAND_DOF..base + 2 * HAND_DOF,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// Side of the body a point lies on (`y >= 0` is left).
    pub fn of_point(p: &Vec3) -> Side {
        if p.y >= 0.0 {
            Side::Left
        } else {
            Side::Right
        }
    }
}

/// Upper-body slice of a proprio vector.
pub fn upper_body(proprio: &[f64]) -> &[f64] {
    &proprio[LOWER_BODY_DIM..]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arms {
    pub left: KinematicChain,
    pub right: KinematicChain,
}

impl Arms {
    pub fn reference() -> Self {
        Self {
            left: reference_left_arm(),
            right: reference_right_arm(),
        }
    }

    pub fn chain(&self, side: Side) -> &KinematicChain {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// End-effector pose of one arm read from a 28-dim upper-body vector.
    pub fn ee(&self, side: Side, upper: &[f64]) -> Result<Transform> {
        self.chain(side).forward_kinematics(&upper[side.arm_range()])
    }
}

/// Joint limits of the 28 action dimensions (reference arms, then hands).
pub fn action_limits() -> (Vec<f64>, Vec<f64>) {
    let arms = Arms::reference();
    let mut lo = Vec::with_capacity(ACTION_DIM);
    let mut hi = Vec::with_capacity(ACTION_DIM);
    for side in [Side::Left, Side::Right] {
        lo.extend(arms.chain(side).lower());
        hi.extend(arms.chain(side).upper());
    }
    lo.extend([0.0; 2 * HAND_DOF]);
    hi.extend([HAND_MAX; 2 * HAND_DOF]);
    (lo, hi)
}

/// Both arms at [`HOME_ARM`], hands open.
pub fn home_action() -> Vec<f64> {
    let mut a = vec![0.0; ACTION_DIM];
    for side in [Side::Left, Side::Right] {
        a[side.arm_range()].copy_from_slice(&HOME_ARM);
    }
    a
}

/// Stabilized lower body (all zeros) followed by [`home_action`].
pub fn home_proprio() -> Vec<f64> {
    let mut p = vec![0.0; LOWER_BODY_DIM];
    p.extend(home_action());
    p
}

/// Ramped grasp: closure moves by `rate` per tick toward 1 inside
/// `close_distance` of the target and toward 0 outside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandProfile {
    pub close_pose: [f64; HAND_DOF],
    pub close_distance: f64,
    pub rate: f64,
}

impl Default for HandProfile {
    fn default() -> Self {
        Self {
            close_pose: HAND_CLOSE_POSE,
            close_distance: 0.05,
            rate: 0.34,
        }
    }
}

impl HandProfile {
    /// Projection of a hand posture onto the closing direction, in `[0, 1]`.
    pub fn closure(&self, hand: &[f64]) -> f64 {
        let num: f64 = hand.iter().zip(&self.close_pose).map(|(a, b)| a * b).sum();
        let den: f64 = self.close_pose.iter().map(|b| b * b).sum();
        (num / den).clamp(0.0, 1.0)
    }

    pub fn pose(&self, closure: f64) -> [f64; HAND_DOF] {
        self.close_pose.map(|v| v * closure)
    }

    pub fn next(&self, closure: f64, distance: f64) -> f64 {
        if distance <= self.close_distance {
            (closure + self.rate).min(1.0)
        } else {
            (closure - self.rate).max(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertConfig {
    pub horizon: usize,
    /// Hand travel per tick along the route, meters.
    pub speed: f64,
    /// Hand rotation per tick, radians.
    pub turn_rate: f64,
    /// Per-joint step of the idle arm toward its reference, radians per tick.
    pub return_rate: f64,
    pub hand: HandProfile,
    pub weights: IkWeights,
    pub settings: SolverSettings,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            horizon: crate::policy::DEFAULT_HORIZON,
            speed: 0.05,
            turn_rate: 0.3,
            return_rate: 0.2,
            hand: HandProfile::default(),
            weights: IkWeights {
                ori: 0.2,
                ..IkWeights::default()
            },
            settings: SolverSettings::default(),
        }
    }
}

/// Remaining route of the active hand; the last pose is the grasp pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertGoal {
    pub side: Side,
    pub route: Vec<Transform>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPlan {
    pub chunk: ActionChunk,
    /// Every IK solve in the chunk reported convergence.
    pub converged: bool,
    /// Route waypoints consumed by the end of each row (cumulative).
    pub waypoints_passed: Vec<usize>,
}

/// Rotates `from` toward `to` by at most `max_angle`.
pub fn rotate_toward(from: &Rotation3, to: &Rotation3, max_angle: f64) -> Rotation3 {
    let delta = to.compose(&from.inverse()).log();
    let angle = delta.norm();
    if angle <= max_angle {
        return *to;
    }
    Rotation3::from_rotation_vector(&(delta * (max_angle / angle))).compose(from)
}

/// One chunk of expert actions from the current proprio state.
///
/// The active arm follows `goal.route` at `cfg.speed`; the idle arm and hand
/// relax toward `q_ref` (28-dim).
pub fn expert_action(
    goal: &ExpertGoal,
    proprio: &[f64],
    arms: &Arms,
    q_ref: &[f64],
    cfg: &ExpertConfig,
) -> Result<ExpertPlan> {
    if proprio.len() != PROPRIO_DIM {
        return Err(Error::dims("proprioception", PROPRIO_DIM, proprio.len()));
    }
    if q_ref.len() != ACTION_DIM {
        return Err(Error::dims("reference posture", ACTION_DIM, q_ref.len()));
    }
    if goal.route.is_empty() {
        return Err(Error::InvalidInput("expert route is empty".into()));
    }
    if cfg.horizon == 0 || !(cfg.speed > 0.0) {
        return Err(Error::InvalidInput("expert horizon and speed must be positive".into()));
    }
    let side = goal.side;
    let idle = side.other();
    let chain = arms.chain(side);
    let mut state = upper_body(proprio).to_vec();
    let start = chain.forward_kinematics(&state[side.arm_range()])?;
    let mut pos = start.translation;
    let mut rot = start.rotation;
    let mut closure = cfg.hand.closure(&state[side.hand_range()]);
    let grasp = goal.route[goal.route.len() - 1].translation;
    let mut idx = 0;
    let mut converged = true;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(cfg.horizon);
    let mut passed = Vec::with_capacity(cfg.horizon);

    for _ in 0..cfg.horizon {
        let mut budget = cfg.speed;
        while budget > 0.0 {
            let wp = goal.route[idx].translation;
            let d = (wp - pos).norm();
            if d <= budget {
                pos = wp;
                budget -= d;
                if idx + 1 < goal.route.len() {
                    idx += 1;
                } else {
                    break;
                }
            } else {
                pos += (wp - pos) * (budget / d);
                budget = 0.0;
            }
        }
        rot = rotate_toward(&rot, &goal.route[idx].rotation, cfg.turn_rate);

        let q_prev = state[side.arm_range()].to_vec();
        let mut problem = IkProblem::new(
            chain,
            Transform::new(rot, pos),
            q_ref[side.arm_range()].to_vec(),
            q_prev.clone(),
        );
        problem.weights = cfg.weights;
        problem.settings = cfg.settings;
        let r = solve_ik(&problem, &q_prev)?;
        converged &= r.converged;
        state[side.arm_range()].copy_from_slice(&r.q_star);

        let reached = chain.forward_kinematics(&r.q_star)?.translation;
        closure = cfg.hand.next(closure, (reached - grasp).norm());
        state[side.hand_range()].copy_from_slice(&cfg.hand.pose(closure));

        for i in idle.arm_range() {
            let d = (q_ref[i] - state[i]).clamp(-cfg.return_rate, cfg.return_rate);
            state[i] += d;
        }
        let idle_closure = (cfg.hand.closure(&state[idle.hand_range()]) - cfg.hand.rate).max(0.0);
        state[idle.hand_range()].copy_from_slice(&cfg.hand.pose(idle_closure));

        rows.push(state.clone());
        passed.push(idx);
    }
    Ok(ExpertPlan {
        chunk: ActionChunk::from_rows(&rows)?,
        converged,
        waypoints_passed: passed,
    })
}
