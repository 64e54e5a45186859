//! Task roster, seeded scene generation and the success/collision predicates.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Rotation3, Transform, Vec3};
use crate::ik::{Arms, HandProfile, Side};
use crate::lidar_sim::{Primitive, Scene, Shape};
use crate::rng::seeded;

/// Head LiDAR mounting height above the base.
pub const LIDAR_HEIGHT: f64 = 1.32;
pub const CAMERA_POSITION: [f64; 3] = [0.05, 0.0, 1.45];
/// Downward tilt of the head camera, radians.
pub const CAMERA_PITCH: f64 = 0.35;

pub fn lidar_pose() -> Transform {
    Transform::from_translation(Vec3::new(0.0, 0.0, LIDAR_HEIGHT))
}

pub fn camera_pose() -> Transform {
    let [x, y, z] = CAMERA_POSITION;
    crate::lidar_sim::forward_camera_pose(Vec3::new(x, y, z), CAMERA_PITCH)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskId {
    Pick,
    PickOv,
    HandoverOv,
    ObstacleOv,
    /// Out-of-view pick with per-frame sector dropout and clutter.
    FlickerOv,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::Pick,
        TaskId::PickOv,
        TaskId::HandoverOv,
        TaskId::ObstacleOv,
        TaskId::FlickerOv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Pick => "pick",
            TaskId::PickOv => "pick-ov",
            TaskId::HandoverOv => "handover-ov",
            TaskId::ObstacleOv => "obstacle-ov",
            TaskId::FlickerOv => "flicker-ov",
        }
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn out_of_view(self) -> bool {
        self != TaskId::Pick
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown task `{s}`")))
    }
}

/// Per-frame return dropout applied to the rendered cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flicker {
    pub sectors: usize,
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for Flicker {
    fn default() -> Self {
        Self {
            sectors: 12,
            min_fraction: 0.3,
            max_fraction: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: TaskId,
    /// Target azimuth range around the body axis, degrees (counter-clockwise from +x).
    pub azimuth_deg: (f64, f64),
    /// Horizontal distance of the target from the body axis.
    pub radius: (f64, f64),
    pub height: (f64, f64),
    pub target_radius: f64,
    /// End effector to target center distance counted as a grasp.
    pub success_radius: f64,
    pub closure_threshold: f64,
    /// Consecutive ticks the grasp must be held.
    pub hold_ticks: usize,
    pub max_ticks: usize,
    pub control_rate_hz: f64,
    pub flicker: Option<Flicker>,
}

impl TaskSpec {
    pub fn new(id: TaskId) -> Self {
        let base = Self {
            id,
            azimuth_deg: (-30.0, 30.0),
            radius: (0.40, 0.55),
            height: (1.30, 1.45),
            target_radius: 0.04,
            success_radius: 0.06,
            closure_threshold: 0.5,
            hold_ticks: 2,
            max_ticks: 40,
            control_rate_hz: 10.0,
            flicker: None,
        };
        match id {
            TaskId::Pick => base,
            TaskId::PickOv => Self {
                azimuth_deg: (90.0, 270.0),
                ..base
            },
            TaskId::HandoverOv => Self {
                azimuth_deg: (90.0, 270.0),
                max_ticks: 70,
                ..base
            },
            TaskId::ObstacleOv => Self {
                azimuth_deg: (0.0, 30.0),
                max_ticks: 50,
                ..base
            },
            TaskId::FlickerOv => Self {
                azimuth_deg: (90.0, 270.0),
                flicker: Some(Flicker::default()),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.target_radius, self.success_radius, self.control_rate_hz];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidInput("task radii and control rate must be positive".into()));
        }
        if self.hold_ticks == 0 || self.max_ticks == 0 {
            return Err(Error::InvalidInput("hold and cap ticks must be >= 1".into()));
        }
        let ranges = [self.azimuth_deg, self.radius, self.height];
        if ranges.iter().any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidInput("task ranges must be ordered".into()));
        }
        if !(0.0..=1.0).contains(&self.closure_threshold) {
            return Err(Error::OutOfRange {
                what: "closure threshold".into(),
                value: self.closure_threshold,
            });
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    /// Seeded scene: obstacles, clutter, targets and the expert's per-stage routes.
    pub fn generate(&self, seed: u64) -> Result<SceneInstance> {
        self.validate()?;
        let mut rng = seeded(seed);
        let arms = Arms::reference();
        let mut prims = Vec::new();
        let mut stages = Vec::new();
        let mut next_id = 1;

        let place = |rng: &mut crate::rng::Rng64, az_range: (f64, f64)| {
            let az = rng.random_range(az_range.0..=az_range.1).to_radians();
            let r = rng.random_range(self.radius.0..=self.radius.1);
            let z = rng.random_range(self.height.0..=self.height.1);
            Vec3::new(r * az.cos(), r * az.sin(), z)
        };

        match self.id {
            TaskId::HandoverOv => {
                // Two targets on opposite sides; the left one first half the time.
                let (lo, hi) = self.azimuth_deg;
                let mid = 0.5 * (lo + hi);
                let left_first = rng.random_bool(0.5);
                let ranges = if left_first { [(lo, mid), (mid, hi)] } else { [(mid, hi), (lo, mid)] };
                for range in ranges {
                    let p = place(&mut rng, range);
                    stages.push(Stage::direct(&arms, next_id, p));
                    next_id += 1;
                }
            }
            TaskId::ObstacleOv => {
                let p = place(&mut rng, self.azimuth_deg);
                let slot = Fence::default().sample(&mut rng);
                prims.extend(slot.primitives(next_id + 1));
                stages.push(Stage::through_slot(&arms, next_id, p, &slot));
                next_id += 3;
            }
            _ => {
                let p = place(&mut rng, self.azimuth_deg);
                stages.push(Stage::direct(&arms, next_id, p));
                next_id += 1;
            }
        }
        if self.flicker.is_some() {
            prims.extend(clutter(&mut rng, next_id));
        }
        for s in &stages {
            prims.push(Primitive::new(
                Shape::Sphere {
                    center: s.grasp.translation,
                    radius: self.target_radius,
                },
                s.target_id,
            )
            .target());
        }
        Ok(SceneInstance {
            scene: Scene::new(prims)?,
            stages,
        })
    }
}

/// One grasp: which hand, which target, and the route the expert follows.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub side: Side,
    pub target_id: u32,
    pub grasp: Transform,
    /// Waypoints ending at `grasp`.
    pub route: Vec<Transform>,
}

impl Stage {
    /// Grasp pose: level hand pointing from the shoulder toward the target.
    fn grasp_pose(arms: &Arms, side: Side, target: Vec3) -> Transform {
        let shoulder = arms.chain(side).base_origin();
        let d = target - shoulder;
        Transform::new(Rotation3::rz(d.y.atan2(d.x)), target)
    }

    fn direct(arms: &Arms, target_id: u32, target: Vec3) -> Self {
        let side = Side::of_point(&target);
        let grasp = Self::grasp_pose(arms, side, target);
        Self {
            side,
            target_id,
            grasp,
            route: vec![grasp],
        }
    }

    fn through_slot(arms: &Arms, target_id: u32, target: Vec3, fence: &FenceSample) -> Self {
        let side = Side::Left;
        let grasp = Self::grasp_pose(arms, side, target);
        // Aim a little high: the forearm trails below the hand while crossing.
        let z = fence.slot_center + 0.02;
        let y = fence.route_y;
        let level = Rotation3::identity();
        let near = Transform::new(level, Vec3::new(fence.x_min - 0.07, y, z));
        let far = Transform::new(level, Vec3::new(fence.x_max + 0.18, y, z));
        Self {
            side,
            target_id,
            grasp,
            route: vec![near, far, grasp],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInstance {
    pub scene: Scene,
    pub stages: Vec<Stage>,
}

impl SceneInstance {
    /// The rendered scene once `completed` stages have been grasped; grasped
    /// targets are carried away and disappear.
    pub fn scene_after(&self, completed: usize) -> Result<Scene> {
        if completed == 0 {
            return Ok(self.scene.clone());
        }
        let gone: Vec<u32> = self.stages[..completed.min(self.stages.len())].iter().map(|s| s.target_id).collect();
        Scene::new(
            self.scene
                .primitives()
                .iter()
                .filter(|p| !gone.contains(&p.object_id))
                .copied()
                .collect(),
        )
    }
}

/// Wall beside the body with one horizontal slot the hand must pass through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fence {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
    pub slot_height: f64,
    /// Slot centre is drawn uniformly from this range.
    pub slot_center: (f64, f64),
}

impl Default for Fence {
    fn default() -> Self {
        Self {
            x: (0.14, 0.22),
            y: (0.22, 0.70),
            z: (0.90, 1.80),
            slot_height: 0.14,
            slot_center: (1.20, 1.66),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FenceSample {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub slot_center: f64,
    pub slot_half: f64,
    pub route_y: f64,
}

impl Fence {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FenceSample {
        FenceSample {
            x_min: self.x.0,
            x_max: self.x.1,
            y_min: self.y.0,
            y_max: self.y.1,
            z_min: self.z.0,
            z_max: self.z.1,
            slot_center: rng.random_range(self.slot_center.0..=self.slot_center.1),
            slot_half: 0.5 * self.slot_height,
            route_y: self.y.0 + 0.4 * (self.y.1 - self.y.0),
        }
    }
}

impl FenceSample {
    fn primitives(&self, first_id: u32) -> [Primitive; 2] {
        let lower = Shape::Cuboid {
            min: Vec3::new(self.x_min, self.y_min, self.z_min),
            max: Vec3::new(self.x_max, self.y_max, self.slot_center - self.slot_half),
        };
        let upper = Shape::Cuboid {
            min: Vec3::new(self.x_min, self.y_min, self.slot_center + self.slot_half),
            max: Vec3::new(self.x_max, self.y_max, self.z_max),
        };
        [
            Primitive::new(lower, first_id).obstacle(),
            Primitive::new(upper, first_id + 1).obstacle(),
        ]
    }
}

/// Small boxes scattered out of reach around the body; distractors for the
/// flicker variant.
fn clutter<R: Rng + ?Sized>(rng: &mut R, first_id: u32) -> Vec<Primitive> {
    (0..4)
        .map(|i| {
            let az = rng.random_range(0.0..2.0 * PI);
            let r = rng.random_range(0.85..1.05);
            let z = rng.random_range(1.65..1.85);
            let c = Vec3::new(r * az.cos(), r * az.sin(), z);
            let h = Vec3::new(0.05, 0.05, 0.05);
            Primitive::new(Shape::Cuboid { min: c - h, max: c + h }, first_id + i)
        })
        .collect()
}

/// Arm points tested against obstacles: distal forearm, wrist, mid-hand and
/// end effector.
pub fn arm_sample_points(arms: &Arms, side: Side, upper: &[f64]) -> Result<[Vec3; 4]> {
    let f = arms.chain(side).frames(&upper[side.arm_range()])?;
    let elbow = f.points[3];
    let wrist = f.points[5];
    let ee = f.ee.translation;
    Ok([elbow + (wrist - elbow) * 0.9, wrist, 0.5 * (wrist + ee), ee])
}

/// True when any sample point of either arm lies inside an obstacle.
pub fn in_collision(scene: &Scene, arms: &Arms, upper: &[f64]) -> Result<bool> {
    for side in [Side::Left, Side::Right] {
        let pts = arm_sample_points(arms, side, upper)?;
        if scene.obstacles().any(|o| pts.iter().any(|p| o.shape.contains(p))) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Grasp condition for one tick: hand near the target center and closed enough.
pub fn grasping(task: &TaskSpec, stage: &Stage, arms: &Arms, upper: &[f64], hand: &HandProfile) -> Result<bool> {
    let ee = arms.ee(stage.side, upper)?.translation;
    let near = (ee - stage.grasp.translation).norm() <= task.success_radius;
    Ok(near && hand.closure(&upper[stage.side.hand_range()]) >= task.closure_threshold)
}
