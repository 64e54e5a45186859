//! Per-tick sensing: render a frame, apply flicker, crop, and aggregate the
//! recent window into the policy's input cloud.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::lidar_sim::{depth_image, depth_to_pointcloud, sector_dropout, DepthCameraModel, LidarModel, Scene};
use crate::pointcloud::{range_crop, temporal_aggregate_with, AggregatedCloud, PointCloudFrame, Preprocessor, TimedPoint};
use crate::rng::{seeded, Rng64};

use super::task::{camera_pose, lidar_pose, Flicker};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    Lidar,
    DepthCam,
}

impl SensorKind {
    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Lidar => "lidar",
            SensorKind::DepthCam => "depthcam",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SensorKind::Lidar),
            1 => Some(SensorKind::DepthCam),
            _ => None,
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lidar" => Ok(SensorKind::Lidar),
            "depthcam" => Ok(SensorKind::DepthCam),
            _ => Err(Error::InvalidInput(format!("unknown sensor `{s}` (expected lidar or depthcam)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSettings {
    pub lidar: LidarModel,
    pub camera: DepthCameraModel,
    pub preprocess: Preprocessor,
}

impl Default for SensorSettings {
    /// Desk-scale rates: a sparser scan and a 128-point budget keep training
    /// and rollout cheap while objects still get tens of returns per frame.
    fn default() -> Self {
        Self {
            lidar: LidarModel {
                points_per_frame: 8_000,
                ..LidarModel::default()
            },
            camera: DepthCameraModel::default(),
            preprocess: Preprocessor {
                budget: 128,
                ..Preprocessor::default()
            },
        }
    }
}

/// Cloud standing in for "nothing seen yet": every point at the sensor origin.
pub fn null_cloud(budget: usize) -> AggregatedCloud {
    AggregatedCloud {
        points: vec![
            TimedPoint {
                position: Vec3::zeros(),
                t_rel: 1.0,
            };
            budget.max(1)
        ],
    }
}

/// Rounds every coordinate to single precision, matching what episode files store.
pub fn quantize(cloud: &AggregatedCloud) -> AggregatedCloud {
    let q = |v: f64| v as f32 as f64;
    AggregatedCloud {
        points: cloud
            .points
            .iter()
            .map(|p| TimedPoint {
                position: p.position.map(q),
                t_rel: q(p.t_rel),
            })
            .collect(),
    }
}

/// Stateful sensor pipeline for one episode.
#[derive(Debug, Clone)]
pub struct SensorStream {
    kind: SensorKind,
    settings: SensorSettings,
    flicker: Option<Flicker>,
    frames: VecDeque<PointCloudFrame>,
    last_valid: Option<AggregatedCloud>,
    rng: Rng64,
    tick: u64,
}

impl SensorStream {
    pub fn new(kind: SensorKind, settings: &SensorSettings, flicker: Option<Flicker>, seed: u64) -> Self {
        Self {
            kind,
            settings: settings.clone(),
            flicker,
            frames: VecDeque::new(),
            last_valid: None,
            rng: seeded(seed),
            tick: 0,
        }
    }

    /// Raw egocentric frame at time `t`, before flicker and cropping.
    pub fn render(&self, scene: &Scene, t: f64) -> Result<PointCloudFrame> {
        match self.kind {
            SensorKind::Lidar => Ok(self.settings.lidar.frame(scene, &lidar_pose(), self.tick, t)),
            SensorKind::DepthCam => {
                let img = depth_image(scene, &camera_pose(), &self.settings.camera);
                depth_to_pointcloud(&img, &self.settings.camera, t)
            }
        }
    }

    /// Senses the scene at time `t` and returns the aggregated input cloud.
    ///
    /// When every frame in the window is empty the previous cloud is reused;
    /// before anything has been seen, [`null_cloud`] is returned.
    pub fn observe(&mut self, scene: &Scene, t: f64) -> Result<AggregatedCloud> {
        let mut frame = self.render(scene, t)?;
        if let Some(f) = self.flicker {
            let fraction = self.rng.random_range(f.min_fraction..=f.max_fraction);
            frame = sector_dropout(&frame, f.sectors, fraction, &mut self.rng);
        }
        let pre = self.settings.preprocess;
        self.frames.push_back(range_crop(&frame, pre.crop_radius));
        while self.frames.len() > pre.window {
            self.frames.pop_front();
        }
        self.tick += 1;
        let window: Vec<PointCloudFrame> = self.frames.iter().cloned().collect();
        let cloud = match temporal_aggregate_with(&window, pre.budget, pre.window, &mut self.rng) {
            Ok(c) => quantize(&c),
            Err(Error::EmptyCloud(_)) => return Ok(self.last_valid.clone().unwrap_or_else(|| null_cloud(pre.budget))),
            Err(e) => return Err(e),
        };
        self.last_valid = Some(cloud.clone());
        Ok(cloud)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::task::{TaskId, TaskSpec};
    use crate::lidar_sim::azimuth_deg;

    #[test]
    fn names_round_trip() {
        for k in [SensorKind::Lidar, SensorKind::DepthCam] {
            assert_eq!(k.name().parse::<SensorKind>().unwrap(), k);
            assert_eq!(SensorKind::from_code(k.code()), Some(k));
        }
        assert!("rgb".parse::<SensorKind>().is_err());
        assert_eq!(SensorKind::from_code(7), None);
    }

    #[test]
    fn empty_world_yields_null_cloud_then_reuses_last() {
        let s = SensorSettings::default();
        let mut stream = SensorStream::new(SensorKind::Lidar, &s, None, 0);
        let c = stream.observe(&Scene::empty(), 0.0).unwrap();
        assert_eq!(c, null_cloud(s.preprocess.budget));

        let inst = TaskSpec::new(TaskId::PickOv).generate(0).unwrap();
        let mut stream = SensorStream::new(SensorKind::Lidar, &s, None, 0);
        let seen = stream.observe(&inst.scene, 0.0).unwrap();
        assert!(seen.len() > 1);
        // Once blank frames flush the window, the last non-empty aggregate is kept.
        let mut prev = seen;
        for i in 1..=4 {
            let c = stream.observe(&Scene::empty(), i as f64 * 0.1).unwrap();
            if i >= 3 {
                assert_eq!(c, prev);
            }
            prev = c;
        }
    }

    #[test]
    fn clouds_respect_budget_crop_and_precision() {
        let s = SensorSettings::default();
        let inst = TaskSpec::new(TaskId::ObstacleOv).generate(2).unwrap();
        for kind in [SensorKind::Lidar, SensorKind::DepthCam] {
            let mut stream = SensorStream::new(kind, &s, None, 1);
            for t in 0..4 {
                let c = stream.observe(&inst.scene, t as f64 * 0.1).unwrap();
                c.validate(s.preprocess.budget, s.preprocess.crop_radius + 1e-6).unwrap();
                assert_eq!(quantize(&c), c);
            }
        }
    }

    #[test]
    fn lidar_sees_behind_and_camera_does_not() {
        let s = SensorSettings::default();
        let inst = TaskSpec::new(TaskId::PickOv).generate(5).unwrap();
        let mut lidar = SensorStream::new(SensorKind::Lidar, &s, None, 0);
        let mut cam = SensorStream::new(SensorKind::DepthCam, &s, None, 0);
        let lc = lidar.observe(&inst.scene, 0.0).unwrap();
        assert!(lc.len() > 10);
        let target = inst.stages[0].grasp.translation - lidar_pose().translation;
        let az_t = azimuth_deg(&target);
        assert!(lc.points.iter().all(|p| {
            let d = (azimuth_deg(&p.position) - az_t).abs();
            d.min(360.0 - d) < 20.0
        }));
        assert_eq!(cam.observe(&inst.scene, 0.0).unwrap(), null_cloud(s.preprocess.budget));
    }

    #[test]
    fn flicker_removes_returns() {
        let s = SensorSettings::default();
        let inst = TaskSpec::new(TaskId::FlickerOv).generate(3).unwrap();
        let clean = SensorStream::new(SensorKind::Lidar, &s, None, 0).render(&inst.scene, 0.0).unwrap();
        let flick = Flicker::default();
        let mut rng = seeded(1);
        let mut total = 0;
        for _ in 0..20 {
            let frac = rng.random_range(flick.min_fraction..=flick.max_fraction);
            total += sector_dropout(&clean, flick.sectors, frac, &mut rng).len();
        }
        let kept = total as f64 / (20.0 * clean.len() as f64);
        assert!(kept > 0.2 && kept < 0.8, "kept {kept}");
    }
}
