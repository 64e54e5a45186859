use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Transform, Vec3};
use crate::pointcloud::PointCloudFrame;
use crate::rng::{derive_seed, seeded};

use super::Scene;

const GOLDEN_FRACTION: f64 = 0.618_033_988_749_894_9;
// Irrational per-frame increments for the azimuth phase and the elevation jitter.
const PHASE_STEP: f64 = 0.414_213_562_373_095_1;
const JITTER_STEP: f64 = 0.732_050_807_568_877_2;

/// Panoramic LiDAR with a non-repetitive golden-angle scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarModel {
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub points_per_frame: usize,
    pub max_range: f64,
    pub pattern_seed: u64,
    /// Standard deviation of zero-mean range noise, meters. Zero disables it.
    pub range_jitter: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            elevation_min_deg: -7.0,
            elevation_max_deg: 52.0,
            points_per_frame: 20_000,
            max_range: 40.0,
            pattern_seed: 0,
            range_jitter: 0.0,
        }
    }
}

impl LidarModel {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.elevation_min_deg < self.elevation_max_deg) {
            return Err(crate::Error::InvalidInput("elevation min must be below max".into()));
        }
        if self.points_per_frame == 0 {
            return Err(crate::Error::InvalidInput("points_per_frame must be >= 1".into()));
        }
        Ok(())
    }

    fn seed_fraction(&self, salt: u64) -> f64 {
        (derive_seed(self.pattern_seed, salt) >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Unit scan directions (sensor frame) for one frame.
    ///
    /// Azimuths advance by the golden fraction of a turn from a per-frame phase;
    /// elevations are stratified over the span with a per-frame sub-stratum
    /// offset, so no two distinct frames share a ray.
    pub fn scan_directions(&self, frame_index: u64) -> Vec<Vec3> {
        let n = self.points_per_frame;
        let f = frame_index as f64;
        let phase = (self.seed_fraction(1) + f * PHASE_STEP).fract();
        let jitter = (self.seed_fraction(2) + f * JITTER_STEP).fract();
        let el0 = self.elevation_min_deg.to_radians();
        let span = self.elevation_max_deg.to_radians() - el0;
        (0..n)
            .map(|i| {
                let az = (phase + i as f64 * GOLDEN_FRACTION).fract() * std::f64::consts::TAU;
                let el = el0 + span * (i as f64 + jitter) / n as f64;
                let (se, ce) = el.sin_cos();
                let (sa, ca) = az.sin_cos();
                Vec3::new(ce * ca, ce * sa, se)
            })
            .collect()
    }

    /// Renders one frame; hits are returned in the sensor's egocentric frame.
    pub fn frame(&self, scene: &Scene, sensor_pose: &Transform, frame_index: u64, timestamp: f64) -> PointCloudFrame {
        let origin = sensor_pose.translation;
        let mut noise = (self.range_jitter > 0.0).then(|| {
            (
                seeded(derive_seed(self.pattern_seed ^ 0xA5A5, frame_index)),
                Normal::new(0.0, self.range_jitter).expect("finite jitter"),
            )
        });
        let mut points = Vec::new();
        for d in self.scan_directions(frame_index) {
            let world_dir = sensor_pose.apply_vector(&d);
            if let Some(hit) = scene.raycast(&origin, &world_dir, self.max_range) {
                let mut r = hit.distance;
                if let Some((rng, normal)) = noise.as_mut() {
                    r = (r + normal.sample(rng)).max(0.0);
                }
                points.push(d * r);
            }
        }
        PointCloudFrame { timestamp, points }
    }
}

pub fn lidar_frame(
    scene: &Scene,
    sensor_pose: &Transform,
    model: &LidarModel,
    frame_index: u64,
    timestamp: f64,
) -> PointCloudFrame {
    model.frame(scene, sensor_pose, frame_index, timestamp)
}

/// Elevation of a sensor-frame direction, degrees.
pub fn elevation_deg(p: &Vec3) -> f64 {
    p.z.atan2((p.x * p.x + p.y * p.y).sqrt()).to_degrees()
}

/// Azimuth of a sensor-frame direction in `[0, 360)`, degrees.
pub fn azimuth_deg(p: &Vec3) -> f64 {
    p.y.atan2(p.x).to_degrees().rem_euclid(360.0)
}

/// Drops a random subset of azimuth sectors from a frame.
///
/// `sectors` equal slices of the full turn; `round(fraction * sectors)` of them
/// are removed, which blanks whole objects in some frames.
pub fn sector_dropout<R: Rng + ?Sized>(frame: &PointCloudFrame, sectors: usize, fraction: f64, rng: &mut R) -> PointCloudFrame {
    let k = ((fraction * sectors as f64).round() as usize).min(sectors);
    let dropped = rand::seq::index::sample(rng, sectors, k).into_vec();
    let mut off = vec![false; sectors];
    for d in dropped {
        off[d] = true;
    }
    PointCloudFrame {
        timestamp: frame.timestamp,
        points: frame
            .points
            .iter()
            .copied()
            .filter(|p| {
                let s = ((azimuth_deg(p) / 360.0) * sectors as f64) as usize;
                !off[s.min(sectors - 1)]
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Primitive, Shape};
    use super::*;
    use std::collections::HashSet;

    fn small() -> LidarModel {
        LidarModel {
            points_per_frame: 2_000,
            ..LidarModel::default()
        }
    }

    #[test]
    fn directions_in_fov_and_unit() {
        let m = small();
        for f in 0..5 {
            for d in m.scan_directions(f) {
                assert!((d.norm() - 1.0).abs() < 1e-12);
                let el = elevation_deg(&d);
                assert!((-7.0 - 1e-9..=52.0 + 1e-9).contains(&el), "{el}");
            }
        }
    }

    #[test]
    fn consecutive_frames_disjoint() {
        let m = small();
        let key = |v: &Vec3| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        let a: HashSet<_> = m.scan_directions(0).iter().map(key).collect();
        let b: HashSet<_> = m.scan_directions(1).iter().map(key).collect();
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn azimuth_histogram_uniform() {
        // Empirical oracle: 36 bins over 100 frames.
        let m = small();
        let mut bins = [0usize; 36];
        for f in 0..100 {
            for d in m.scan_directions(f) {
                bins[(azimuth_deg(&d) / 10.0) as usize % 36] += 1;
            }
        }
        let expected = (100 * m.points_per_frame) as f64 / 36.0;
        for (i, &c) in bins.iter().enumerate() {
            assert!(((c as f64 - expected) / expected).abs() < 0.05, "bin {i}: {c} vs {expected}");
        }
    }

    #[test]
    fn frame_examples() {
        let m = small();
        let f = m.frame(&Scene::empty(), &Transform::identity(), 0, 0.0);
        assert!(f.is_empty());

        let shell = Scene::new(vec![Primitive::new(Shape::Sphere { center: Vec3::new(1.0, 2.0, 3.0), radius: 1.0 }, 1)]).unwrap();
        let pose = Transform::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let f = m.frame(&shell, &pose, 3, 0.3);
        assert_eq!(f.len(), m.points_per_frame);
        assert!(f.points.iter().all(|p| (p.norm() - 1.0).abs() < 1e-6));
        assert_eq!(f.timestamp, 0.3);
    }

    #[test]
    fn target_behind_sensor_is_seen() {
        let m = small();
        let s = Scene::new(vec![Primitive::new(Shape::Sphere { center: Vec3::new(-0.6, 0.0, 0.1), radius: 0.06 }, 4).target()]).unwrap();
        let f = m.frame(&s, &Transform::identity(), 0, 0.0);
        assert!(!f.is_empty());
        assert!(f.points.iter().all(|p| (azimuth_deg(p) - 180.0).abs() < 10.0));
    }

    #[test]
    fn jitter_is_seeded() {
        let m = LidarModel { range_jitter: 0.01, ..small() };
        let shell = Scene::new(vec![Primitive::new(Shape::Sphere { center: Vec3::zeros(), radius: 1.0 }, 1)]).unwrap();
        let a = m.frame(&shell, &Transform::identity(), 2, 0.0);
        let b = m.frame(&shell, &Transform::identity(), 2, 0.0);
        assert_eq!(a, b);
        assert!(a.points.iter().any(|p| (p.norm() - 1.0).abs() > 1e-6));
    }

    #[test]
    fn dropout_removes_requested_fraction() {
        let m = small();
        let shell = Scene::new(vec![Primitive::new(Shape::Sphere { center: Vec3::zeros(), radius: 1.0 }, 1)]).unwrap();
        let f = m.frame(&shell, &Transform::identity(), 0, 0.0);
        let mut rng = seeded(5);
        let d = sector_dropout(&f, 12, 0.5, &mut rng);
        let frac = d.len() as f64 / f.len() as f64;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }
}
