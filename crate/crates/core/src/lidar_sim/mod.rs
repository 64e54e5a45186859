//! Primitive scenes, ray casting, the panoramic LiDAR and the narrow depth
//! camera used as the baseline sensor.

mod depth;
mod lidar;
mod scene;

pub use depth::{depth_image, depth_to_pointcloud, forward_camera_pose, DepthCameraModel, DepthImage};
pub use lidar::{azimuth_deg, elevation_deg, lidar_frame, sector_dropout, LidarModel};
pub use scene::{Hit, Primitive, Scene, Shape};

use crate::geometry::Vec3;

pub fn raycast(scene: &Scene, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<Hit> {
    scene.raycast(origin, dir, max_range)
}
