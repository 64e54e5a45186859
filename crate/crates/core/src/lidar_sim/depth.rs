use crate::error::{Error, Result};
use crate::geometry::{Rotation3, Transform, Vec3};
use crate::pointcloud::PointCloudFrame;

use super::Scene;

/// Pinhole depth camera. Camera frame: +z optical axis, +x right, +y down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthCameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub max_range: f64,
}

impl Default for DepthCameraModel {
    /// Low-resolution sensor with an 87 degree horizontal field of view.
    fn default() -> Self {
        let width = 80;
        let height = 52;
        let fx = (width as f64 / 2.0) / (87f64.to_radians() / 2.0).tan();
        Self {
            fx,
            fy: fx,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            max_range: 10.0,
        }
    }
}

impl DepthCameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidInput("principal point must lie inside the image".into()));
        }
        Ok(())
    }

    /// Unnormalized pinhole ray through pixel `(u, v)` with unit z component.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new((u as f64 - self.cx) / self.fx, (v as f64 - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point; `None` behind the camera or off-image.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        let inside = u >= -0.5 && u <= self.width as f64 - 0.5 && v >= -0.5 && v <= self.height as f64 - 0.5;
        inside.then_some((u, v))
    }

    pub fn horizontal_half_fov(&self) -> f64 {
        (self.cx.max(self.width as f64 - self.cx) / self.fx).atan()
    }
}

/// Row-major z-depth map in meters; 0 marks pixels without a return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }
}

/// Head-camera mounting: optical axis along the body +x, tilted down by `pitch`.
pub fn forward_camera_pose(position: Vec3, pitch: f64) -> Transform {
    // Columns: camera x -> -y (right), camera y -> -z (down), camera z -> +x.
    let base = Rotation3::from_wxyz(0.5, -0.5, 0.5, -0.5).expect("unit quaternion");
    Transform::new(Rotation3::ry(pitch).compose(&base), position)
}

pub fn depth_image(scene: &Scene, cam_pose: &Transform, model: &DepthCameraModel) -> DepthImage {
    let origin = cam_pose.translation;
    let mut data = vec![0.0; model.width * model.height];
    for v in 0..model.height {
        for u in 0..model.width {
            let ray = model.pixel_ray(u, v);
            let n = ray.norm();
            let dir = cam_pose.apply_vector(&(ray / n));
            if let Some(hit) = scene.raycast(&origin, &dir, model.max_range) {
                // z-depth: range times the ray's optical-axis component.
                data[v * model.width + u] = hit.distance / n;
            }
        }
    }
    DepthImage {
        width: model.width,
        height: model.height,
        data,
    }
}

pub fn depth_to_pointcloud(img: &DepthImage, model: &DepthCameraModel, timestamp: f64) -> Result<PointCloudFrame> {
    if img.width != model.width || img.height != model.height || img.data.len() != img.width * img.height {
        return Err(Error::dims("depth image size", model.width * model.height, img.data.len()));
    }
    let mut points = Vec::new();
    for v in 0..img.height {
        for u in 0..img.width {
            let d = img.at(u, v);
            if d > 0.0 {
                points.push(Vec3::new(
                    (u as f64 - model.cx) * d / model.fx,
                    (v as f64 - model.cy) * d / model.fy,
                    d,
                ));
            }
        }
    }
    Ok(PointCloudFrame { timestamp, points })
}
