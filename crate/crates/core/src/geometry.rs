//! Rigid-body algebra: unit-quaternion rotations, SE(3) transforms, operator
//! motion mapping and planar base integration.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Unit quaternion with the double cover canonicalized to `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(UnitQuaternion<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from raw quaternion components; the input is normalized.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::InvalidInput(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Self::canonical(UnitQuaternion::new_normalize(q)))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-15 || angle == 0.0 {
            return Self::identity();
        }
        let half = 0.5 * angle;
        let a = axis / n * half.sin();
        Self::canonical(UnitQuaternion::new_normalize(Quaternion::new(
            half.cos(),
            a.x,
            a.y,
            a.z,
        )))
    }

    /// Exponential map of a rotation vector.
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    pub fn rz(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    pub fn ry(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), angle)
    }

    pub fn rx(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::x(), angle)
    }

    /// Fixed-axis roll/pitch/yaw: `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::rz(yaw).compose(&Self::ry(pitch)).compose(&Self::rx(roll))
    }

    fn canonical(q: UnitQuaternion<f64>) -> Self {
        // Re-normalize to stop drift accumulating over long composition chains.
        let mut raw = *q.quaternion();
        if raw.w < 0.0 {
            raw = -raw;
        }
        Self(UnitQuaternion::new_normalize(raw))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn norm(&self) -> f64 {
        self.0.quaternion().norm()
    }

    pub fn compose(&self, other: &Rotation3) -> Rotation3 {
        Self::canonical(self.0 * other.0)
    }

    pub fn inverse(&self) -> Rotation3 {
        Self::canonical(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0.transform_vector(v)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    /// Rotation vector (axis * angle) with angle in `[0, pi]`.
    pub fn log(&self) -> Vec3 {
        let [w, x, y, z] = self.wxyz();
        let v = Vec3::new(x, y, z);
        let s = v.norm();
        if s < 1e-15 {
            return 2.0 * v;
        }
        // w >= 0 keeps the half angle in [0, pi/2].
        let angle = 2.0 * s.atan2(w);
        v * (angle / s)
    }

    /// Geodesic angle of this rotation, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let [w, x, y, z] = self.wxyz();
        2.0 * Vec3::new(x, y, z).norm().atan2(w)
    }

    /// Geodesic distance between two rotations.
    pub fn angle_to(&self, other: &Rotation3) -> f64 {
        self.inverse().compose(other).angle()
    }

    /// Heading of the rotated x axis projected on the ground plane.
    pub fn yaw(&self) -> f64 {
        let fwd = self.rotate(&Vec3::x());
        fwd.y.atan2(fwd.x)
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rigid pose in SE(3). `apply` maps points from the child frame to the parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transform {
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl Transform {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: Rotation3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation3::identity(), t)
    }

    pub fn from_rotation(r: Rotation3) -> Self {
        Self::new(r, Vec3::zeros())
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let inv = self.rotation.inverse();
        Transform {
            rotation: inv,
            translation: -inv.rotate(&self.translation),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    /// Rotation angle and translation norm of `self^-1 * other`.
    pub fn distance(&self, other: &Transform) -> (f64, f64) {
        let d = self.inverse().compose(other);
        (d.rotation.angle(), d.translation.norm())
    }
}

/// Maps an XR controller pose to an end-effector target:
/// `hmd_in_world * calib * controller_in_hmd`.
pub fn map_controller_to_target(
    hmd_in_world: &Transform,
    controller_in_hmd: &Transform,
    calib: &Transform,
) -> Transform {
    hmd_in_world.compose(&calib.compose(controller_in_hmd))
}

/// Planar base command: body-frame velocities, a per-call yaw increment and a
/// per-call height offset.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocomotionCommand {
    pub v_x: f64,
    pub v_y: f64,
    pub delta_theta: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocomotionLimits {
    pub max_speed: f64,
    pub height_range: f64,
}

impl Default for LocomotionLimits {
    fn default() -> Self {
        Self {
            max_speed: 1.0,
            height_range: 0.3,
        }
    }
}

impl LocomotionCommand {
    pub fn new(v_x: f64, v_y: f64, delta_theta: f64, h: f64, limits: &LocomotionLimits) -> Result<Self> {
        let cmd = Self {
            v_x,
            v_y,
            delta_theta,
            h,
        };
        cmd.validate(limits)?;
        Ok(cmd)
    }

    pub fn validate(&self, limits: &LocomotionLimits) -> Result<()> {
        let all = [self.v_x, self.v_y, self.delta_theta, self.h];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("locomotion command has non-finite fields".into()));
        }
        if self.v_x.abs() > limits.max_speed || self.v_y.abs() > limits.max_speed {
            return Err(Error::OutOfRange {
                what: "planar speed".into(),
                value: self.v_x.abs().max(self.v_y.abs()),
            });
        }
        if self.h.abs() > limits.height_range {
            return Err(Error::OutOfRange {
                what: "height adjustment".into(),
                value: self.h,
            });
        }
        Ok(())
    }
}

/// Advances a floating base by one locomotion command.
///
/// The planar displacement is expressed in the base's current heading frame,
/// then the yaw increment and the height offset are applied once.
pub fn integrate_base(pose: &Transform, u: &LocomotionCommand, dt: f64) -> Result<Transform> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let heading = Rotation3::rz(pose.rotation.yaw());
    let step = heading.rotate(&Vec3::new(u.v_x * dt, u.v_y * dt, 0.0));
    let translation = pose.translation + step + Vec3::new(0.0, 0.0, u.h);
    let rotation = Rotation3::rz(u.delta_theta).compose(&pose.rotation);
    Ok(Transform::new(rotation, translation))
}
