use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Rotation3, Transform, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Fixed transform from the parent link to this joint.
    pub origin: Transform,
    /// Unit rotation axis in the joint frame.
    pub axis: Vec3,
    pub lo: f64,
    pub hi: f64,
    /// Euler angles of `origin` as written in the description file.
    euler: [f64; 3],
}

impl Joint {
    pub fn new(translation: Vec3, euler: [f64; 3], axis: Vec3, lo: f64, hi: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 1e-12) {
            return Err(Error::InvalidInput("joint axis must be non-zero".into()));
        }
        if !(lo < hi) {
            return Err(Error::InvalidInput(format!("joint limits need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self {
            origin: Transform::new(Rotation3::from_euler(euler[0], euler[1], euler[2]), translation),
            axis: axis / n,
            lo,
            hi,
            euler,
        })
    }
}

/// Serial revolute chain, base to tip, plus a fixed end-effector offset.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub joints: Vec<Joint>,
    pub ee: Transform,
    ee_euler: [f64; 3],
    /// Extra transform applied before the first joint.
    pub base: Transform,
}

/// World-frame joint axes and origins plus the end-effector pose for one `q`.
pub struct ChainFrames {
    pub axes: Vec<Vec3>,
    pub origins: Vec<Vec3>,
    /// World position of every joint frame, then the end effector.
    pub points: Vec<Vec3>,
    pub ee: Transform,
}

impl KinematicChain {
    pub fn new(joints: Vec<Joint>, ee_translation: Vec3, ee_euler: [f64; 3]) -> Self {
        Self {
            joints,
            ee: Transform::new(Rotation3::from_euler(ee_euler[0], ee_euler[1], ee_euler[2]), ee_translation),
            ee_euler,
            base: Transform::identity(),
        }
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// World position of the first joint (the shoulder for an arm).
    pub fn base_origin(&self) -> Vec3 {
        match self.joints.first() {
            Some(j) => self.base.compose(&j.origin).translation,
            None => self.base.translation,
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.hi).collect()
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof() && self.joints.iter().zip(q).all(|(j, &v)| v >= j.lo && v <= j.hi)
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (j, v) in self.joints.iter().zip(q.iter_mut()) {
            *v = v.clamp(j.lo, j.hi);
        }
    }

    pub fn with_base(&self, base: Transform) -> Self {
        Self {
            base: base.compose(&self.base),
            ..self.clone()
        }
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::dims("joint vector", self.dof(), q.len()));
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Transform> {
        self.check(q)?;
        let mut t = self.base;
        for (j, &angle) in self.joints.iter().zip(q) {
            t = t
                .compose(&j.origin)
                .compose(&Transform::from_rotation(Rotation3::from_axis_angle(&j.axis, angle)));
        }
        Ok(t.compose(&self.ee))
    }

    pub fn frames(&self, q: &[f64]) -> Result<ChainFrames> {
        self.check(q)?;
        let mut t = self.base;
        let mut axes = Vec::with_capacity(q.len());
        let mut origins = Vec::with_capacity(q.len());
        let mut points = Vec::with_capacity(q.len() + 1);
        for (j, &angle) in self.joints.iter().zip(q) {
            t = t.compose(&j.origin);
            axes.push(t.apply_vector(&j.axis));
            origins.push(t.translation);
            points.push(t.translation);
            t = t.compose(&Transform::from_rotation(Rotation3::from_axis_angle(&j.axis, angle)));
        }
        let ee = t.compose(&self.ee);
        points.push(ee.translation);
        Ok(ChainFrames { axes, origins, points, ee })
    }

    /// Geometric Jacobian: rows 0..3 linear, rows 3..6 angular, world frame.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let f = self.frames(q)?;
        let p = f.ee.translation;
        let mut j = DMatrix::zeros(6, q.len());
        for i in 0..q.len() {
            let lin = f.axes[i].cross(&(p - f.origins[i]));
            for r in 0..3 {
                j[(r, i)] = lin[r];
                j[(r + 3, i)] = f.axes[i][r];
            }
        }
        Ok(j)
    }

    /// Mirror image across the base xz-plane (left arm to right arm).
    pub fn mirrored_y(&self) -> Self {
        let mirror_rot = |r: &Rotation3| {
            let [w, x, y, z] = r.wxyz();
            Rotation3::from_wxyz(w, -x, y, -z).expect("unit quaternion")
        };
        let mirror_t = |t: &Transform| {
            Transform::new(mirror_rot(&t.rotation), Vec3::new(t.translation.x, -t.translation.y, t.translation.z))
        };
        let joints = self
            .joints
            .iter()
            .map(|j| {
                let origin = mirror_t(&j.origin);
                Joint {
                    origin,
                    axis: Vec3::new(-j.axis.x, j.axis.y, -j.axis.z),
                    lo: j.lo,
                    hi: j.hi,
                    euler: [-j.euler[0], j.euler[1], -j.euler[2]],
                }
            })
            .collect();
        Self {
            joints,
            ee: mirror_t(&self.ee),
            ee_euler: [-self.ee_euler[0], self.ee_euler[1], -self.ee_euler[2]],
            base: mirror_t(&self.base),
        }
    }

    /// Parses `joint ax ay az tx ty tz rx ry rz lo hi` lines (base to tip)
    /// followed by `ee tx ty tz rx ry rz`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut joints = Vec::new();
        let mut ee = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line, message };
            let tok: Vec<&str> = body.split_whitespace().collect();
            let nums = tok[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("`{s}` is not a number"))))
                .collect::<Result<Vec<_>>>()?;
            if ee.is_some() {
                return Err(err("nothing may follow the `ee` line".into()));
            }
            match tok[0] {
                "joint" => {
                    if nums.len() != 11 {
                        return Err(err(format!("`joint` takes 11 numbers, got {}", nums.len())));
                    }
                    let j = Joint::new(
                        Vec3::new(nums[3], nums[4], nums[5]),
                        [nums[6], nums[7], nums[8]],
                        Vec3::new(nums[0], nums[1], nums[2]),
                        nums[9],
                        nums[10],
                    )
                    .map_err(|e| err(e.to_string()))?;
                    joints.push(j);
                }
                "ee" => {
                    if nums.len() != 6 {
                        return Err(err(format!("`ee` takes 6 numbers, got {}", nums.len())));
                    }
                    ee = Some((Vec3::new(nums[0], nums[1], nums[2]), [nums[3], nums[4], nums[5]]));
                }
                other => return Err(err(format!("unknown record `{other}`"))),
            }
        }
        let (t, e) = ee.ok_or(Error::Parse {
            line: text.lines().count(),
            message: "missing final `ee` line".into(),
        })?;
        if joints.is_empty() {
            return Err(Error::Parse { line: 0, message: "chain has no joints".into() });
        }
        Ok(Self::new(joints, t, e))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for j in &self.joints {
            let t = j.origin.translation;
            let _ = writeln!(
                out,
                "joint {} {} {} {} {} {} {} {} {} {} {}",
                j.axis.x, j.axis.y, j.axis.z, t.x, t.y, t.z, j.euler[0], j.euler[1], j.euler[2], j.lo, j.hi
            );
        }
        let t = self.ee.translation;
        let _ = writeln!(out, "ee {} {} {} {} {} {}", t.x, t.y, t.z, self.ee_euler[0], self.ee_euler[1], self.ee_euler[2]);
        out
    }
}

/// Reference 7-DoF left arm shipped with the crate.
pub const REFERENCE_ARM: &str = include_str!("../../assets/arm7.chain");

pub fn reference_left_arm() -> KinematicChain {
    KinematicChain::parse(REFERENCE_ARM).expect("bundled arm description parses")
}

pub fn reference_right_arm() -> KinematicChain {
    reference_left_arm().mirrored_y()
}
