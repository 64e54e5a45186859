//! Panoramic point-cloud visuomotor policy lab.
//!
//! The crate covers the whole loop at desk scale: a panoramic LiDAR and a
//! narrow depth camera rendered from primitive scenes, crop/downsample/temporal
//! aggregation of the returns, a pointwise encoder with time-aware attention
//! pooling, a DDPM action decoder, a bound-constrained IK expert, and the
//! behavior-cloning harness that collects, trains, rolls out and scores
//! policies.

pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod ik;
pub mod lidar_sim;
pub mod nn;
pub mod plot;
pub mod pointcloud;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Rotation3, Transform, Vec3};

/// Full-body proprioceptive state width (legs, waist, arms, hands).
pub const PROPRIO_DIM: usize = 43;
/// Supervised upper-body action width (two arms and two hands).
pub const ACTION_DIM: usize = 28;
/// Leading proprio entries held by the lower-body stabilizer (legs and waist).
pub const LOWER_BODY_DIM: usize = 15;
pub const ARM_DOF: usize = 7;
pub const HAND_DOF: usize = 7;
