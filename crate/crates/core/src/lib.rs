//! Demonstration-data engine for robot manipulation.
//!
//! Compiles declarative scenes to MJCF, retargets streamed hand poses onto
//! articulated models with damped least-squares IK, records 25 Hz episodes
//! with 6D rotations, and multiplies recorded data through keypoint warping
//! and depth-based camera reprojection.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cli;
pub mod episode;
pub mod hitchhike;
pub mod kinematics;
pub mod scene;
pub mod se3;
pub mod server;

pub use se3::{lerp_pose, rot_from_6d, rot_to_6d, slerp, Pose, Rot6D, Se3Error, Twist};
