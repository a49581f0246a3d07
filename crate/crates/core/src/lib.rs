//! Robust 6D object pose estimation from per-point keypoint votes.
//!
//! The estimator solves a rigid fit for every triple of predicted keypoints,
//! scores each candidate by how well the transformed model explains the
//! observed scene, and blends the candidates with a softmax over those
//! scores. Every stage is written once, generic over [`Real`], so the same
//! code runs on `f64` and on forward-mode dual numbers.

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod diff;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod keypoints;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod real;
pub mod refine;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{PointCloud, Pose, Quaternion};
pub use linalg::{Mat3, Point3, Vec3};
pub use real::Real;
