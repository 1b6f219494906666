//! Planning for disentangling a grasped object from unknown clutter.
//!
//! The robot only senses its own joint configuration. Each blocked movement is
//! stored in a [`failure_map::FailureMap`]; a probabilistic bidirectional RRT
//! ([`planner`]) then plans the start-to-goal path with the lowest estimated
//! failure probability, the path is executed in a simulated
//! [`environments::Environment`], and the loop repeats until the goal is
//! reached or the path budget runs out. [`baselines`] holds the comparison
//! planners and [`harness`] the experiment runner, statistics and rendering.

pub mod baselines;
pub mod environments;
pub mod failure_map;
pub mod geometry;
pub mod harness;
pub mod kinematics;
pub mod planner;
pub mod seed;

pub use environments::{Environment, Mode};
pub use failure_map::{FailureMap, FailureRecord, PathFailureParams};
pub use geometry::{Quat, Vec3};
pub use kinematics::{JointConfig, KinematicChain, TaskPose, DOF};
pub use planner::{Path, PlannerParams, Tree};
