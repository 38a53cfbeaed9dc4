//! Cooperative localization of robot swarms that leapfrog through a lattice
//! of equilateral triangles, with a dead-reckoning baseline for comparison.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod geometry;
pub mod noise;
pub mod planner;
pub mod scenario;
pub mod sim;
pub mod vision;

pub use error::{ControlError, GeometryError, NoiseError, PlanError, ScenarioError, SimError, VisionError};
