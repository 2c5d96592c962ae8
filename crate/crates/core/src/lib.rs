//! Optimization-based path planning for automated vehicles on multi-lane
//! motorways, and a deterministic microscopic simulator to evaluate it.

pub mod cost;
pub mod dp_init;
pub mod experiment;
pub mod fda;
pub mod kinematics;
pub mod metrics;
pub mod planner;
pub mod sim;
pub mod trace;
