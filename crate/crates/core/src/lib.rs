//! Instruction-constrained off-road navigation without a prior map.
//!
//! The pipeline turns a free-form natural-language instruction into a small
//! set of terrain/speed directives, compiles those into landmark-triggered
//! mission legs, and then closes the loop: a segmentation head scores the
//! camera view, a ground-plane projection lifts the chosen goal pixel into
//! vehicle coordinates, a moving-horizon estimator tracks pose and wheelbase,
//! and a constrained MPC steers toward the goal while honouring the active
//! leg's speed limit.

pub mod harness;
pub mod instruction;
pub mod llm;
pub mod mhe;
pub mod perception;
pub mod planner;
pub mod projection;
pub mod scenario;
pub mod sim;
pub mod smap;
pub mod vehicle;
