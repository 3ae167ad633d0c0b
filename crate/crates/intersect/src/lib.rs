//! Coordination of automated vehicles through a signal-free intersection.
//!
//! Vehicles plan energy-optimal cubic trajectories against a shared
//! coordinator database, fall back to barrier-function QP filtering when no
//! unconstrained plan exists, and switch to a steering-capable emergency
//! controller when a pedestrian steps onto their road.

// Negated comparisons are how inputs reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barriers;
pub mod coordinator;
pub mod dynamics;
pub mod pedestrian;
pub mod planner;
pub mod qpsolve;
pub mod scenario;
pub mod sim;
