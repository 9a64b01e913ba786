//! Planning and training core for a desk-scale bipedal walking stack.
//!
//! The crate hosts a small reverse-mode autodiff engine, a depth-camera scene
//! model, a blurred-occupancy risk field, two model-predictive trackers (a
//! unicycle body planner and a step-to-step walking planner), the planner
//! networks trained against those trackers, and a closed-loop 2-D simulator.

pub mod autodiff;
pub mod error;
pub mod fdcheck;
pub mod field;
pub mod hlip;
pub mod nets;
pub mod scene;
pub mod sim;
pub mod train;
pub mod unicycle;

pub use error::{Error, Result};
