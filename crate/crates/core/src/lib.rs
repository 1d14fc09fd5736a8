//! Concentric tube robot kinematics and goal-conditioned reinforcement
//! learning for inverse kinematics and path following.

pub mod control;
pub mod env;
pub mod error;
pub mod eval;
pub mod jointspace;
pub mod kinematics;
pub mod rl;
pub mod systems;

pub use error::{Error, Result};
