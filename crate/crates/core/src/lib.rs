//! Simulation and learning toolkit for remote state estimation over NOMA
//! uplinks.

pub mod channel;
pub mod codec;
pub mod dqn;
pub mod env;
pub mod harness;
pub mod error;
pub mod link;
pub mod nn;
pub mod plant;
pub mod policy;
pub mod ppo;
pub mod rng;

pub use error::{Error, Result};
