//! Simulator and learning machinery for cooperative UAV edge servers.
//!
//! The crate is layered bottom-up:
//!
//! - [`world`]: deterministic physics (mobility, kinematics, air-to-ground
//!   channel, FDMA uplink, per-slot task execution).
//! - [`env`]: the episodic multi-agent environment built on the world model.
//! - [`nn`]: a small dense-network engine with exact backpropagation and Adam.
//! - [`agent`]: actor architectures, feasibility projection, replay and DDPG
//!   updates for one UAV.
//! - [`schemes`]: training orchestrators (DTDE and the comparison regimes) and
//!   the evaluation protocol.

pub mod agent;
pub mod env;
mod error;
pub mod nn;
pub mod rng;
pub mod schemes;
pub mod world;

pub use error::{Error, Result};
