//! Completion of incomplete brick assemblies.
//!
//! The pipeline infers what an incomplete structure was meant to be by
//! scaling, registering and scoring it against a library of complete
//! assemblies ([`matching`]), then places bricks one at a time under a
//! physical-validity action mask ([`env`]) chosen by a greedy or masked-PPO
//! policy ([`policy`]).

pub mod corpus;
pub mod env;
pub mod error;
pub mod io;
pub mod matching;
pub mod pointcloud;
pub mod policy;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
