//! Dynamic vehicle routing with time windows: an epoch simulator, a
//! prize-collecting hybrid genetic search used as a combinatorial layer,
//! imitation-learning machinery for prize prediction, and dispatch policies.

pub mod dataset;
pub mod generator;
pub mod instance;
pub mod learning;
pub mod pchgs;
pub mod policies;
pub mod rng;
pub mod simulator;
