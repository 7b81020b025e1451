//! Production-scheduling simulation and benchmarking: α|β|γ problem notation,
//! instances, a deterministic discrete-event engine, RL environments,
//! objectives, baseline agents and a multi-seed experiment harness.

pub mod agents;
pub mod bench;
pub mod instance;
pub mod mdp;
pub mod notation;
pub mod objectives;
pub mod plan;
pub mod rng;
pub mod rules;
pub mod simcore;
