//! Simulator for hierarchically federated region-learning over vehicle
//! fleets.
//!
//! The pipeline has two stages. [`geo`] splits a fleet into regions using a
//! joint spatial / label-distribution distance. [`federation`] then trains
//! a three-tier system (vehicles, regional servers, a central server) where
//! each vehicle's and each region's model is personalized by a small
//! [`hypernet`] that weights peer models on the probability simplex, and
//! regional models come from penalty-weighted averaging of member models.
//!
//! [`synth`] produces reproducible fleets with label-skewed local datasets
//! for experiments, and [`model`] provides the classifier being trained.

pub mod cli;
pub mod config;
pub mod error;
pub mod federation;
pub mod geo;
pub mod gradcheck;
pub mod hypernet;
pub mod model;
pub mod rng;
pub mod synth;
mod textio;

pub use error::{Error, Result};
