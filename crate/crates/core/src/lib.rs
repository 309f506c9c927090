//! Federated learning simulator for studying model-poisoning attacks and
//! robust aggregation.

pub mod aggregation;
pub mod attacks;
pub mod cluster;
pub mod config;
pub mod data;
pub mod defenses;
pub mod error;
pub mod model;
pub mod param;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use error::{FedError, Result};
pub use param::ParamVector;
