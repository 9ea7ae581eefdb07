//! Implicit neural representations of longitudinal image development.

pub mod atlas;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod experiment;
pub mod inversion;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod phantom;
pub mod rng;
pub mod training;
pub mod volume;

pub use error::{Error, Result};
