//! Distributed tracking of time-varying optimization problems with internal-model controllers.

pub mod consensus;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harness;
pub mod internal_model;
pub mod lmi;
pub mod spectrum;
pub mod synthesis;

pub use error::{Error, Result};
