pub mod cli;
pub mod config;
pub mod domain;
pub mod environment;
pub mod error;
pub mod evaluation;
pub mod learning;
pub mod policy;
pub mod regression;
pub mod reward;
pub mod rng;
pub mod stats;
pub mod walkthrough;

pub use error::{Error, Result};
