pub mod error;
pub mod numgrad;
pub mod envs;
pub mod hybridsac;
pub mod policykit;
pub mod divlab;
pub mod cli;

pub use error::{CheckpointError, Error, Result};
