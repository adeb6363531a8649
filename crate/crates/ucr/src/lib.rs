//! Files, configuration and commands around [`ucr_core`].

mod binary;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod memory_dump;
pub mod tables;

pub use error::{Error, Failure, Result};
pub use ucr_core;
