//! Training, evaluation and serving front end for the stylebot engine.

pub mod chat;
pub mod config;
pub mod server;
pub mod train;

pub use config::{ConfigError, LoadedConfig};
