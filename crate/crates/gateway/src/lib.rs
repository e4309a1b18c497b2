//! Command line, HTTP API and game server around the ranking engine.

pub mod catalog;
pub mod cli;
pub mod error;
pub mod fetch;
pub mod game;
pub mod http;
pub mod report;

pub use error::{ErrorKind, GatewayError};
