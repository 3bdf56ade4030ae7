//! Quantum function-as-a-service platform: persistence, backend runtime,
//! deployment pipeline, HTTP gateway and command-line client.
//!
//! Circuit modelling, simulation and backend selection live in
//! `qfaas-core`; this crate runs them as a service.

pub mod auth;
pub mod catalog;
pub mod cli;
pub mod config;
pub mod error;
pub mod gateway;
pub mod invoke;
pub mod jobs;
pub mod package;
pub mod pipeline;
pub mod platform;
pub mod replicas;
pub mod store;
pub mod util;

pub use error::{ApiError, Error, Result};
