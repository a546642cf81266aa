//! Perioperative multi-agent decision support.
//!
//! The engine plans a surgical workflow by beam search over model-proposed
//! steps, runs specialty department agents and a laboratory agent over a
//! dual memory (session working memory plus a long-term patient store),
//! aggregates their output per task, reflects on it once, and merges
//! clinician feedback into an auditable final document.
//!
//! Every model call goes through [`gateway::Gateway`], so the whole pipeline
//! can run against a [`gateway::ScriptedBackend`] and replay byte for byte.

pub mod agents;
pub mod aggregation;
pub mod config;
pub mod error;
pub mod gateway;
pub mod manager;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod planner;
pub mod session;
mod util;

pub use error::{Error, ErrorClass, Result};
