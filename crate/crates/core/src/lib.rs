//! Adaptive Tree-of-Retrieval: complexity-aware routing between single-step
//! retrieval and a depth-calibrated retrieval tree, with two-stage candidate
//! pruning, deduplicate-then-rerank consolidation, and the cost accounting and
//! evaluation needed to compare it against fixed-depth and single-step baselines.
//!
//! Model access goes through [`backends::ChatBackend`] and
//! [`embedstore::EmbeddingProvider`]; deterministic stubs for both ship with the
//! crate so the whole pipeline runs offline.

pub mod apm;
pub mod backends;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod embedstore;
pub mod error;
pub mod eval;
pub mod lingsig;
pub mod pipeline;
pub mod qtc;
pub mod rrl;
pub mod tor;

pub use config::EngineConfig;
pub use error::{Error, Result};
pub use pipeline::{Engine, ExecutionMode, QueryTrace};
