// SPDX-License-Identifier: Apache-2.0

//! Corpus-scaling experiments for retrieval-augmented generation.
//!
//! A corpus is split into `N` balanced random shards, each indexed on its
//! own. Corpus scale `n` activates the first `n` shards (or the last `n` in
//! reversed order); retrieval fans out to the active shards and merges their
//! top-k. A run evaluates every (model, scale, question) cell, logs raw
//! outputs to a resumable log, and analysis derives score grids, catch-up
//! thresholds and context-benefit metrics from the log alone.

pub mod corpus;
pub mod digest;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod generate;
pub mod http;
pub mod index;
pub mod metrics;
pub mod retrieve;
pub mod synthetic;

pub use error::{Error, Result};
