//! Benchmark, scoring, backend protocol, agent and multi-agent runtime for
//! evaluating language-model agents that can call domain foundation models.

pub mod agent;
pub mod backend;
pub mod bench;
pub mod error;
pub mod harness;
pub mod interface;
pub mod mas;
pub mod metrics;
pub mod orchestra;
pub mod trace;
