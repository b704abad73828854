//! Host-side companion to `smpctd-core`: transports, the dealer, file
//! formats, ingestion, the run harness and the scaling benchmark.

pub use smpctd_core as core;

pub mod bench;
pub mod data;
pub mod dealer;
pub mod frame;
pub mod metrics;
pub mod runner;
pub mod transport;
