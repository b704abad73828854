//! Per-session resource accounting.
//!
//! Transports bump the shared counters on every frame; the runner folds them
//! into a [`SessionMetrics`] snapshot together with the engine's peak live
//! share count and the measured wall time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Default)]
pub struct Counters {
    bytes_sent: AtomicU64,
    bytes_received: AtomicU64,
    rounds: AtomicU64,
}

impl Counters {
    pub fn new() -> Arc<Counters> {
        Arc::new(Counters::default())
    }

    pub fn add_sent(&self, bytes: u64) {
        self.bytes_sent.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn add_received(&self, bytes: u64) {
        self.bytes_received.fetch_add(bytes, Ordering::Relaxed);
    }

    pub fn add_round(&self) {
        self.rounds.fetch_add(1, Ordering::Relaxed);
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent.load(Ordering::Relaxed)
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received.load(Ordering::Relaxed)
    }

    pub fn rounds(&self) -> u64 {
        self.rounds.load(Ordering::Relaxed)
    }
}

/// One party's resource usage over a whole protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    /// Barrier-separated communication phases.
    pub rounds: u64,
    /// Seconds.
    pub wall_time: f64,
    /// Peak number of live shared ring elements.
    pub peak_ring_elements: u64,
}

impl SessionMetrics {
    pub fn collect(counters: &Counters, peak_ring_elements: u64, wall_time: f64) -> SessionMetrics {
        SessionMetrics {
            bytes_sent: counters.bytes_sent(),
            bytes_received: counters.bytes_received(),
            rounds: counters.rounds(),
            wall_time,
            peak_ring_elements,
        }
    }
}
