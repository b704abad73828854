//! Abstract point-to-point messaging between the `m` party processes.
//!
//! Implementations (TCP sockets, in-process loopback) live in the host
//! crate; the engine only needs ordered word-block delivery per peer plus
//! round marking for the metrics.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Wire message types. The frame layout itself (1-byte type, u64 LE length,
/// payload of little-endian u64 words) is owned by the transport.
pub mod msg {
    pub const HANDSHAKE: u8 = 0x01;
    pub const DATA: u8 = 0x02;
    pub const REVEAL: u8 = 0x03;
    pub const TRIPLE: u8 = 0x04;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelError {
    /// Session parameters (session id, m, f) disagree across parties.
    HandshakeMismatch(String),
    /// Peer or dealer unreachable within the timeout.
    ConnectTimeout(String),
    /// Channel closed mid-protocol.
    Closed,
    /// Malformed or unexpected frame.
    Protocol(String),
}

impl fmt::Display for ChannelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelError::HandshakeMismatch(s) => write!(f, "handshake mismatch: {s}"),
            ChannelError::ConnectTimeout(s) => write!(f, "connect timeout: {s}"),
            ChannelError::Closed => write!(f, "channel closed"),
            ChannelError::Protocol(s) => write!(f, "protocol error: {s}"),
        }
    }
}

/// One party's view of the full mesh.
pub trait PartyChannel {
    fn party_id(&self) -> usize;

    /// Total party count `m` (the dealer is not counted).
    fn parties(&self) -> usize;

    /// Sends one frame of ring-element words to `peer`.
    fn send(&mut self, peer: usize, msg_type: u8, words: &[u64]) -> Result<(), ChannelError>;

    /// Receives the next frame of the given type from `peer` (blocking).
    fn recv(&mut self, peer: usize, msg_type: u8) -> Result<Vec<u64>, ChannelError>;

    /// Marks the end of one barrier-separated communication phase.
    fn mark_round(&mut self);

    /// Wall-clock milliseconds for reveal records; transports without a
    /// clock may return 0.
    fn now_millis(&self) -> u64 {
        0
    }
}
