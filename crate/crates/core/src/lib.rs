//! Core engine for decomposed secure multi-party computation.
//!
//! An m-party semi-honest computation is split into *local tasks* (each party
//! works on its own data, no communication) and a bounded number of *SMPC
//! sub-tasks* that combine per-party results with a commutative/associative
//! operator. Secrets are additively shared over the ring Z_2^64 with a
//! fixed-point encoding; multiplications use dealer-supplied Beaver triples.
//!
//! This crate is `no_std` + `alloc`: it contains the arithmetic, the sharing
//! and multiplication protocols, the task-plan auditor, the eigensolvers and
//! the plaintext reference oracles, all generic over a [`channel::PartyChannel`]
//! supplied by the host. Sockets, files and process orchestration live in the
//! companion `smpctd` crate.

#![no_std]

extern crate alloc;

pub mod channel;
pub mod eigen;
pub mod engine;
pub mod ingest;
pub mod linalg;
pub mod oracle;
pub mod pipeline;
pub mod plan;
pub mod ring;
pub mod tensor;
pub mod triple;

pub use channel::{ChannelError, PartyChannel};
pub use engine::{EngineConfig, MpcEngine, MpcError, RevealRecord};
pub use linalg::Matrix;
pub use ring::{FixedPointCodec, RangeError, RingElement};
pub use tensor::ShareTensor;
pub use triple::{MatrixTriple, TripleSource};
