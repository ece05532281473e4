//! Protocol vocabulary for concealed-address messaging: group arithmetic
//! and challenge-response proofs, content encryption, key fingerprints,
//! the client/server wire codec, and fixed-size envelopes.
//!
//! Everything here is pure computation over immutable inputs plus a
//! caller-supplied randomness source; no module holds shared mutable
//! state.

pub mod cipher;
pub mod envelope;
pub mod fingerprint;
pub mod group;
pub mod sig;
pub mod wire;

pub use num_bigint::BigUint;
