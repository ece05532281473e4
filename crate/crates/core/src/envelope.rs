//! Fixed-size envelopes: the only payload shape that ever crosses the
//! server.
//!
//! An envelope is exactly `size` bytes: a chunk count, length-prefixed
//! chunks, then random padding. Chunks are opaque ciphertexts. Mixes merge
//! chunks bound for the same destination into one envelope and re-pad on
//! every forward, so every unit entering or leaving a mix has the same
//! observable size.

use rand::RngCore;
use thiserror::Error;

use crate::wire::{AddressId, ADDRESS_ID_LEN};

/// Default deployment envelope size.
pub const DEFAULT_ENVELOPE_SIZE: usize = 4096;

/// Fixed per-envelope header: 2-byte chunk count.
const COUNT_LEN: usize = 2;
/// Per-chunk header: 4-byte big-endian length.
const CHUNK_HEADER_LEN: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("chunk of {len} bytes exceeds envelope capacity {max}")]
    ChunkTooLarge { len: usize, max: usize },
    #[error("envelope size {0} too small")]
    SizeTooSmall(usize),
    #[error("malformed envelope: {0}")]
    Malformed(&'static str),
}

/// Largest single chunk that fits one envelope of `size` bytes.
pub fn max_chunk_len(size: usize) -> usize {
    size.saturating_sub(COUNT_LEN + CHUNK_HEADER_LEN)
}

/// Packs chunks into as few fixed-size envelopes as possible, preserving
/// order and keeping every chunk whole. Unused space is filled with random
/// bytes so all envelopes are indistinguishable by size.
pub fn pack_chunks(
    chunks: &[Vec<u8>],
    size: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<u8>>, EnvelopeError> {
    if size < COUNT_LEN + CHUNK_HEADER_LEN {
        return Err(EnvelopeError::SizeTooSmall(size));
    }
    let max = max_chunk_len(size);
    for c in chunks {
        if c.len() > max {
            return Err(EnvelopeError::ChunkTooLarge { len: c.len(), max });
        }
    }
    let mut envelopes = Vec::new();
    let mut current: Vec<&Vec<u8>> = Vec::new();
    let mut used = COUNT_LEN;
    for c in chunks {
        let need = CHUNK_HEADER_LEN + c.len();
        if used + need > size || current.len() == u16::MAX as usize {
            envelopes.push(finish_envelope(&current, size, rng));
            current.clear();
            used = COUNT_LEN;
        }
        current.push(c);
        used += need;
    }
    if !current.is_empty() {
        envelopes.push(finish_envelope(&current, size, rng));
    }
    Ok(envelopes)
}

/// Single-chunk convenience used by senders.
pub fn pack_single(
    chunk: &[u8],
    size: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<u8>, EnvelopeError> {
    let mut envs = pack_chunks(std::slice::from_ref(&chunk.to_vec()), size, rng)?;
    Ok(envs.pop().expect("one chunk yields one envelope"))
}

fn finish_envelope(chunks: &[&Vec<u8>], size: usize, rng: &mut dyn RngCore) -> Vec<u8> {
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(&(chunks.len() as u16).to_be_bytes());
    for c in chunks {
        out.extend_from_slice(&(c.len() as u32).to_be_bytes());
        out.extend_from_slice(c);
    }
    let mut pad = vec![0u8; size - out.len()];
    rng.fill_bytes(&mut pad);
    out.extend_from_slice(&pad);
    debug_assert_eq!(out.len(), size);
    out
}

/// Recovers the exact chunk sequence from an envelope; padding is ignored.
pub fn unpack_chunks(envelope: &[u8]) -> Result<Vec<Vec<u8>>, EnvelopeError> {
    if envelope.len() < COUNT_LEN {
        return Err(EnvelopeError::Malformed("shorter than header"));
    }
    let count = u16::from_be_bytes([envelope[0], envelope[1]]) as usize;
    let mut chunks = Vec::with_capacity(count.min(1024));
    let mut pos = COUNT_LEN;
    for _ in 0..count {
        if envelope.len() < pos + CHUNK_HEADER_LEN {
            return Err(EnvelopeError::Malformed("truncated chunk header"));
        }
        let len = u32::from_be_bytes(
            envelope[pos..pos + CHUNK_HEADER_LEN].try_into().expect("4 bytes"),
        ) as usize;
        pos += CHUNK_HEADER_LEN;
        if envelope.len() < pos + len {
            return Err(EnvelopeError::Malformed("chunk runs past envelope"));
        }
        chunks.push(envelope[pos..pos + len].to_vec());
        pos += len;
    }
    Ok(chunks)
}

/// One onion layer after decryption: the inner ciphertext and where to
/// forward it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutedEnvelope {
    pub message: Vec<u8>,
    pub destination: AddressId,
}

impl RoutedEnvelope {
    /// `destination (16 bytes) || message`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ADDRESS_ID_LEN + self.message.len());
        out.extend_from_slice(&self.destination.0);
        out.extend_from_slice(&self.message);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        if bytes.len() < ADDRESS_ID_LEN {
            return Err(EnvelopeError::Malformed("missing destination"));
        }
        let (dest, message) = bytes.split_at(ADDRESS_ID_LEN);
        Ok(Self {
            message: message.to_vec(),
            destination: AddressId(dest.try_into().expect("length checked")),
        })
    }
}
