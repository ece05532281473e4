//! Onion construction: wrap a payload in one encryption layer per mix,
//! inside-out, so each hop learns only the next destination.
//!
//! The sender picks mixes one at a time; each chosen mix becomes the new
//! first hop and its layer carries the previous hop's address. The
//! outermost layer therefore belongs to the last mix chosen, which is
//! where the sender actually writes.

use rand::seq::SliceRandom;
use rand::RngCore;

use veilbox_core::cipher::{self, HybridPublicKey};
use veilbox_core::envelope::{pack_single, RoutedEnvelope};
use veilbox_core::group::GroupParams;
use veilbox_core::wire::AddressId;

use crate::directory::MixDirectory;
use crate::transport::ClientError;

/// An ordered mix path. `hops[0]` is the first layer applied (closest to
/// the recipient); the last entry is the first hop on the wire.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub hops: Vec<Hop>,
}

#[derive(Debug, Clone)]
pub struct Hop {
    pub public_key: HybridPublicKey,
    pub inbox: AddressId,
}

impl PathSpec {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }
}

/// Samples `l` distinct mixes (without replacement) from the directory,
/// one random inbox per hop. Mixes whose key is in `exclude` are skipped.
pub fn sample_path(
    directory: &MixDirectory,
    l: usize,
    exclude: &[HybridPublicKey],
    rng: &mut dyn RngCore,
) -> Result<PathSpec, ClientError> {
    let candidates: Vec<_> = directory
        .mixes
        .iter()
        .filter(|m| !exclude.contains(&m.public_key) && !m.inboxes.is_empty())
        .collect();
    if candidates.len() < l {
        return Err(ClientError::State(format!(
            "path length {l} exceeds the {} usable mixes",
            candidates.len()
        )));
    }
    let chosen: Vec<_> = candidates.choose_multiple(rng, l).collect();
    let hops = chosen
        .into_iter()
        .map(|m| Hop {
            public_key: m.public_key.clone(),
            inbox: *m.inboxes.choose(rng).expect("non-empty checked above"),
        })
        .collect();
    Ok(PathSpec { hops })
}

/// Wraps an already-encrypted payload for delivery to `destination`
/// through `path`. Returns the first-hop address and the fixed-size
/// envelope to write there.
pub fn build_onion_raw(
    params: &GroupParams,
    envelope_size: usize,
    payload: Vec<u8>,
    destination: AddressId,
    path: &PathSpec,
    rng: &mut dyn RngCore,
) -> Result<(AddressId, Vec<u8>), ClientError> {
    let mut message = payload;
    let mut dest = destination;
    for hop in &path.hops {
        let routed = RoutedEnvelope { message, destination: dest };
        message = cipher::hybrid_seal(params, &hop.public_key, &routed.to_bytes(), rng);
        dest = hop.inbox;
    }
    let envelope = pack_single(&message, envelope_size, rng)?;
    Ok((dest, envelope))
}

/// Full sender flow: seal the message to the recipient's public key, then
/// wrap one layer per sampled mix.
pub fn build_onion(
    params: &GroupParams,
    envelope_size: usize,
    message: &[u8],
    recipient_key: &HybridPublicKey,
    recipient_address: AddressId,
    directory: &MixDirectory,
    l: usize,
    rng: &mut dyn RngCore,
) -> Result<(AddressId, Vec<u8>), ClientError> {
    let path = sample_path(directory, l, &[], rng)?;
    let inner = cipher::hybrid_seal(params, recipient_key, message, rng);
    build_onion_raw(params, envelope_size, inner, recipient_address, &path, rng)
}

/// Default path length range: uniform in [2, 4], clamped to the number of
/// available mixes.
pub fn default_path_len(available_mixes: usize, rng: &mut dyn RngCore) -> usize {
    let upper = available_mixes.min(4);
    let lower = 2.min(upper);
    if upper == 0 {
        return 0;
    }
    lower + (rng.next_u32() as usize) % (upper - lower + 1)
}
