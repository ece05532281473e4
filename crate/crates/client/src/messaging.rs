//! Mix-routed personal messaging: the sender seals a message to the
//! recipient's identity key, wraps it in one layer per mix, and writes the
//! envelope to the first hop's inbox. Ownership transfers ride the same
//! channel.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use veilbox_core::cipher::{self, HybridPublicKey, HybridSecretKey};
use veilbox_core::group::SecretExponent;
use veilbox_core::wire::AddressId;

use crate::directory::MixDirectory;
use crate::engine::{AddressSecrets, Session};
use crate::onion::{build_onion_raw, sample_path};
use crate::transport::ClientError;

/// End-to-end plaintext of an inbox chunk. The sender chooses whether to
/// self-identify; the field never appears outside the sealed layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InboxMessage {
    Dm { from: Option<String>, body: String },
    OwnershipTransfer { address: String, own: String },
    /// A sealed chat invite or rekey blob, carried opaquely.
    ChatKeys { blob: String },
}

impl InboxMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("inbox message serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClientError> {
        serde_json::from_slice(bytes)
            .map_err(|e| ClientError::State(format!("bad inbox message: {e}")))
    }
}

/// Seals `message` to the recipient and routes it over `l` mixes sampled
/// from the directory. With `l = 0` the envelope goes straight to the
/// recipient's inbox.
pub fn send_via_mixes(
    session: &mut Session<'_>,
    directory: &MixDirectory,
    l: usize,
    recipient_key: &HybridPublicKey,
    recipient_inbox: AddressId,
    message: &InboxMessage,
    envelope_size: usize,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let path = sample_path(directory, l, &[], rng)?;
    let inner = cipher::hybrid_seal(session.params(), recipient_key, &message.to_bytes(), rng);
    let (first_hop, envelope) =
        build_onion_raw(session.params(), envelope_size, inner, recipient_inbox, &path, rng)?;
    session.write_raw(first_hop, None, envelope)
}

/// Polls the personal inbox and opens every chunk sealed to us. Returns
/// the parsed messages, the next cursor, and the count of chunks that
/// were not for us or not parseable.
pub fn read_inbox(
    session: &mut Session<'_>,
    inbox: &AddressSecrets,
    identity: &HybridSecretKey,
    cursor: u64,
) -> Result<(Vec<InboxMessage>, u64, usize), ClientError> {
    let params = session.params().clone();
    let received = session.receive_with(inbox.c, inbox.read_secret(), cursor, |chunk| {
        cipher::hybrid_open(&params, identity, chunk).ok()
    })?;
    let mut messages = Vec::new();
    let mut skipped = received.skipped;
    for pt in &received.plaintexts {
        match InboxMessage::from_bytes(pt) {
            Ok(m) => messages.push(m),
            Err(_) => skipped += 1,
        }
    }
    Ok((messages, received.next_cursor, skipped))
}

/// Sends the ownership secret of `c` to a new owner over a concealed
/// path. The recipient claims it with [`claim_ownership`], after which
/// our own secrets for `c` stop working.
pub fn send_ownership(
    session: &mut Session<'_>,
    directory: &MixDirectory,
    l: usize,
    recipient_key: &HybridPublicKey,
    recipient_inbox: AddressId,
    c: AddressId,
    own: &SecretExponent,
    envelope_size: usize,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let message =
        InboxMessage::OwnershipTransfer { address: c.to_string(), own: own.to_hex() };
    send_via_mixes(
        session,
        directory,
        l,
        recipient_key,
        recipient_inbox,
        &message,
        envelope_size,
        rng,
    )
}

/// Installs fresh keys on a transferred address, proving ownership with
/// the received secret. Revokes every key the previous owner held.
pub fn claim_ownership(
    session: &mut Session<'_>,
    transfer_address: &str,
    transfer_own: &str,
    rng: &mut dyn RngCore,
) -> Result<AddressSecrets, ClientError> {
    let params = session.params().clone();
    let c: AddressId = transfer_address
        .parse()
        .map_err(|e| ClientError::State(format!("bad transfer address: {e}")))?;
    let received_own = SecretExponent::from_hex(&params, transfer_own)?;
    let fresh = |rng: &mut dyn RngCore| {
        SecretExponent::new(&params, params.random_exponent(rng)).expect("in range")
    };
    let new = AddressSecrets { c, read: fresh(rng), write: fresh(rng), own: fresh(rng) };
    session.update_keys_with(c, &received_own, &new)?;
    Ok(new)
}
