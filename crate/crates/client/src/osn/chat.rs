//! Personal and group chats: one concealed address per channel, read and
//! write secrets shared among participants, content keys rotated on
//! removal.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use veilbox_core::cipher::{self, ContentKey, HybridPublicKey, HybridSecretKey};
use veilbox_core::envelope::pack_single;
use veilbox_core::group::SecretExponent;
use veilbox_core::wire::AddressId;

use crate::engine::{AddressSecrets, KeyChoice, Session};
use crate::transport::ClientError;

/// Local chat state. The member list never leaves the client.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatChannel {
    pub label: String,
    pub address: AddressId,
    pub read: SecretExponent,
    pub write: SecretExponent,
    /// Only the channel owner holds the ownership secret.
    pub own: Option<SecretExponent>,
    pub generation: u32,
    /// Content keys by generation; old ones stay for reading history.
    pub keys: BTreeMap<u32, ContentKey>,
    pub members: Vec<String>,
    pub cursor: u64,
    pub envelope_size: usize,
}

impl ChatChannel {
    pub fn current_key(&self) -> &ContentKey {
        &self.keys[&self.generation]
    }
}

/// What a joining member receives, hybrid-sealed to their identity key.
#[derive(Debug, Serialize, Deserialize)]
struct ChatInvite {
    label: String,
    address: String,
    read: String,
    write: String,
    generation: u32,
    key: String,
    envelope_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub from: String,
    pub text: String,
    #[serde(default)]
    pub generation: u32,
}

fn invite_blob(
    session: &Session<'_>,
    chat: &ChatChannel,
    recipient: &HybridPublicKey,
    rng: &mut dyn RngCore,
) -> Vec<u8> {
    let invite = ChatInvite {
        label: chat.label.clone(),
        address: chat.address.to_string(),
        read: chat.read.to_hex(),
        write: chat.write.to_hex(),
        generation: chat.generation,
        key: chat.current_key().to_hex(),
        envelope_size: chat.envelope_size,
    };
    let pt = serde_json::to_vec(&invite).expect("invite serializes");
    cipher::hybrid_seal(session.params(), recipient, &pt, rng)
}

/// Creates the channel address, installs shared read/write secrets, and
/// returns one sealed invite per member.
pub fn create_chat(
    session: &mut Session<'_>,
    label: &str,
    members: &[(String, HybridPublicKey)],
    envelope_size: usize,
    rng: &mut dyn RngCore,
) -> Result<(ChatChannel, Vec<(String, Vec<u8>)>), ClientError> {
    let secrets =
        session.create_address(KeyChoice::Gated, KeyChoice::Gated, KeyChoice::Gated, rng)?;
    let mut keys = BTreeMap::new();
    keys.insert(1, ContentKey::generate(rng));
    let chat = ChatChannel {
        label: label.to_string(),
        address: secrets.c,
        read: secrets.read.clone(),
        write: secrets.write.clone(),
        own: Some(secrets.own.clone()),
        generation: 1,
        keys,
        members: members.iter().map(|(n, _)| n.clone()).collect(),
        cursor: 0,
        envelope_size,
    };
    let invites = members
        .iter()
        .map(|(name, pk)| (name.clone(), invite_blob(session, &chat, pk, rng)))
        .collect();
    Ok((chat, invites))
}

/// Opens an invite (or a rekey notice) with the recipient's identity
/// secret. A rekey for a known chat should be merged via
/// [`merge_rekey`]; a fresh invite becomes a new channel.
pub fn accept_invite(
    session: &Session<'_>,
    own_secret: &HybridSecretKey,
    blob: &[u8],
) -> Result<ChatChannel, ClientError> {
    let pt = cipher::hybrid_open(session.params(), own_secret, blob)?;
    let invite: ChatInvite = serde_json::from_slice(&pt)
        .map_err(|e| ClientError::State(format!("bad chat invite: {e}")))?;
    let params = session.params();
    let mut keys = BTreeMap::new();
    keys.insert(invite.generation, ContentKey::from_hex(&invite.key)?);
    Ok(ChatChannel {
        label: invite.label,
        address: invite
            .address
            .parse()
            .map_err(|e| ClientError::State(format!("bad invite address: {e}")))?,
        read: SecretExponent::from_hex(params, &invite.read)?,
        write: SecretExponent::from_hex(params, &invite.write)?,
        own: None,
        generation: invite.generation,
        keys,
        members: Vec::new(),
        cursor: 0,
        envelope_size: invite.envelope_size,
    })
}

/// Applies a rekey notice to an existing channel, keeping old generation
/// keys for history.
pub fn merge_rekey(chat: &mut ChatChannel, update: ChatChannel) {
    chat.read = update.read;
    chat.write = update.write;
    for (gen, key) in update.keys {
        chat.keys.entry(gen).or_insert(key);
    }
    chat.generation = chat.generation.max(update.generation);
}

/// Seals and writes one message under the current generation key. The
/// payload on the wire is a fixed-size envelope like everything else.
pub fn send_message(
    session: &mut Session<'_>,
    chat: &ChatChannel,
    from: &str,
    text: &str,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let msg = ChatMessage { from: from.to_string(), text: text.to_string(), generation: 0 };
    let pt = serde_json::to_vec(&msg).expect("message serializes");
    let chunk = cipher::seal(chat.current_key(), &pt, rng);
    let envelope = pack_single(&chunk, chat.envelope_size, rng)?;
    let write = (!chat.write.is_wildcard()).then_some(&chat.write);
    session.write_raw(chat.address, write, envelope)
}

/// Fetches new messages, trying held generation keys newest-first.
/// Undecryptable chunks (for example, content from a generation this
/// member never received) are skipped and counted.
pub fn read_messages(
    session: &mut Session<'_>,
    chat: &mut ChatChannel,
) -> Result<(Vec<ChatMessage>, usize), ClientError> {
    let read = (!chat.read.is_wildcard()).then_some(&chat.read);
    let keys: Vec<(u32, ContentKey)> =
        chat.keys.iter().rev().map(|(g, k)| (*g, k.clone())).collect();
    let received = session.receive_with(chat.address, read, chat.cursor, |chunk| {
        keys.iter().find_map(|(gen, key)| {
            let pt = cipher::open(key, chunk).ok()?;
            let mut msg: ChatMessage = serde_json::from_slice(&pt).ok()?;
            msg.generation = *gen;
            serde_json::to_vec(&msg).ok()
        })
    })?;
    chat.cursor = received.next_cursor;
    let messages = received
        .plaintexts
        .iter()
        .filter_map(|pt| serde_json::from_slice(pt).ok())
        .collect();
    Ok((messages, received.skipped))
}

/// Shares the current keys with one more member; no rotation, so the new
/// member can also read history. Idempotent on the member list.
pub fn add_member(
    session: &mut Session<'_>,
    chat: &mut ChatChannel,
    name: &str,
    public_key: &HybridPublicKey,
    rng: &mut dyn RngCore,
) -> Result<Vec<u8>, ClientError> {
    if !chat.members.iter().any(|m| m == name) {
        chat.members.push(name.to_string());
    }
    Ok(invite_blob(session, chat, public_key, rng))
}

/// Owner-only removal: rotates the read and write address keys and mints
/// a generation+1 content key, returning rekey blobs for the remaining
/// members. The removed member can neither pass the new read challenge
/// nor decrypt anything written after the rotation.
pub fn remove_member(
    session: &mut Session<'_>,
    chat: &mut ChatChannel,
    name: &str,
    remaining: &[(String, HybridPublicKey)],
    rng: &mut dyn RngCore,
) -> Result<Vec<(String, Vec<u8>)>, ClientError> {
    let own = chat
        .own
        .clone()
        .ok_or_else(|| ClientError::State("only the channel owner can remove members".into()))?;
    chat.members.retain(|m| m != name);

    let params = session.params().clone();
    let new_read = SecretExponent::new(&params, params.random_exponent(rng)).expect("in range");
    let new_write = SecretExponent::new(&params, params.random_exponent(rng)).expect("in range");
    session.update_keys_with(
        chat.address,
        &own,
        &AddressSecrets {
            c: chat.address,
            read: new_read.clone(),
            write: new_write.clone(),
            own: own.clone(),
        },
    )?;
    chat.read = new_read;
    chat.write = new_write;
    chat.generation += 1;
    chat.keys.insert(chat.generation, ContentKey::generate(rng));

    Ok(remaining
        .iter()
        .map(|(member, pk)| (member.clone(), invite_blob(session, chat, pk, rng)))
        .collect())
}
