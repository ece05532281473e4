//! Profiles as encrypted linked-address graphs.
//!
//! The root address is world-readable and holds the deliberately public
//! entries plus sealed links to per-field addresses. Field content keys
//! are wrapped per authorized reader in a key-directory address, itself
//! reachable through a sealed "Keys" link whose key travels in the
//! out-of-band contact bundle. A reader therefore resolves: root -> Keys
//! link -> directory -> wrapped keys -> field links -> field contents.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use veilbox_core::cipher::{self, ContentKey, HybridPublicKey, HybridSecretKey};
use veilbox_core::group::SecretExponent;
use veilbox_core::wire::AddressId;

use crate::engine::{AddressSecrets, KeyChoice, Session};
use crate::osn::records::{KeyId, SealedPayload, StoredRecord, WrapPayload};
use crate::transport::ClientError;

/// One field key: the material plus which labels it currently covers and
/// who has been granted it.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldKey {
    pub key: ContentKey,
    pub labels: Vec<String>,
    pub grantees: Vec<HybridPublicKey>,
}

/// Owner-side profile state.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileState {
    pub root: AddressSecrets,
    pub directory: AddressSecrets,
    /// Key id of the profile-keys key sealing the "Keys" link; shared out
    /// of band in the contact bundle.
    pub keys_key_id: KeyId,
    pub field_keys: BTreeMap<KeyId, FieldKey>,
    /// Key group tag -> key id, for callers that address keys by name.
    pub groups: BTreeMap<String, KeyId>,
    pub fields: BTreeMap<String, AddressSecrets>,
}

impl ProfileState {
    pub fn keys_key(&self) -> &ContentKey {
        &self.field_keys[&self.keys_key_id].key
    }

    pub fn key_id_for_group(&self, group: &str) -> Option<KeyId> {
        self.groups.get(group).copied()
    }
}

/// What to publish.
#[derive(Debug, Clone)]
pub enum EntrySpec {
    Public { label: String, value: String },
    /// Sealed field stored at its own address; `group` names the key that
    /// covers it (one key may cover several fields, as in a contact tier).
    Private { label: String, value: String, group: String },
}

fn fresh_key_id(taken: &BTreeSet<KeyId>, rng: &mut dyn RngCore) -> KeyId {
    // Random tags rather than counters, so key ids don't leak how many
    // keys a user has minted.
    loop {
        let id = rng.next_u32();
        if !taken.contains(&id) {
            return id;
        }
    }
}

/// Creates the full profile graph and writes every record.
pub fn publish_profile(
    session: &mut Session<'_>,
    name: &str,
    identity_key: &HybridPublicKey,
    entries: &[EntrySpec],
    rng: &mut dyn RngCore,
) -> Result<ProfileState, ClientError> {
    let root = session.create_address(KeyChoice::Open, KeyChoice::Gated, KeyChoice::Gated, rng)?;
    let directory =
        session.create_address(KeyChoice::Open, KeyChoice::Gated, KeyChoice::Gated, rng)?;

    let mut taken = BTreeSet::new();
    let keys_key_id = fresh_key_id(&taken, rng);
    taken.insert(keys_key_id);
    let mut field_keys = BTreeMap::new();
    field_keys.insert(
        keys_key_id,
        FieldKey { key: ContentKey::generate(rng), labels: vec![], grantees: vec![] },
    );
    let mut state = ProfileState {
        root,
        directory,
        keys_key_id,
        field_keys,
        groups: BTreeMap::new(),
        fields: BTreeMap::new(),
    };

    // Public rows first: the name and the identity key are the profile's
    // deliberate publications.
    write_root(session, &state, StoredRecord::Plain {
        label: "Name".into(),
        value: name.to_string(),
    })?;
    write_root(session, &state, StoredRecord::Plain {
        label: "Public key".into(),
        value: identity_key.to_hex(),
    })?;

    for entry in entries {
        match entry {
            EntrySpec::Public { label, value } => {
                write_root(session, &state, StoredRecord::Plain {
                    label: label.clone(),
                    value: value.clone(),
                })?;
            }
            EntrySpec::Private { label, value, group } => {
                let key_id = group_key(&mut state, group, &mut taken, rng);
                let field = session.create_address(
                    KeyChoice::Gated,
                    KeyChoice::Gated,
                    KeyChoice::Gated,
                    rng,
                )?;
                set_field_value(session, &state, &field, key_id, value, rng)?;
                let link = SealedPayload::link(label, field.c, field.read_secret(), key_id);
                let key = state.field_keys[&key_id].key.clone();
                write_root(session, &state, link.seal_tagged(key_id, &key, rng))?;
                state.field_keys.get_mut(&key_id).unwrap().labels.push(label.clone());
                state.fields.insert(label.clone(), field);
            }
        }
    }

    // The "Keys" row points at the key directory, sealed under the
    // profile-keys key so only bundle holders can follow it.
    let keys_link = SealedPayload::link("Keys", state.directory.c, None, keys_key_id);
    let keys_key = state.keys_key().clone();
    write_root(session, &state, keys_link.seal_tagged(keys_key_id, &keys_key, rng))?;
    Ok(state)
}

fn group_key(
    state: &mut ProfileState,
    group: &str,
    taken: &mut BTreeSet<KeyId>,
    rng: &mut dyn RngCore,
) -> KeyId {
    if let Some(id) = state.groups.get(group) {
        return *id;
    }
    let id = fresh_key_id(taken, rng);
    taken.insert(id);
    state
        .field_keys
        .insert(id, FieldKey { key: ContentKey::generate(rng), labels: vec![], grantees: vec![] });
    state.groups.insert(group.to_string(), id);
    id
}

fn write_root(
    session: &mut Session<'_>,
    state: &ProfileState,
    record: StoredRecord,
) -> Result<(), ClientError> {
    session.write_raw(state.root.c, state.root.write_secret(), record.to_bytes())
}

fn set_field_value(
    session: &mut Session<'_>,
    state: &ProfileState,
    field: &AddressSecrets,
    key_id: KeyId,
    value: &str,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let key = state.field_keys[&key_id].key.clone();
    let record = SealedPayload::Post { text: value.to_string() }.seal_tagged(key_id, &key, rng);
    session.write_raw(field.c, field.write_secret(), record.to_bytes())
}

/// Appends a new value for an existing private field under its current
/// key; readers take the latest post.
pub fn update_field(
    session: &mut Session<'_>,
    state: &ProfileState,
    label: &str,
    value: &str,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let field = state
        .fields
        .get(label)
        .ok_or_else(|| ClientError::State(format!("no private field {label:?}")))?
        .clone();
    let key_id = state
        .field_keys
        .iter()
        .find(|(_, fk)| fk.labels.iter().any(|l| l == label))
        .map(|(id, _)| *id)
        .ok_or_else(|| ClientError::State(format!("no key covers {label:?}")))?;
    set_field_value(session, state, &field, key_id, value, rng)
}

/// Links an externally created address (a feed, say) into the profile
/// through an indirection hop: the root link points at a fresh address
/// holding one unlabeled link to the real target.
pub fn link_section(
    session: &mut Session<'_>,
    state: &mut ProfileState,
    label: &str,
    group: &str,
    target: AddressId,
    target_read: Option<&SecretExponent>,
    target_key_id: KeyId,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let mut taken: BTreeSet<KeyId> = state.field_keys.keys().copied().collect();
    let key_id = group_key(state, group, &mut taken, rng);
    let key = state.field_keys[&key_id].key.clone();

    let hop =
        session.create_address(KeyChoice::Gated, KeyChoice::Gated, KeyChoice::Gated, rng)?;
    let inner = SealedPayload::link("", target, target_read, target_key_id);
    session.write_raw(hop.c, hop.write_secret(), inner.seal_tagged(key_id, &key, rng).to_bytes())?;

    let outer = SealedPayload::link(label, hop.c, hop.read_secret(), key_id);
    write_root(session, state, outer.seal_tagged(key_id, &key, rng))?;
    state.field_keys.get_mut(&key_id).unwrap().labels.push(label.to_string());
    state.fields.insert(label.to_string(), hop);
    Ok(())
}

/// Grants `reader` the named keys by appending wrappings to the key
/// directory. Returns true when the grantee was verified; callers may
/// treat false as a warning.
pub fn grant_access(
    session: &mut Session<'_>,
    state: &mut ProfileState,
    reader: &HybridPublicKey,
    reader_verified: bool,
    key_ids: &[KeyId],
    rng: &mut dyn RngCore,
) -> Result<bool, ClientError> {
    for key_id in key_ids {
        let fk = state
            .field_keys
            .get(key_id)
            .ok_or_else(|| ClientError::State(format!("unknown key id {key_id}")))?;
        let (address, read_secret) = fk
            .labels
            .first()
            .and_then(|l| state.fields.get(l))
            .map(|f| (Some(f.c.to_string()), f.read_secret().map(|s| s.to_hex())))
            .unwrap_or((None, None));
        let payload = WrapPayload {
            key_id: *key_id,
            key: fk.key.to_hex(),
            address,
            read_secret,
        };
        let pt = serde_json::to_vec(&payload).expect("wrap serializes");
        let ct = cipher::hybrid_seal(session.params(), reader, &pt, rng);
        let record = StoredRecord::Wrap { ct: hex::encode(ct) };
        session.write_raw(state.directory.c, state.directory.write_secret(), record.to_bytes())?;
        let fk = state.field_keys.get_mut(key_id).unwrap();
        if !fk.grantees.contains(reader) {
            fk.grantees.push(reader.clone());
        }
    }
    Ok(reader_verified)
}

/// Replaces one content key: future writes to its fields use the new key,
/// root links are re-published under it, and remaining grantees (everyone
/// but `revoked`) get fresh wrappings. Returns the new key id.
pub fn rotate_field_key(
    session: &mut Session<'_>,
    state: &mut ProfileState,
    key_id: KeyId,
    revoked: Option<&HybridPublicKey>,
    rng: &mut dyn RngCore,
) -> Result<KeyId, ClientError> {
    let old = state
        .field_keys
        .get(&key_id)
        .ok_or_else(|| ClientError::State(format!("unknown key id {key_id}")))?
        .clone();
    let taken: BTreeSet<KeyId> = state.field_keys.keys().copied().collect();
    let new_id = fresh_key_id(&taken, rng);
    let new_key = ContentKey::generate(rng);
    let remaining: Vec<HybridPublicKey> =
        old.grantees.iter().filter(|g| Some(*g) != revoked).cloned().collect();

    // Re-publish each covered link under the new key.
    for label in &old.labels {
        if let Some(field) = state.fields.get(label).cloned() {
            let link = SealedPayload::link(label, field.c, field.read_secret(), new_id);
            write_root(session, state, link.seal_tagged(new_id, &new_key, rng))?;
        }
    }
    // The retired key stays usable for reading history but covers no
    // fields any more; new writes must pick up the fresh key.
    state.field_keys.get_mut(&key_id).expect("checked above").labels.clear();
    for id in state.groups.values_mut() {
        if *id == key_id {
            *id = new_id;
        }
    }
    state.field_keys.insert(
        new_id,
        FieldKey { key: new_key, labels: old.labels.clone(), grantees: remaining.clone() },
    );

    for reader in &remaining {
        grant_access(session, state, reader, true, &[new_id], rng)?;
    }
    Ok(new_id)
}

/// A resolved profile: what one reader, with one key set, can see.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResolvedProfile {
    pub fields: BTreeMap<String, ResolvedField>,
    /// Key ids of sealed entries the reader could not open.
    pub opaque_key_ids: Vec<KeyId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedField {
    Text(String),
    Section(ResolvedSection),
}

impl ResolvedField {
    /// Convenience for single-valued fields.
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ResolvedField::Text(s) => Some(s),
            ResolvedField::Section(sec) if sec.posts.len() == 1 && sec.nested.is_empty() => {
                Some(&sec.posts[0])
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResolvedSection {
    pub posts: Vec<String>,
    pub nested: BTreeMap<String, ResolvedField>,
    pub opaque: usize,
}

/// Fixpoint traversal: decrypt every link whose key is held, fetch linked
/// addresses, recurse; wrapped keys discovered in key directories widen
/// the key set and trigger another pass. Cycles end at the visited set.
pub fn resolve_profile(
    session: &mut Session<'_>,
    root: AddressId,
    own_secret: Option<&HybridSecretKey>,
    bootstrap_keys: &[(KeyId, ContentKey)],
) -> Result<ResolvedProfile, ClientError> {
    let mut keys: BTreeMap<KeyId, ContentKey> = bootstrap_keys.iter().cloned().collect();
    loop {
        let mut discovered: Vec<(KeyId, ContentKey)> = Vec::new();
        let mut walk = Walk { stack: BTreeSet::new(), memo: BTreeMap::new() };
        let section =
            resolve_address(session, root, None, &keys, own_secret, &mut walk, &mut discovered)?;
        let mut grew = false;
        for (id, key) in discovered {
            if !keys.contains_key(&id) {
                keys.insert(id, key);
                grew = true;
            }
        }
        if !grew {
            return Ok(ResolvedProfile {
                fields: section.nested,
                opaque_key_ids: section.opaque_ids,
            });
        }
    }
}

/// Traversal state for one pass: the recursion stack breaks cycles, the
/// memo lets several links target the same address.
struct Walk {
    stack: BTreeSet<AddressId>,
    memo: BTreeMap<AddressId, RawSection>,
}

#[derive(Default, Clone)]
struct RawSection {
    posts: Vec<String>,
    nested: BTreeMap<String, ResolvedField>,
    opaque_ids: Vec<KeyId>,
}

impl RawSection {
    fn into_field(self) -> ResolvedField {
        ResolvedField::Section(ResolvedSection {
            posts: self.posts,
            nested: self.nested,
            opaque: self.opaque_ids.len(),
        })
    }
}

fn resolve_address(
    session: &mut Session<'_>,
    address: AddressId,
    read_secret: Option<&SecretExponent>,
    keys: &BTreeMap<KeyId, ContentKey>,
    own_secret: Option<&HybridSecretKey>,
    walk: &mut Walk,
    discovered: &mut Vec<(KeyId, ContentKey)>,
) -> Result<RawSection, ClientError> {
    let mut out = RawSection::default();
    if walk.stack.contains(&address) {
        return Ok(out);
    }
    if let Some(done) = walk.memo.get(&address) {
        return Ok(done.clone());
    }
    walk.stack.insert(address);
    let (payloads, _) = match session.read_raw(address, read_secret, 0) {
        Ok(r) => r,
        // Unreachable or denied addresses resolve to nothing.
        Err(_) => {
            walk.stack.remove(&address);
            return Ok(out);
        }
    };
    // Later records supersede earlier ones per label.
    for payload in &payloads {
        let Ok(record) = StoredRecord::from_bytes(payload) else { continue };
        match record {
            StoredRecord::Plain { label, value } => {
                out.nested.insert(label, ResolvedField::Text(value));
            }
            StoredRecord::Roster { .. } => {}
            StoredRecord::Wrap { ct } => {
                let Some(sk) = own_secret else { continue };
                let Ok(raw) = hex::decode(&ct) else { continue };
                let Ok(pt) = cipher::hybrid_open(session.params(), sk, &raw) else { continue };
                let Ok(wrap) = serde_json::from_slice::<WrapPayload>(&pt) else { continue };
                if let Ok(key) = wrap.content_key() {
                    discovered.push((wrap.key_id, key));
                }
            }
            StoredRecord::Sealed { key_id, ct } => {
                let Some(key) = keys.get(&key_id) else {
                    out.opaque_ids.push(key_id);
                    continue;
                };
                let Some(payload) = SealedPayload::open(key, &ct) else {
                    out.opaque_ids.push(key_id);
                    continue;
                };
                match payload {
                    SealedPayload::Text { label, value } => {
                        out.nested.insert(label, ResolvedField::Text(value));
                    }
                    SealedPayload::Post { text } => out.posts.push(text),
                    SealedPayload::Link { label, target, read_secret, key_id: _ } => {
                        let Ok(target) = target.parse::<AddressId>() else { continue };
                        let secret = match read_secret
                            .map(|s| SecretExponent::from_hex(session.params(), &s))
                        {
                            Some(Ok(s)) => Some(s),
                            Some(Err(_)) => continue,
                            None => None,
                        };
                        let sub = resolve_address(
                            session,
                            target,
                            secret.as_ref(),
                            keys,
                            own_secret,
                            walk,
                            discovered,
                        )?;
                        if label.is_empty() {
                            // Indirection hop: fold the target into this
                            // section.
                            out.posts.extend(sub.posts);
                            out.nested.extend(sub.nested);
                            out.opaque_ids.extend(sub.opaque_ids);
                        } else {
                            out.nested.insert(label, sub.into_field());
                        }
                    }
                }
            }
        }
    }
    walk.stack.remove(&address);
    walk.memo.insert(address, out.clone());
    Ok(out)
}
