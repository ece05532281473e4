//! Client state: identity keypair, contacts with their claimed keys and
//! verification flags, owned addresses, chats, and profile state. The
//! whole keyring persists as a single file sealed under a
//! passphrase-derived key.

use std::collections::BTreeMap;

use pbkdf2::pbkdf2_hmac;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use veilbox_core::cipher::{self, ContentKey, HybridPublicKey, HybridSecretKey};
use veilbox_core::fingerprint;
use veilbox_core::group::{GroupParams, SecretExponent};
use veilbox_core::wire::AddressId;

use crate::engine::AddressSecrets;
use crate::osn::chat::ChatChannel;
use crate::osn::profile::{FieldKey, ProfileState};
use crate::osn::records::KeyId;
use crate::transport::ClientError;

const KEYRING_MAGIC: &[u8] = b"VBKR1";
const KDF_ROUNDS: u32 = 60_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub name: String,
    pub public_key: HybridPublicKey,
    pub key_id: String,
    pub inbox: Option<AddressId>,
    pub profile_root: Option<AddressId>,
    pub profile_keys_key: Option<(KeyId, ContentKey)>,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyring {
    pub name: String,
    pub group: String,
    pub secret: HybridSecretKey,
    pub contacts: BTreeMap<String, Contact>,
    /// Personal wildcard-write inbox for mix-delivered messages.
    pub inbox: Option<AddressSecrets>,
    pub inbox_cursor: u64,
    pub own_addresses: BTreeMap<String, AddressSecrets>,
    pub chats: BTreeMap<String, ChatChannel>,
    pub profile: Option<ProfileState>,
}

impl Keyring {
    pub fn create(name: &str, group: &str, rng: &mut dyn RngCore) -> Result<Self, ClientError> {
        let params = GroupParams::named(group)
            .ok_or_else(|| ClientError::State(format!("unknown group {group:?}")))?;
        let (secret, _) = cipher::hybrid_keygen(&params, rng);
        Ok(Self {
            name: name.to_string(),
            group: group.to_string(),
            secret,
            contacts: BTreeMap::new(),
            inbox: None,
            inbox_cursor: 0,
            own_addresses: BTreeMap::new(),
            chats: BTreeMap::new(),
            profile: None,
        })
    }

    pub fn params(&self) -> GroupParams {
        GroupParams::named(&self.group).expect("keyring group is always a shipped group")
    }

    pub fn public_key(&self) -> HybridPublicKey {
        self.secret.public(&self.params())
    }

    pub fn key_id(&self) -> String {
        format!("{}/enc", self.name)
    }

    /// The out-of-band contact bundle: addresses and keys another user
    /// needs to reach and resolve us.
    pub fn contact_blob(&self) -> ContactBlob {
        ContactBlob {
            name: self.name.clone(),
            group: self.group.clone(),
            key_id: self.key_id(),
            public_key: self.public_key(),
            inbox: self.inbox.as_ref().map(|a| a.c),
            profile_root: self.profile.as_ref().map(|p| p.root.c),
            profile_keys_key: self
                .profile
                .as_ref()
                .map(|p| (p.keys_key_id, p.keys_key().clone())),
        }
    }

    pub fn add_contact(&mut self, blob: &ContactBlob) -> Result<(), ClientError> {
        if blob.group != self.group {
            return Err(ClientError::State(format!(
                "contact uses group {:?}, we use {:?}",
                blob.group, self.group
            )));
        }
        self.contacts.insert(
            blob.name.clone(),
            Contact {
                name: blob.name.clone(),
                public_key: blob.public_key.clone(),
                key_id: blob.key_id.clone(),
                inbox: blob.inbox,
                profile_root: blob.profile_root,
                profile_keys_key: blob.profile_keys_key.clone(),
                verified: false,
            },
        );
        Ok(())
    }

    pub fn contact(&self, name: &str) -> Result<&Contact, ClientError> {
        self.contacts
            .get(name)
            .ok_or_else(|| ClientError::State(format!("unknown contact {name:?}")))
    }

    /// Fingerprint over the union of our identity key and the contact's
    /// claimed keys, sorted by key id. Both parties compute this; the
    /// strings are compared out of band.
    pub fn fingerprint_with(&self, contact_name: &str) -> Result<String, ClientError> {
        let params = self.params();
        let contact = self.contact(contact_name)?;
        let mut keys: Vec<(String, Vec<u8>)> =
            vec![(self.key_id(), self.public_key().to_fixed_bytes(&params))];
        keys.push((contact.key_id.clone(), contact.public_key.to_fixed_bytes(&params)));
        fingerprint::fingerprint(&keys)
            .map_err(|e| ClientError::State(format!("fingerprint failed: {e}")))
    }

    /// Marks the contact verified iff the word strings match. Returns the
    /// resulting flag.
    pub fn confirm_verification(
        &mut self,
        contact_name: &str,
        their_words: &str,
    ) -> Result<bool, ClientError> {
        let ours = self.fingerprint_with(contact_name)?;
        let verified = ours == their_words;
        if let Some(c) = self.contacts.get_mut(contact_name) {
            c.verified = verified;
        }
        Ok(verified)
    }

    pub fn save(&self, path: &std::path::Path, passphrase: &str) -> Result<(), ClientError> {
        let mut rng = rand::rngs::OsRng;
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let key = derive_key(passphrase, &salt);
        let plaintext = serde_json::to_vec(&KeyringDto::from(self)).expect("keyring serializes");
        let sealed = cipher::seal(&key, &plaintext, &mut rng);
        let mut out = Vec::with_capacity(KEYRING_MAGIC.len() + salt.len() + sealed.len());
        out.extend_from_slice(KEYRING_MAGIC);
        out.extend_from_slice(&salt);
        out.extend_from_slice(&sealed);
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, passphrase: &str) -> Result<Self, ClientError> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < KEYRING_MAGIC.len() + 16 || &bytes[..KEYRING_MAGIC.len()] != KEYRING_MAGIC
        {
            return Err(ClientError::State("not a keyring file".into()));
        }
        let (salt, sealed) = bytes[KEYRING_MAGIC.len()..].split_at(16);
        let key = derive_key(passphrase, salt);
        let plaintext = cipher::open(&key, sealed)
            .map_err(|_| ClientError::State("wrong passphrase or corrupt keyring".into()))?;
        let dto: KeyringDto = serde_json::from_slice(&plaintext)
            .map_err(|e| ClientError::State(format!("corrupt keyring: {e}")))?;
        dto.try_into()
    }
}

fn derive_key(passphrase: &str, salt: &[u8]) -> ContentKey {
    let mut out = [0u8; 32];
    pbkdf2_hmac::<Sha256>(passphrase.as_bytes(), salt, KDF_ROUNDS, &mut out);
    ContentKey::from_bytes(out)
}

/// The out-of-band contact exchange bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactBlob {
    pub name: String,
    pub group: String,
    pub key_id: String,
    pub public_key: HybridPublicKey,
    pub inbox: Option<AddressId>,
    pub profile_root: Option<AddressId>,
    pub profile_keys_key: Option<(KeyId, ContentKey)>,
}

impl ContactBlob {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ContactBlobDto::from(self)).expect("blob serializes")
    }

    /// Single-line form suitable for QR payloads.
    pub fn to_qr_text(&self) -> String {
        serde_json::to_string(&ContactBlobDto::from(self)).expect("blob serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClientError> {
        let dto: ContactBlobDto = serde_json::from_str(text)
            .map_err(|e| ClientError::State(format!("bad contact blob: {e}")))?;
        dto.try_into()
    }
}

// ---------------------------------------------------------------------
// Serde mirrors. Domain types stay serde-free; everything crossing disk
// goes through these DTOs in hex/string form.

#[derive(Serialize, Deserialize)]
struct ContactBlobDto {
    name: String,
    group: String,
    key_id: String,
    public_key: String,
    inbox: Option<String>,
    profile_root: Option<String>,
    profile_keys_key: Option<(KeyId, String)>,
}

impl From<&ContactBlob> for ContactBlobDto {
    fn from(b: &ContactBlob) -> Self {
        Self {
            name: b.name.clone(),
            group: b.group.clone(),
            key_id: b.key_id.clone(),
            public_key: b.public_key.to_hex(),
            inbox: b.inbox.map(|c| c.to_string()),
            profile_root: b.profile_root.map(|c| c.to_string()),
            profile_keys_key: b.profile_keys_key.as_ref().map(|(id, k)| (*id, k.to_hex())),
        }
    }
}

impl TryFrom<ContactBlobDto> for ContactBlob {
    type Error = ClientError;
    fn try_from(dto: ContactBlobDto) -> Result<Self, ClientError> {
        Ok(Self {
            name: dto.name,
            group: dto.group,
            key_id: dto.key_id,
            public_key: HybridPublicKey::from_hex(&dto.public_key)?,
            inbox: parse_opt_addr(dto.inbox)?,
            profile_root: parse_opt_addr(dto.profile_root)?,
            profile_keys_key: match dto.profile_keys_key {
                Some((id, hex)) => Some((id, ContentKey::from_hex(&hex)?)),
                None => None,
            },
        })
    }
}

fn parse_opt_addr(s: Option<String>) -> Result<Option<AddressId>, ClientError> {
    s.map(|s| s.parse().map_err(|e| ClientError::State(format!("bad address: {e}"))))
        .transpose()
}

#[derive(Serialize, Deserialize)]
struct AddressSecretsDto {
    c: String,
    read: String,
    write: String,
    own: String,
}

#[derive(Serialize, Deserialize)]
struct ContactDto {
    name: String,
    public_key: String,
    key_id: String,
    inbox: Option<String>,
    profile_root: Option<String>,
    profile_keys_key: Option<(KeyId, String)>,
    verified: bool,
}

#[derive(Serialize, Deserialize)]
struct ChatDto {
    label: String,
    address: String,
    read: String,
    write: String,
    own: Option<String>,
    generation: u32,
    keys: BTreeMap<u32, String>,
    members: Vec<String>,
    cursor: u64,
    envelope_size: usize,
}

#[derive(Serialize, Deserialize)]
struct FieldKeyDto {
    key: String,
    labels: Vec<String>,
    grantees: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ProfileDto {
    root: AddressSecretsDto,
    directory: AddressSecretsDto,
    keys_key_id: KeyId,
    field_keys: BTreeMap<KeyId, FieldKeyDto>,
    groups: BTreeMap<String, KeyId>,
    fields: BTreeMap<String, AddressSecretsDto>,
}

#[derive(Serialize, Deserialize)]
struct KeyringDto {
    version: u32,
    name: String,
    group: String,
    secret: String,
    contacts: BTreeMap<String, ContactDto>,
    inbox: Option<AddressSecretsDto>,
    inbox_cursor: u64,
    own_addresses: BTreeMap<String, AddressSecretsDto>,
    chats: BTreeMap<String, ChatDto>,
    profile: Option<ProfileDto>,
}

fn addr_to_dto(a: &AddressSecrets) -> AddressSecretsDto {
    AddressSecretsDto {
        c: a.c.to_string(),
        read: a.read.to_hex(),
        write: a.write.to_hex(),
        own: a.own.to_hex(),
    }
}

fn addr_from_dto(params: &GroupParams, d: &AddressSecretsDto) -> Result<AddressSecrets, ClientError> {
    Ok(AddressSecrets {
        c: d.c.parse().map_err(|e| ClientError::State(format!("bad address: {e}")))?,
        read: SecretExponent::from_hex(params, &d.read)?,
        write: SecretExponent::from_hex(params, &d.write)?,
        own: SecretExponent::from_hex(params, &d.own)?,
    })
}

impl From<&Keyring> for KeyringDto {
    fn from(k: &Keyring) -> Self {
        Self {
            version: 1,
            name: k.name.clone(),
            group: k.group.clone(),
            secret: k.secret.to_hex(),
            contacts: k
                .contacts
                .iter()
                .map(|(n, c)| {
                    (
                        n.clone(),
                        ContactDto {
                            name: c.name.clone(),
                            public_key: c.public_key.to_hex(),
                            key_id: c.key_id.clone(),
                            inbox: c.inbox.map(|a| a.to_string()),
                            profile_root: c.profile_root.map(|a| a.to_string()),
                            profile_keys_key: c
                                .profile_keys_key
                                .as_ref()
                                .map(|(id, key)| (*id, key.to_hex())),
                            verified: c.verified,
                        },
                    )
                })
                .collect(),
            inbox: k.inbox.as_ref().map(addr_to_dto),
            inbox_cursor: k.inbox_cursor,
            own_addresses: k.own_addresses.iter().map(|(n, a)| (n.clone(), addr_to_dto(a))).collect(),
            chats: k
                .chats
                .iter()
                .map(|(n, c)| {
                    (
                        n.clone(),
                        ChatDto {
                            label: c.label.clone(),
                            address: c.address.to_string(),
                            read: c.read.to_hex(),
                            write: c.write.to_hex(),
                            own: c.own.as_ref().map(|s| s.to_hex()),
                            generation: c.generation,
                            keys: c.keys.iter().map(|(g, key)| (*g, key.to_hex())).collect(),
                            members: c.members.clone(),
                            cursor: c.cursor,
                            envelope_size: c.envelope_size,
                        },
                    )
                })
                .collect(),
            profile: k.profile.as_ref().map(|p| ProfileDto {
                root: addr_to_dto(&p.root),
                directory: addr_to_dto(&p.directory),
                keys_key_id: p.keys_key_id,
                field_keys: p
                    .field_keys
                    .iter()
                    .map(|(id, fk)| {
                        (
                            *id,
                            FieldKeyDto {
                                key: fk.key.to_hex(),
                                labels: fk.labels.clone(),
                                grantees: fk.grantees.iter().map(|g| g.to_hex()).collect(),
                            },
                        )
                    })
                    .collect(),
                groups: p.groups.clone(),
                fields: p.fields.iter().map(|(l, a)| (l.clone(), addr_to_dto(a))).collect(),
            }),
        }
    }
}

impl TryFrom<KeyringDto> for Keyring {
    type Error = ClientError;

    fn try_from(dto: KeyringDto) -> Result<Self, ClientError> {
        if dto.version != 1 {
            return Err(ClientError::State(format!("unsupported keyring version {}", dto.version)));
        }
        let params = GroupParams::named(&dto.group)
            .ok_or_else(|| ClientError::State(format!("unknown group {:?}", dto.group)))?;
        let mut contacts = BTreeMap::new();
        for (n, c) in dto.contacts {
            contacts.insert(
                n,
                Contact {
                    name: c.name,
                    public_key: HybridPublicKey::from_hex(&c.public_key)?,
                    key_id: c.key_id,
                    inbox: parse_opt_addr(c.inbox)?,
                    profile_root: parse_opt_addr(c.profile_root)?,
                    profile_keys_key: match c.profile_keys_key {
                        Some((id, hex)) => Some((id, ContentKey::from_hex(&hex)?)),
                        None => None,
                    },
                    verified: c.verified,
                },
            );
        }
        let mut chats = BTreeMap::new();
        for (n, c) in dto.chats {
            let mut keys = BTreeMap::new();
            for (g, hex) in c.keys {
                keys.insert(g, ContentKey::from_hex(&hex)?);
            }
            chats.insert(
                n,
                ChatChannel {
                    label: c.label,
                    address: c
                        .address
                        .parse()
                        .map_err(|e| ClientError::State(format!("bad chat address: {e}")))?,
                    read: SecretExponent::from_hex(&params, &c.read)?,
                    write: SecretExponent::from_hex(&params, &c.write)?,
                    own: c.own.map(|s| SecretExponent::from_hex(&params, &s)).transpose()?,
                    generation: c.generation,
                    keys,
                    members: c.members,
                    cursor: c.cursor,
                    envelope_size: c.envelope_size,
                },
            );
        }
        let profile = match dto.profile {
            None => None,
            Some(p) => {
                let mut field_keys = BTreeMap::new();
                for (id, fk) in p.field_keys {
                    let mut grantees = Vec::new();
                    for g in fk.grantees {
                        grantees.push(HybridPublicKey::from_hex(&g)?);
                    }
                    field_keys.insert(
                        id,
                        FieldKey { key: ContentKey::from_hex(&fk.key)?, labels: fk.labels, grantees },
                    );
                }
                let mut fields = BTreeMap::new();
                for (l, a) in p.fields {
                    fields.insert(l, addr_from_dto(&params, &a)?);
                }
                Some(ProfileState {
                    root: addr_from_dto(&params, &p.root)?,
                    directory: addr_from_dto(&params, &p.directory)?,
                    keys_key_id: p.keys_key_id,
                    field_keys,
                    groups: p.groups,
                    fields,
                })
            }
        };
        let mut own_addresses = BTreeMap::new();
        for (n, a) in dto.own_addresses {
            own_addresses.insert(n, addr_from_dto(&params, &a)?);
        }
        Ok(Self {
            name: dto.name,
            group: dto.group,
            secret: HybridSecretKey::from_hex(&dto.secret)?,
            contacts,
            inbox: dto.inbox.map(|a| addr_from_dto(&params, &a)).transpose()?,
            inbox_cursor: dto.inbox_cursor,
            own_addresses,
            chats,
            profile,
        })
    }
}
