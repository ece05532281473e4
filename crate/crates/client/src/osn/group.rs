//! Groups: a root collection of linked section addresses, mirrored from
//! the profile construction, with per-section keys and admin-only write
//! control on some sections.

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use veilbox_core::cipher::{self, ContentKey, HybridPublicKey, HybridSecretKey};
use veilbox_core::group::SecretExponent;
use veilbox_core::sig;
use veilbox_core::wire::AddressId;

use crate::engine::{AddressSecrets, KeyChoice, Session};
use crate::osn::records::{KeyId, SealedPayload, StoredRecord};
use crate::transport::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupRole {
    Admin,
    Member,
}

#[derive(Debug, Clone)]
pub struct SectionSpec {
    pub name: String,
    /// Only admins may write; members read.
    pub admin_only: bool,
}

/// Founder-side group state.
#[derive(Debug, Clone)]
pub struct OsnGroup {
    pub root: AddressSecrets,
    pub root_key_id: KeyId,
    pub root_key: ContentKey,
    pub sections: BTreeMap<String, GroupSection>,
}

#[derive(Debug, Clone)]
pub struct GroupSection {
    pub name: String,
    pub secrets: AddressSecrets,
    pub key_id: KeyId,
    pub key: ContentKey,
    pub admin_only: bool,
}

/// Per-member credentials, hybrid-sealed into the invite. Admin invites
/// carry write secrets for admin-only sections; member invites do not.
#[derive(Debug, Serialize, Deserialize)]
pub struct GroupCredentials {
    pub role: String,
    pub root: String,
    pub root_read: String,
    pub root_key_id: KeyId,
    pub root_key: String,
    pub sections: Vec<SectionCredentials>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SectionCredentials {
    pub name: String,
    pub address: String,
    pub read: String,
    pub write: Option<String>,
    pub key_id: KeyId,
    pub key: String,
    pub admin_only: bool,
}

fn fresh_key_id(rng: &mut dyn RngCore) -> KeyId {
    rng.next_u32()
}

/// Creates the root and all section addresses, links the sections from
/// the root, and returns invites for every admin and member.
pub fn create_group(
    session: &mut Session<'_>,
    sections: &[SectionSpec],
    admins: &[(String, HybridPublicKey)],
    members: &[(String, HybridPublicKey)],
    rng: &mut dyn RngCore,
) -> Result<(OsnGroup, Vec<(String, Vec<u8>)>), ClientError> {
    let root = session.create_address(KeyChoice::Gated, KeyChoice::Gated, KeyChoice::Gated, rng)?;
    let root_key_id = fresh_key_id(rng);
    let root_key = ContentKey::generate(rng);

    let mut group = OsnGroup { root, root_key_id, root_key, sections: BTreeMap::new() };
    for spec in sections {
        let secrets =
            session.create_address(KeyChoice::Gated, KeyChoice::Gated, KeyChoice::Gated, rng)?;
        let section = GroupSection {
            name: spec.name.clone(),
            secrets,
            key_id: fresh_key_id(rng),
            key: ContentKey::generate(rng),
            admin_only: spec.admin_only,
        };
        let link = SealedPayload::link(
            &spec.name,
            section.secrets.c,
            section.secrets.read_secret(),
            section.key_id,
        );
        session.write_raw(
            group.root.c,
            group.root.write_secret(),
            link.seal_tagged(group.root_key_id, &group.root_key, rng).to_bytes(),
        )?;
        group.sections.insert(spec.name.clone(), section);
    }

    let mut invites = Vec::new();
    for (name, pk) in admins {
        invites.push((name.clone(), invite(session, &group, GroupRole::Admin, pk, rng)));
    }
    for (name, pk) in members {
        invites.push((name.clone(), invite(session, &group, GroupRole::Member, pk, rng)));
    }
    Ok((group, invites))
}

fn invite(
    session: &Session<'_>,
    group: &OsnGroup,
    role: GroupRole,
    recipient: &HybridPublicKey,
    rng: &mut dyn RngCore,
) -> Vec<u8> {
    let creds = GroupCredentials {
        role: match role {
            GroupRole::Admin => "admin".into(),
            GroupRole::Member => "member".into(),
        },
        root: group.root.c.to_string(),
        root_read: group.root.read.to_hex(),
        root_key_id: group.root_key_id,
        root_key: group.root_key.to_hex(),
        sections: group
            .sections
            .values()
            .map(|s| SectionCredentials {
                name: s.name.clone(),
                address: s.secrets.c.to_string(),
                read: s.secrets.read.to_hex(),
                write: match (role, s.admin_only) {
                    (GroupRole::Member, true) => None,
                    _ => Some(s.secrets.write.to_hex()),
                },
                key_id: s.key_id,
                key: s.key.to_hex(),
                admin_only: s.admin_only,
            })
            .collect(),
    };
    let pt = serde_json::to_vec(&creds).expect("credentials serialize");
    cipher::hybrid_seal(session.params(), recipient, &pt, rng)
}

pub fn accept_group_invite(
    session: &Session<'_>,
    own_secret: &HybridSecretKey,
    blob: &[u8],
) -> Result<GroupCredentials, ClientError> {
    let pt = cipher::hybrid_open(session.params(), own_secret, blob)?;
    serde_json::from_slice(&pt).map_err(|e| ClientError::State(format!("bad group invite: {e}")))
}

impl GroupCredentials {
    pub fn section(&self, name: &str) -> Option<&SectionCredentials> {
        self.sections.iter().find(|s| s.name == name)
    }
}

impl SectionCredentials {
    pub fn address_id(&self) -> Result<AddressId, ClientError> {
        self.address.parse().map_err(|e| ClientError::State(format!("bad section address: {e}")))
    }

    pub fn read_secret(
        &self,
        params: &veilbox_core::group::GroupParams,
    ) -> Result<Option<SecretExponent>, ClientError> {
        let s = SecretExponent::from_hex(params, &self.read)?;
        Ok((!s.is_wildcard()).then_some(s))
    }

    pub fn write_secret(
        &self,
        params: &veilbox_core::group::GroupParams,
    ) -> Result<Option<SecretExponent>, ClientError> {
        match &self.write {
            Some(hex) => {
                let s = SecretExponent::from_hex(params, hex)?;
                Ok((!s.is_wildcard()).then_some(s))
            }
            None => Ok(None),
        }
    }

    pub fn content_key(&self) -> Result<ContentKey, ClientError> {
        Ok(ContentKey::from_hex(&self.key)?)
    }
}

/// Posts into a section using invite credentials.
pub fn post_to_section(
    session: &mut Session<'_>,
    creds: &SectionCredentials,
    text: &str,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let params = session.params().clone();
    let write = creds.write_secret(&params)?;
    if write.is_none() && creds.admin_only {
        return Err(ClientError::State(format!(
            "no write credential for admin-only section {:?}",
            creds.name
        )));
    }
    let record = SealedPayload::Post { text: text.to_string() }
        .seal_tagged(creds.key_id, &creds.content_key()?, rng);
    session.write_raw(creds.address_id()?, write.as_ref(), record.to_bytes())
}

/// Reads all posts of a section.
pub fn read_section(
    session: &mut Session<'_>,
    creds: &SectionCredentials,
) -> Result<Vec<String>, ClientError> {
    let params = session.params().clone();
    let read = creds.read_secret(&params)?;
    let key = creds.content_key()?;
    let (payloads, _) = session.read_raw(creds.address_id()?, read.as_ref(), 0)?;
    let mut posts = Vec::new();
    for payload in &payloads {
        let Ok(StoredRecord::Sealed { ct, .. }) = StoredRecord::from_bytes(payload) else {
            continue;
        };
        if let Some(SealedPayload::Post { text }) = SealedPayload::open(&key, &ct) {
            posts.push(text);
        }
    }
    Ok(posts)
}

/// Publishes a signed roster entry: a member choosing to be visible
/// inside the group. Lurkers simply never call this.
pub fn join_roster(
    session: &mut Session<'_>,
    roster: &SectionCredentials,
    name: &str,
    identity_secret: &HybridSecretKey,
    profile_root: Option<AddressId>,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let params = session.params().clone();
    let public_key = identity_secret.public(&params);
    let mut message = Vec::new();
    message.extend_from_slice(roster.address.as_bytes());
    message.extend_from_slice(name.as_bytes());
    message.extend_from_slice(public_key.to_hex().as_bytes());
    let signature = sig::sign(&params, identity_secret, &message, rng);
    let record = StoredRecord::Roster {
        name: name.to_string(),
        public_key: public_key.to_hex(),
        profile_root: profile_root.map(|c| c.to_string()),
        sig: signature.to_hex(),
    };
    let write = roster.write_secret(&params)?;
    session.write_raw(roster.address_id()?, write.as_ref(), record.to_bytes())
}

/// Verifies every roster entry's signature and returns the valid ones.
pub fn read_roster(
    session: &mut Session<'_>,
    roster: &SectionCredentials,
) -> Result<Vec<(String, HybridPublicKey)>, ClientError> {
    let params = session.params().clone();
    let read = roster.read_secret(&params)?;
    let (payloads, _) = session.read_raw(roster.address_id()?, read.as_ref(), 0)?;
    let mut entries = Vec::new();
    for payload in &payloads {
        let Ok(StoredRecord::Roster { name, public_key, sig: sig_hex, .. }) =
            StoredRecord::from_bytes(payload)
        else {
            continue;
        };
        let Ok(pk) = HybridPublicKey::from_hex(&public_key) else { continue };
        let Ok(signature) = sig::Signature::from_hex(&sig_hex) else { continue };
        let mut message = Vec::new();
        message.extend_from_slice(roster.address.as_bytes());
        message.extend_from_slice(name.as_bytes());
        message.extend_from_slice(public_key.as_bytes());
        if sig::verify(&params, &pk, &message, &signature) {
            entries.push((name, pk));
        }
    }
    Ok(entries)
}
