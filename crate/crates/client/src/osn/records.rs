//! Stored-record schemas for profile, feed, and group addresses. Records
//! are JSON, one per stored message. Sealed records expose only a random
//! 32-bit key id; everything else lives inside the ciphertext.

use serde::{Deserialize, Serialize};

use veilbox_core::cipher::{self, ContentKey};
use veilbox_core::group::SecretExponent;
use veilbox_core::wire::AddressId;

use crate::transport::ClientError;

/// Random non-sequential tag identifying a content key.
pub type KeyId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredRecord {
    /// A deliberately public entry.
    Plain { label: String, value: String },
    /// Content sealed under the content key tagged `key_id`.
    Sealed { key_id: KeyId, ct: String },
    /// A per-reader key wrapping (key directory entries).
    Wrap { ct: String },
    /// A voluntary signed membership entry.
    Roster { name: String, public_key: String, profile_root: Option<String>, sig: String },
}

impl StoredRecord {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("records serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ClientError> {
        serde_json::from_slice(bytes)
            .map_err(|e| ClientError::State(format!("bad stored record: {e}")))
    }
}

/// Plaintext of a [`StoredRecord::Sealed`] ciphertext.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case")]
pub enum SealedPayload {
    /// A labeled scalar value.
    Text { label: String, value: String },
    /// One post in a feed or field.
    Post { text: String },
    /// A link to another concealed address. `key_id` names the content
    /// key of the target; an empty label merges the target into the
    /// linking section.
    Link {
        label: String,
        target: String,
        read_secret: Option<String>,
        key_id: KeyId,
    },
}

impl SealedPayload {
    pub fn link(
        label: &str,
        target: AddressId,
        read_secret: Option<&SecretExponent>,
        key_id: KeyId,
    ) -> Self {
        SealedPayload::Link {
            label: label.to_string(),
            target: target.to_string(),
            read_secret: read_secret.map(|s| s.to_hex()),
            key_id,
        }
    }

    pub fn seal_tagged(
        &self,
        key_id: KeyId,
        key: &ContentKey,
        rng: &mut dyn rand::RngCore,
    ) -> StoredRecord {
        let pt = serde_json::to_vec(self).expect("payload serializes");
        StoredRecord::Sealed { key_id, ct: hex::encode(cipher::seal(key, &pt, rng)) }
    }

    pub fn open(key: &ContentKey, ct_hex: &str) -> Option<Self> {
        let ct = hex::decode(ct_hex).ok()?;
        let pt = cipher::open(key, &ct).ok()?;
        serde_json::from_slice(&pt).ok()
    }
}

/// Plaintext of a [`StoredRecord::Wrap`] ciphertext: one granted content
/// key, hybrid-sealed to a single reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrapPayload {
    pub key_id: KeyId,
    pub key: String,
    /// The field address this key primarily guards, when there is one.
    pub address: Option<String>,
    pub read_secret: Option<String>,
}

impl WrapPayload {
    pub fn content_key(&self) -> Result<ContentKey, ClientError> {
        Ok(ContentKey::from_hex(&self.key)?)
    }
}
