//! The mix directory: which mixes exist, their public keys, and their
//! wildcard-write inbox addresses. Distributed out of band as a JSON file.

use serde::{Deserialize, Serialize};

use veilbox_core::cipher::HybridPublicKey;
use veilbox_core::wire::AddressId;

use crate::transport::ClientError;

#[derive(Debug, Clone, PartialEq)]
pub struct MixEntry {
    pub public_key: HybridPublicKey,
    pub inboxes: Vec<AddressId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixDirectory {
    pub mixes: Vec<MixEntry>,
}

#[derive(Serialize, Deserialize)]
struct MixEntryDto {
    public_key: String,
    inboxes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MixDirectoryDto {
    version: u32,
    mixes: Vec<MixEntryDto>,
}

impl MixDirectory {
    pub fn to_json(&self) -> String {
        let dto = MixDirectoryDto {
            version: 1,
            mixes: self
                .mixes
                .iter()
                .map(|m| MixEntryDto {
                    public_key: m.public_key.to_hex(),
                    inboxes: m.inboxes.iter().map(|c| c.to_string()).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dto).expect("directory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClientError> {
        let dto: MixDirectoryDto = serde_json::from_str(text)
            .map_err(|e| ClientError::State(format!("bad mix directory: {e}")))?;
        if dto.version != 1 {
            return Err(ClientError::State(format!(
                "unsupported directory version {}",
                dto.version
            )));
        }
        let mut mixes = Vec::new();
        for m in dto.mixes {
            let public_key = HybridPublicKey::from_hex(&m.public_key)
                .map_err(|e| ClientError::State(format!("bad mix key: {e}")))?;
            let mut inboxes = Vec::new();
            for c in m.inboxes {
                inboxes.push(
                    c.parse().map_err(|e| ClientError::State(format!("bad inbox id: {e}")))?,
                );
            }
            mixes.push(MixEntry { public_key, inboxes });
        }
        Ok(Self { mixes })
    }

    /// Replaces or inserts the entry for `entry.public_key`.
    pub fn upsert(&mut self, entry: MixEntry) {
        match self.mixes.iter_mut().find(|m| m.public_key == entry.public_key) {
            Some(slot) => *slot = entry,
            None => self.mixes.push(entry),
        }
    }
}
