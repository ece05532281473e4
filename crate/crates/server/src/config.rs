//! Plain key=value server configuration.

use thiserror::Error;

use veilbox_core::group::GroupParams;

use crate::store::StoreConfig;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {0}: expected key=value")]
    BadLine(usize),
    #[error("line {0}: unknown key {1:?}")]
    UnknownKey(usize, String),
    #[error("line {0}: bad value for {1}: {2}")]
    BadValue(usize, &'static str, String),
    #[error("unknown group {0:?} (expected test, modp768, or modp2048)")]
    UnknownGroup(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub listen: String,
    pub group: String,
    pub challenge_ttl_ms: u64,
    pub pending_creation_ttl_ms: u64,
    pub max_payload: usize,
    pub allow_wildcard_owner: bool,
    pub snapshot_path: Option<String>,
    pub snapshot_interval_ms: u64,
    pub key_file: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7007".to_string(),
            group: "modp2048".to_string(),
            challenge_ttl_ms: 30_000,
            pending_creation_ttl_ms: 300_000,
            max_payload: 64 * 1024,
            allow_wildcard_owner: false,
            snapshot_path: None,
            snapshot_interval_ms: 30_000,
            key_file: None,
        }
    }
}

impl ServerConfig {
    /// Parses `key=value` lines; `#` starts a comment, blank lines are
    /// skipped. Unknown keys are rejected so typos fail loudly.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(lineno))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &'static str| {
                ConfigError::BadValue(lineno, what, value.to_string())
            };
            match key {
                "listen" => cfg.listen = value.to_string(),
                "group" => cfg.group = value.to_string(),
                "challenge_ttl_ms" => {
                    cfg.challenge_ttl_ms = value.parse().map_err(|_| bad("challenge_ttl_ms"))?
                }
                "pending_creation_ttl_ms" => {
                    cfg.pending_creation_ttl_ms =
                        value.parse().map_err(|_| bad("pending_creation_ttl_ms"))?
                }
                "max_payload" => {
                    cfg.max_payload = value.parse().map_err(|_| bad("max_payload"))?
                }
                "allow_wildcard_owner" => {
                    cfg.allow_wildcard_owner =
                        value.parse().map_err(|_| bad("allow_wildcard_owner"))?
                }
                "snapshot_path" => cfg.snapshot_path = Some(value.to_string()),
                "snapshot_interval_ms" => {
                    cfg.snapshot_interval_ms =
                        value.parse().map_err(|_| bad("snapshot_interval_ms"))?
                }
                "key_file" => cfg.key_file = Some(value.to_string()),
                other => return Err(ConfigError::UnknownKey(lineno, other.to_string())),
            }
        }
        Ok(cfg)
    }

    pub fn store_config(&self) -> Result<StoreConfig, ConfigError> {
        let params = GroupParams::named(&self.group)
            .ok_or_else(|| ConfigError::UnknownGroup(self.group.clone()))?;
        let mut sc = StoreConfig::new(params);
        sc.challenge_ttl_ms = self.challenge_ttl_ms;
        sc.pending_creation_ttl_ms = self.pending_creation_ttl_ms;
        sc.max_payload = self.max_payload;
        sc.allow_wildcard_owner = self.allow_wildcard_owner;
        Ok(sc)
    }
}
