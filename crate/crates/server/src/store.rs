//! The concealed-address store.
//!
//! State is exactly a table of `(c, p_R, p_W, p_O, messages)` records plus
//! short-lived challenge sessions and pending creations. The store never
//! records who asked for what: handlers take the decoded frame and the
//! current time, and report what changed through [`StoreDelta`] values the
//! caller may log or drop.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::RngCore;
use thiserror::Error;

use veilbox_core::cipher::{self, ContentKey, HybridPublicKey, HybridSecretKey};
use veilbox_core::group::{self, AddressKeyPublic, GroupParams};
use veilbox_core::wire::{
    AddressId, ClientFrame, CreationGrant, ErrorCode, ServerFrame, SessionId,
};

/// Milliseconds since an arbitrary epoch; the store only compares values.
pub type Timestamp = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreConfig {
    pub params: GroupParams,
    /// Challenge sessions expire this long after issue.
    pub challenge_ttl_ms: u64,
    /// Unfinished creations expire this long after the CREATE.
    pub pending_creation_ttl_ms: u64,
    /// Maximum accepted WriteAddress payload.
    pub max_payload: usize,
    /// Whether UpdateAddress may install a wildcard owner key. Off by
    /// default: an ownerless address could never be rekeyed.
    pub allow_wildcard_owner: bool,
}

impl StoreConfig {
    pub fn new(params: GroupParams) -> Self {
        Self {
            params,
            challenge_ttl_ms: 30_000,
            pending_creation_ttl_ms: 300_000,
            max_payload: 64 * 1024,
            allow_wildcard_owner: false,
        }
    }
}

/// Expired sessions linger this many TTLs so a late answer still gets
/// `CHALLENGE_EXPIRED` rather than `UNKNOWN_SESSION`.
const SESSION_TOMBSTONE_TTLS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Permission {
    Read,
    Write,
    Own,
}

/// One stored concealed address.
#[derive(Debug, Clone)]
struct AddressRecord {
    read: AddressKeyPublic,
    write: AddressKeyPublic,
    own: AddressKeyPublic,
    next_seq: u64,
    messages: Vec<(u64, Vec<u8>)>,
}

/// The privileged frame a challenge session is bound to. Executed once on
/// a correct answer, discarded on anything else.
#[derive(Debug, Clone)]
enum PendingFrame {
    Update { p_r: AddressKeyPublic, p_w: AddressKeyPublic, p_o: AddressKeyPublic },
    Read { cursor: u64 },
    Write { payload: Vec<u8> },
    Truncate { upto: u64 },
}

#[derive(Debug)]
struct ChallengeSession {
    c: AddressId,
    permission: Permission,
    pending: PendingFrame,
    expected: BigUint,
    expires_at: Timestamp,
}

#[derive(Debug)]
struct PendingCreation {
    session_key: ContentKey,
    r: BigUint,
    w: BigUint,
    o: BigUint,
    expires_at: Timestamp,
}

/// What a handled frame changed, from the server's own point of view.
/// This is exactly the information a malicious operator could log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StoreDelta {
    PendingCreated { c: AddressId },
    AddressCommitted { c: AddressId },
    KeysUpdated { c: AddressId },
    MessageAppended { c: AddressId, seq: u64, len: usize },
    MessagesServed { c: AddressId, from: u64, count: usize },
    Truncated { c: AddressId, upto: u64, removed: usize },
    ChallengeIssued { c: AddressId, session: SessionId, permission: Permission },
    ChallengeAnswered { session: SessionId, ok: bool },
    Rejected { code: ErrorCode },
}

/// Snapshot of one record's externally observable state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordView {
    pub read: AddressKeyPublic,
    pub write: AddressKeyPublic,
    pub own: AddressKeyPublic,
    pub next_seq: u64,
    pub messages: Vec<(u64, Vec<u8>)>,
}

#[derive(Debug, Error)]
pub enum RestoreError {
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("snapshot group does not match configured group")]
    GroupMismatch,
}

pub struct AddressStore {
    config: StoreConfig,
    secret: HybridSecretKey,
    public: HybridPublicKey,
    records: BTreeMap<AddressId, AddressRecord>,
    pending: BTreeMap<AddressId, PendingCreation>,
    sessions: BTreeMap<SessionId, ChallengeSession>,
    rng: Box<dyn RngCore + Send>,
}

impl AddressStore {
    pub fn new(config: StoreConfig, secret: HybridSecretKey, rng: Box<dyn RngCore + Send>) -> Self {
        let public = secret.public(&config.params);
        Self {
            config,
            secret,
            public,
            records: BTreeMap::new(),
            pending: BTreeMap::new(),
            sessions: BTreeMap::new(),
            rng,
        }
    }

    /// Convenience constructor that draws the server keypair from `rng`.
    pub fn with_fresh_key(config: StoreConfig, mut rng: Box<dyn RngCore + Send>) -> Self {
        let (secret, _) = cipher::hybrid_keygen(&config.params, rng.as_mut());
        Self::new(config, secret, rng)
    }

    pub fn params(&self) -> &GroupParams {
        &self.config.params
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    /// Public half of the server keypair; clients seal CREATE hellos to it.
    pub fn server_public_key(&self) -> &HybridPublicKey {
        &self.public
    }

    pub fn address_count(&self) -> usize {
        self.records.len()
    }

    /// Read-only view of one record, for audits and tests.
    pub fn record_view(&self, c: &AddressId) -> Option<RecordView> {
        self.records.get(c).map(|rec| RecordView {
            read: rec.read.clone(),
            write: rec.write.clone(),
            own: rec.own.clone(),
            next_seq: rec.next_seq,
            messages: rec.messages.clone(),
        })
    }

    /// Handles one decoded frame at the given time. Always produces
    /// exactly one response frame plus the deltas it caused.
    pub fn handle_at(
        &mut self,
        now: Timestamp,
        frame: &ClientFrame,
    ) -> (ServerFrame, Vec<StoreDelta>) {
        self.sweep(now);
        match frame {
            ClientFrame::CreateAddress { hello } => self.handle_create(now, hello),
            ClientFrame::UpdateAddress { c, p_r, p_w, p_o } => {
                self.handle_update(now, *c, p_r.clone(), p_w.clone(), p_o.clone())
            }
            ClientFrame::ReadAddress { c, cursor } => self.handle_read(now, *c, *cursor),
            ClientFrame::WriteAddress { c, payload } => {
                self.handle_write(now, *c, payload.clone())
            }
            ClientFrame::TruncateAddress { c, upto } => self.handle_truncate(now, *c, *upto),
            ClientFrame::ChallengeAnswer { session, value } => {
                self.handle_answer(now, *session, value)
            }
        }
    }

    fn sweep(&mut self, now: Timestamp) {
        self.pending.retain(|_, p| p.expires_at > now);
        let grace = self.config.challenge_ttl_ms.saturating_mul(SESSION_TOMBSTONE_TTLS);
        self.sessions.retain(|_, s| s.expires_at.saturating_add(grace) > now);
    }

    fn error(code: ErrorCode, detail: &str) -> (ServerFrame, Vec<StoreDelta>) {
        (
            ServerFrame::Error { code, detail: detail.to_string() },
            vec![StoreDelta::Rejected { code }],
        )
    }

    fn fresh_address_id(&mut self) -> AddressId {
        // Collisions in a 128-bit space are retried, never surfaced.
        loop {
            let mut bytes = [0u8; 16];
            self.rng.fill_bytes(&mut bytes);
            let c = AddressId(bytes);
            if !self.records.contains_key(&c) && !self.pending.contains_key(&c) {
                return c;
            }
        }
    }

    fn fresh_session_id(&mut self) -> SessionId {
        loop {
            let mut bytes = [0u8; 16];
            self.rng.fill_bytes(&mut bytes);
            let id = SessionId(bytes);
            if !self.sessions.contains_key(&id) {
                return id;
            }
        }
    }

    fn handle_create(&mut self, now: Timestamp, hello: &[u8]) -> (ServerFrame, Vec<StoreDelta>) {
        let key_bytes = match cipher::hybrid_open(&self.config.params, &self.secret, hello) {
            Ok(b) => b,
            Err(_) => return Self::error(ErrorCode::BadRequest, "undecryptable hello"),
        };
        let Ok(arr) = <[u8; 32]>::try_from(key_bytes.as_slice()) else {
            return Self::error(ErrorCode::BadRequest, "session key must be 32 bytes");
        };
        let session_key = ContentKey::from_bytes(arr);

        let c = self.fresh_address_id();
        let r = self.config.params.random_exponent(self.rng.as_mut());
        let w = self.config.params.random_exponent(self.rng.as_mut());
        let o = self.config.params.random_exponent(self.rng.as_mut());
        let grant = CreationGrant { c, r: r.clone(), w: w.clone(), o: o.clone() };
        let blob = cipher::seal(&session_key, &grant.to_bytes(), self.rng.as_mut());

        self.pending.insert(
            c,
            PendingCreation {
                session_key,
                r,
                w,
                o,
                expires_at: now + self.config.pending_creation_ttl_ms,
            },
        );
        (ServerFrame::CreatedBlob { blob }, vec![StoreDelta::PendingCreated { c }])
    }

    fn validate_key(&self, key: &AddressKeyPublic) -> Result<(), &'static str> {
        match key {
            AddressKeyPublic::Wildcard => Ok(()),
            AddressKeyPublic::Element(e) => {
                if self.config.params.in_subgroup(e) && *e != BigUint::from(1u32) {
                    Ok(())
                } else {
                    Err("key element outside the group")
                }
            }
        }
    }

    fn handle_update(
        &mut self,
        now: Timestamp,
        c: AddressId,
        p_r: AddressKeyPublic,
        p_w: AddressKeyPublic,
        p_o: AddressKeyPublic,
    ) -> (ServerFrame, Vec<StoreDelta>) {
        for key in [&p_r, &p_w, &p_o] {
            if let Err(msg) = self.validate_key(key) {
                return Self::error(ErrorCode::BadRequest, msg);
            }
        }
        if p_o.is_wildcard() && !self.config.allow_wildcard_owner {
            return Self::error(
                ErrorCode::WildcardForbidden,
                "wildcard owner keys are disabled",
            );
        }
        let owner_key = if let Some(p) = self.pending.get(&c) {
            AddressKeyPublic::Element(self.config.params.generator_pow(&p.o))
        } else if let Some(rec) = self.records.get(&c) {
            rec.own.clone()
        } else {
            return Self::error(ErrorCode::NoSuchAddress, "");
        };
        let pending = PendingFrame::Update { p_r, p_w, p_o };
        if owner_key.is_wildcard() {
            let delta = self.execute(now, c, pending);
            return delta;
        }
        self.issue_challenge(now, c, Permission::Own, &owner_key, pending)
    }

    fn handle_read(
        &mut self,
        now: Timestamp,
        c: AddressId,
        cursor: u64,
    ) -> (ServerFrame, Vec<StoreDelta>) {
        let Some(rec) = self.records.get(&c) else {
            return Self::error(ErrorCode::NoSuchAddress, "");
        };
        let read_key = rec.read.clone();
        let pending = PendingFrame::Read { cursor };
        if read_key.is_wildcard() {
            return self.execute(now, c, pending);
        }
        self.issue_challenge(now, c, Permission::Read, &read_key, pending)
    }

    fn handle_write(
        &mut self,
        now: Timestamp,
        c: AddressId,
        payload: Vec<u8>,
    ) -> (ServerFrame, Vec<StoreDelta>) {
        if payload.len() > self.config.max_payload {
            return Self::error(ErrorCode::TooLarge, "payload over limit");
        }
        let Some(rec) = self.records.get(&c) else {
            return Self::error(ErrorCode::NoSuchAddress, "");
        };
        let write_key = rec.write.clone();
        let pending = PendingFrame::Write { payload };
        if write_key.is_wildcard() {
            return self.execute(now, c, pending);
        }
        self.issue_challenge(now, c, Permission::Write, &write_key, pending)
    }

    fn handle_truncate(
        &mut self,
        now: Timestamp,
        c: AddressId,
        upto: u64,
    ) -> (ServerFrame, Vec<StoreDelta>) {
        let Some(rec) = self.records.get(&c) else {
            return Self::error(ErrorCode::NoSuchAddress, "");
        };
        let owner_key = rec.own.clone();
        let pending = PendingFrame::Truncate { upto };
        if owner_key.is_wildcard() {
            return self.execute(now, c, pending);
        }
        self.issue_challenge(now, c, Permission::Own, &owner_key, pending)
    }

    fn handle_answer(
        &mut self,
        now: Timestamp,
        session_id: SessionId,
        value: &BigUint,
    ) -> (ServerFrame, Vec<StoreDelta>) {
        // Single use: the session is consumed whatever the outcome.
        let Some(session) = self.sessions.remove(&session_id) else {
            return Self::error(ErrorCode::UnknownSession, "");
        };
        if session.expires_at <= now {
            return Self::error(ErrorCode::ChallengeExpired, "");
        }
        if *value != session.expected {
            let (frame, mut deltas) = Self::error(ErrorCode::AccessDenied, "");
            deltas.push(StoreDelta::ChallengeAnswered { session: session_id, ok: false });
            return (frame, deltas);
        }
        let (frame, mut deltas) = self.execute(now, session.c, session.pending);
        deltas.push(StoreDelta::ChallengeAnswered { session: session_id, ok: true });
        (frame, deltas)
    }

    fn issue_challenge(
        &mut self,
        now: Timestamp,
        c: AddressId,
        permission: Permission,
        key: &AddressKeyPublic,
        pending: PendingFrame,
    ) -> (ServerFrame, Vec<StoreDelta>) {
        let (challenge, expected) =
            group::make_challenge(&self.config.params, key, self.rng.as_mut())
                .expect("challenged keys are never wildcards");
        let session = self.fresh_session_id();
        self.sessions.insert(
            session,
            ChallengeSession {
                c,
                permission,
                pending,
                expected,
                expires_at: now + self.config.challenge_ttl_ms,
            },
        );
        (
            ServerFrame::ChallengeIssued { session, c0: challenge.c0, c1: challenge.c1 },
            vec![StoreDelta::ChallengeIssued { c, session, permission }],
        )
    }

    /// Runs an authorized frame against the address. Key replacement is a
    /// single map write, so readers never observe a half-updated triple.
    fn execute(
        &mut self,
        _now: Timestamp,
        c: AddressId,
        pending: PendingFrame,
    ) -> (ServerFrame, Vec<StoreDelta>) {
        match pending {
            PendingFrame::Update { p_r, p_w, p_o } => {
                if self.pending.remove(&c).is_some() {
                    self.records.insert(
                        c,
                        AddressRecord {
                            read: p_r,
                            write: p_w,
                            own: p_o,
                            next_seq: 0,
                            messages: Vec::new(),
                        },
                    );
                    return (
                        ServerFrame::AddressCreated { c },
                        vec![StoreDelta::AddressCommitted { c }],
                    );
                }
                let Some(rec) = self.records.get_mut(&c) else {
                    // Pending creation expired between challenge and answer.
                    return Self::error(ErrorCode::NoSuchAddress, "");
                };
                rec.read = p_r;
                rec.write = p_w;
                rec.own = p_o;
                (ServerFrame::AddressCreated { c }, vec![StoreDelta::KeysUpdated { c }])
            }
            PendingFrame::Read { cursor } => {
                let Some(rec) = self.records.get(&c) else {
                    return Self::error(ErrorCode::NoSuchAddress, "");
                };
                let payloads: Vec<Vec<u8>> = rec
                    .messages
                    .iter()
                    .filter(|(seq, _)| *seq >= cursor)
                    .map(|(_, p)| p.clone())
                    .collect();
                let count = payloads.len();
                (
                    ServerFrame::Messages { next_cursor: rec.next_seq, payloads },
                    vec![StoreDelta::MessagesServed { c, from: cursor, count }],
                )
            }
            PendingFrame::Write { payload } => {
                let Some(rec) = self.records.get_mut(&c) else {
                    return Self::error(ErrorCode::NoSuchAddress, "");
                };
                let seq = rec.next_seq;
                rec.next_seq += 1;
                let len = payload.len();
                rec.messages.push((seq, payload));
                (ServerFrame::Ack, vec![StoreDelta::MessageAppended { c, seq, len }])
            }
            PendingFrame::Truncate { upto } => {
                let Some(rec) = self.records.get_mut(&c) else {
                    return Self::error(ErrorCode::NoSuchAddress, "");
                };
                let before = rec.messages.len();
                rec.messages.retain(|(seq, _)| *seq >= upto);
                let removed = before - rec.messages.len();
                (ServerFrame::Ack, vec![StoreDelta::Truncated { c, upto, removed }])
            }
        }
    }

    /// Serializes the address table. Sessions and pending creations are
    /// single-use state and deliberately excluded.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = String::new();
        out.push_str("veilbox-store 1\n");
        let p = &self.config.params;
        out.push_str(&format!(
            "group {} {} {}\n",
            p.modulus().to_str_radix(16),
            p.order().to_str_radix(16),
            p.generator().to_str_radix(16)
        ));
        for (c, rec) in &self.records {
            out.push_str(&format!(
                "addr {c} {} {} {} {} {}\n",
                rec.read.to_wire(),
                rec.write.to_wire(),
                rec.own.to_wire(),
                rec.next_seq,
                rec.messages.len()
            ));
            for (seq, payload) in &rec.messages {
                let body = if payload.is_empty() { "-".to_string() } else { hex::encode(payload) };
                out.push_str(&format!("msg {seq} {body}\n"));
            }
        }
        out.push_str("end\n");
        out.into_bytes()
    }

    /// Rebuilds a store from snapshot bytes. The configured group must
    /// match the snapshot's.
    pub fn restore(
        config: StoreConfig,
        secret: HybridSecretKey,
        rng: Box<dyn RngCore + Send>,
        bytes: &[u8],
    ) -> Result<Self, RestoreError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| RestoreError::Corrupt("not utf-8".into()))?;
        let mut lines = text.lines();
        if lines.next() != Some("veilbox-store 1") {
            return Err(RestoreError::Corrupt("bad header".into()));
        }
        let group_line = lines.next().ok_or_else(|| RestoreError::Corrupt("missing group".into()))?;
        let mut parts = group_line.split(' ');
        if parts.next() != Some("group") {
            return Err(RestoreError::Corrupt("missing group line".into()));
        }
        let mut next_hex = |what: &str| -> Result<BigUint, RestoreError> {
            let s = parts.next().ok_or_else(|| RestoreError::Corrupt(format!("missing {what}")))?;
            group::parse_biguint_hex(s).map_err(|e| RestoreError::Corrupt(e.to_string()))
        };
        let (p, q, g) = (next_hex("modulus")?, next_hex("order")?, next_hex("generator")?);
        if &p != config.params.modulus()
            || &q != config.params.order()
            || &g != config.params.generator()
        {
            return Err(RestoreError::GroupMismatch);
        }

        let mut store = Self::new(config, secret, rng);
        let params = store.config.params.clone();
        let mut current: Option<(AddressId, usize)> = None;
        let mut saw_end = false;
        for line in lines {
            if saw_end {
                return Err(RestoreError::Corrupt("data after end".into()));
            }
            let fields: Vec<&str> = line.split(' ').collect();
            match fields.as_slice() {
                ["addr", c, p_r, p_w, p_o, next_seq, count] => {
                    if let Some((c, want)) = current.take() {
                        let have = store.records[&c].messages.len();
                        if have != want {
                            return Err(RestoreError::Corrupt(format!(
                                "address {c} declares {want} messages, has {have}"
                            )));
                        }
                    }
                    let c: AddressId =
                        c.parse().map_err(|e| RestoreError::Corrupt(format!("{e}")))?;
                    let parse_key = |s: &str| {
                        AddressKeyPublic::from_wire(&params, s)
                            .map_err(|e| RestoreError::Corrupt(e.to_string()))
                    };
                    let rec = AddressRecord {
                        read: parse_key(p_r)?,
                        write: parse_key(p_w)?,
                        own: parse_key(p_o)?,
                        next_seq: next_seq
                            .parse()
                            .map_err(|_| RestoreError::Corrupt("bad next_seq".into()))?,
                        messages: Vec::new(),
                    };
                    let count: usize = count
                        .parse()
                        .map_err(|_| RestoreError::Corrupt("bad message count".into()))?;
                    if store.records.insert(c, rec).is_some() {
                        return Err(RestoreError::Corrupt(format!("duplicate address {c}")));
                    }
                    current = Some((c, count));
                }
                ["msg", seq, body] => {
                    let Some((c, _)) = current else {
                        return Err(RestoreError::Corrupt("msg before addr".into()));
                    };
                    let seq: u64 =
                        seq.parse().map_err(|_| RestoreError::Corrupt("bad seq".into()))?;
                    let payload = if *body == "-" {
                        Vec::new()
                    } else {
                        hex::decode(body).map_err(|e| RestoreError::Corrupt(e.to_string()))?
                    };
                    let rec = store.records.get_mut(&c).expect("current address exists");
                    if seq >= rec.next_seq {
                        return Err(RestoreError::Corrupt("seq beyond next_seq".into()));
                    }
                    rec.messages.push((seq, payload));
                }
                ["end"] => saw_end = true,
                _ => return Err(RestoreError::Corrupt(format!("bad line {line:?}"))),
            }
        }
        if !saw_end {
            return Err(RestoreError::Corrupt("missing end marker".into()));
        }
        if let Some((c, want)) = current {
            let have = store.records[&c].messages.len();
            if have != want {
                return Err(RestoreError::Corrupt(format!(
                    "address {c} declares {want} messages, has {have}"
                )));
            }
        }
        Ok(store)
    }
}

impl std::fmt::Debug for AddressStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AddressStore")
            .field("addresses", &self.records.len())
            .field("pending", &self.pending.len())
            .field("sessions", &self.sessions.len())
            .finish()
    }
}
