//! A user-operated mix: owns wildcard-write inbox addresses, collects
//! envelopes, strips one encryption layer, deduplicates replayed
//! ciphertexts, merges same-destination traffic, shuffles, and forwards.
//!
//! The mix is a passive state machine; the owner drives it by calling
//! [`Mix::tick`] (or the individual collect/flush steps) with the current
//! time, which keeps simulations deterministic.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::RngCore;
use sha2::{Digest, Sha256};

use veilbox_core::cipher::{self, HybridPublicKey, HybridSecretKey};
use veilbox_core::envelope::{pack_chunks, unpack_chunks, RoutedEnvelope};
use veilbox_core::wire::AddressId;

use crate::directory::MixEntry;
use crate::engine::{AddressSecrets, KeyChoice, Session};
use crate::transport::ClientError;

#[derive(Debug, Clone)]
pub struct MixConfig {
    pub inbox_count: usize,
    /// Flush once this many envelopes are pending...
    pub batch_threshold: usize,
    /// ...or this long after the first pending envelope arrived.
    pub flush_timeout_ms: u64,
    /// Replays of a ciphertext seen within this window are dropped.
    pub dedup_window_ms: u64,
    /// Forwarded inbox messages are deleted from the server after this
    /// delay; must not undercut the dedup window.
    pub deletion_delay_ms: u64,
    pub envelope_size: usize,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            inbox_count: 3,
            batch_threshold: 5,
            flush_timeout_ms: 2_000,
            dedup_window_ms: 600_000,
            deletion_delay_ms: 600_000,
            envelope_size: veilbox_core::envelope::DEFAULT_ENVELOPE_SIZE,
        }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MixMetrics {
    pub collected: u64,
    pub duplicates_dropped: u64,
    pub undecryptable_dropped: u64,
    pub forwarded: u64,
    pub write_failures: u64,
}

#[derive(Debug)]
struct Inbox {
    secrets: AddressSecrets,
    cursor: u64,
    retiring: Option<u64>,
}

#[derive(Debug)]
struct ScheduledDeletion {
    inbox: AddressId,
    own: veilbox_core::group::SecretExponent,
    upto: u64,
    not_before: u64,
}

pub struct Mix {
    secret: HybridSecretKey,
    public: HybridPublicKey,
    config: MixConfig,
    inboxes: Vec<Inbox>,
    pending: Vec<RoutedEnvelope>,
    batch_started: Option<u64>,
    seen: HashMap<[u8; 32], u64>,
    retry: Vec<(AddressId, Vec<u8>)>,
    deletions: Vec<ScheduledDeletion>,
    metrics: MixMetrics,
}

impl Mix {
    pub fn new(config: MixConfig, secret: HybridSecretKey, session: &Session<'_>) -> Self {
        assert!(config.batch_threshold >= 2, "batch threshold must be at least 2");
        let public = secret.public(session.params());
        Self {
            secret,
            public,
            config,
            inboxes: Vec::new(),
            pending: Vec::new(),
            batch_started: None,
            seen: HashMap::new(),
            retry: Vec::new(),
            deletions: Vec::new(),
            metrics: MixMetrics::default(),
        }
    }

    pub fn public_key(&self) -> &HybridPublicKey {
        &self.public
    }

    pub fn metrics(&self) -> MixMetrics {
        self.metrics
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Creates `n` fresh wildcard-write inboxes. Existing inboxes keep
    /// being drained but leave the directory entry, then get retired after
    /// the deletion delay.
    pub fn register_inboxes(
        &mut self,
        session: &mut Session<'_>,
        n: usize,
        now: u64,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<AddressId>, ClientError> {
        if n == 0 {
            return Err(ClientError::State("a mix needs at least one inbox".into()));
        }
        for inbox in &mut self.inboxes {
            inbox.retiring.get_or_insert(now);
        }
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let secrets =
                session.create_address(KeyChoice::Gated, KeyChoice::Open, KeyChoice::Gated, rng)?;
            ids.push(secrets.c);
            self.inboxes.push(Inbox { secrets, cursor: 0, retiring: None });
        }
        Ok(ids)
    }

    /// Directory entry advertising the active inboxes.
    pub fn directory_entry(&self) -> MixEntry {
        MixEntry {
            public_key: self.public.clone(),
            inboxes: self
                .inboxes
                .iter()
                .filter(|i| i.retiring.is_none())
                .map(|i| i.secrets.c)
                .collect(),
        }
    }

    /// Polls every inbox, peels one layer off each new chunk, and adds the
    /// decryptable ones to the pending batch. Returns how many joined.
    pub fn collect(&mut self, session: &mut Session<'_>, now: u64) -> Result<usize, ClientError> {
        self.seen.retain(|_, t| now.saturating_sub(*t) < self.config.dedup_window_ms);
        let mut joined = 0usize;
        for inbox in &mut self.inboxes {
            let (payloads, next_cursor) =
                session.read_raw(inbox.secrets.c, inbox.secrets.read_secret(), inbox.cursor)?;
            let had_any = !payloads.is_empty();
            for payload in &payloads {
                let chunks = match unpack_chunks(payload) {
                    Ok(chunks) => chunks,
                    Err(_) => {
                        self.metrics.undecryptable_dropped += 1;
                        continue;
                    }
                };
                for chunk in chunks {
                    let digest: [u8; 32] = Sha256::digest(&chunk).into();
                    if self.seen.contains_key(&digest) {
                        self.metrics.duplicates_dropped += 1;
                        continue;
                    }
                    self.seen.insert(digest, now);
                    match cipher::hybrid_open(session.params(), &self.secret, &chunk)
                        .ok()
                        .and_then(|pt| RoutedEnvelope::from_bytes(&pt).ok())
                    {
                        Some(routed) => {
                            self.pending.push(routed);
                            self.metrics.collected += 1;
                            joined += 1;
                        }
                        None => self.metrics.undecryptable_dropped += 1,
                    }
                }
            }
            if had_any {
                // Forwarded messages may be deleted from the server, but
                // only once the dedup window has passed.
                self.deletions.push(ScheduledDeletion {
                    inbox: inbox.secrets.c,
                    own: inbox.secrets.own.clone(),
                    upto: next_cursor,
                    not_before: now + self.config.deletion_delay_ms,
                });
            }
            inbox.cursor = next_cursor;
        }
        if joined > 0 && self.batch_started.is_none() {
            self.batch_started = Some(now);
        }
        Ok(joined)
    }

    /// Whether the batch is due: threshold reached, or timeout elapsed
    /// with anything pending, or failed writes waiting for a retry.
    pub fn ready(&self, now: u64) -> bool {
        if self.pending.len() >= self.config.batch_threshold {
            return true;
        }
        if !self.retry.is_empty() {
            return true;
        }
        match self.batch_started {
            Some(t0) if !self.pending.is_empty() => {
                now.saturating_sub(t0) >= self.config.flush_timeout_ms
            }
            _ => false,
        }
    }

    /// Merges same-destination messages, re-pads everything to the fixed
    /// envelope size, and returns the outputs in a fresh uniform random
    /// order. Clears the pending batch.
    pub fn process_batch(&mut self, rng: &mut dyn RngCore) -> Vec<(AddressId, Vec<u8>)> {
        let mut by_dest: BTreeMap<AddressId, Vec<Vec<u8>>> = BTreeMap::new();
        for routed in self.pending.drain(..) {
            by_dest.entry(routed.destination).or_default().push(routed.message);
        }
        self.batch_started = None;
        let mut outputs = Vec::new();
        for (dest, messages) in by_dest {
            match pack_chunks(&messages, self.config.envelope_size, rng) {
                Ok(envelopes) => {
                    for env in envelopes {
                        outputs.push((dest, env));
                    }
                }
                // A chunk over capacity can only come from a sender who
                // built an impossible layer; nothing to forward.
                Err(_) => self.metrics.undecryptable_dropped += messages.len() as u64,
            }
        }
        outputs.shuffle(rng);
        outputs
    }

    /// Writes each output to its destination. Failures are retained and
    /// retried on the next flush.
    pub fn forward(
        &mut self,
        session: &mut Session<'_>,
        outputs: Vec<(AddressId, Vec<u8>)>,
    ) -> Result<(), ClientError> {
        for (dest, envelope) in outputs {
            match session.write_raw(dest, None, envelope.clone()) {
                Ok(()) => self.metrics.forwarded += 1,
                Err(_) => {
                    self.metrics.write_failures += 1;
                    self.retry.push((dest, envelope));
                }
            }
        }
        Ok(())
    }

    /// Runs deletions whose delay has passed and retires drained inboxes.
    pub fn maintain(&mut self, session: &mut Session<'_>, now: u64) -> Result<(), ClientError> {
        let mut remaining = Vec::new();
        for d in self.deletions.drain(..) {
            if d.not_before <= now {
                session.truncate(d.inbox, Some(&d.own), d.upto)?;
            } else {
                remaining.push(d);
            }
        }
        self.deletions = remaining;
        self.inboxes.retain(|i| match i.retiring {
            Some(t0) => now.saturating_sub(t0) < self.config.deletion_delay_ms,
            None => true,
        });
        Ok(())
    }

    /// One scheduler step: collect, flush if due, maintain.
    pub fn tick(
        &mut self,
        session: &mut Session<'_>,
        now: u64,
        rng: &mut dyn RngCore,
    ) -> Result<(), ClientError> {
        self.collect(session, now)?;
        if self.ready(now) {
            let mut outputs = std::mem::take(&mut self.retry);
            outputs.extend(self.process_batch(rng));
            self.forward(session, outputs)?;
        }
        self.maintain(session, now)
    }
}
