//! The client protocol engine: address lifecycle, challenge solving, and
//! the read/write/update/truncate verbs over any transport.

use num_bigint::BigUint;
use rand::RngCore;

use veilbox_core::cipher::{self, ContentKey, HybridPublicKey};
use veilbox_core::group::{solve_challenge, Challenge, GroupParams, SecretExponent};
use veilbox_core::wire::{AddressId, ClientFrame, CreationGrant, ErrorCode, ServerFrame};

use crate::transport::{ClientError, Transport};

/// How the client wants one permission of a fresh address configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyChoice {
    /// Install a fresh secret exponent; the permission is challenge-gated.
    Gated,
    /// Install the wildcard; the permission is open to everyone.
    Open,
}

/// Client-side secrets for one concealed address. A wildcard slot holds
/// the zero exponent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressSecrets {
    pub c: AddressId,
    pub read: SecretExponent,
    pub write: SecretExponent,
    pub own: SecretExponent,
}

impl AddressSecrets {
    pub fn read_secret(&self) -> Option<&SecretExponent> {
        (!self.read.is_wildcard()).then_some(&self.read)
    }

    pub fn write_secret(&self) -> Option<&SecretExponent> {
        (!self.write.is_wildcard()).then_some(&self.write)
    }

    pub fn own_secret(&self) -> Option<&SecretExponent> {
        (!self.own.is_wildcard()).then_some(&self.own)
    }
}

/// One client session against one server.
pub struct Session<'t> {
    params: GroupParams,
    server_key: HybridPublicKey,
    transport: &'t mut dyn Transport,
}

impl<'t> Session<'t> {
    pub fn new(
        params: GroupParams,
        server_key: HybridPublicKey,
        transport: &'t mut dyn Transport,
    ) -> Self {
        Self { params, server_key, transport }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    fn expect_err(frame: ServerFrame) -> ClientError {
        match frame {
            ServerFrame::Error { code: ErrorCode::AccessDenied, .. } => ClientError::AccessDenied,
            ServerFrame::Error { code, detail } => ClientError::Server { code, detail },
            other => ClientError::Protocol(format!("unexpected response {other:?}")),
        }
    }

    /// Solves a challenge response with `secret`, or reports the denial.
    fn answer_challenge(
        &mut self,
        resp: ServerFrame,
        secret: Option<&SecretExponent>,
    ) -> Result<ServerFrame, ClientError> {
        match resp {
            ServerFrame::ChallengeIssued { session, c0, c1 } => {
                let Some(secret) = secret else {
                    return Err(ClientError::State(
                        "server challenged a permission we hold no secret for".into(),
                    ));
                };
                let value = solve_challenge(&self.params, secret, &Challenge { c0, c1 })?;
                self.transport.round_trip(&ClientFrame::ChallengeAnswer { session, value })
            }
            other => Ok(other),
        }
    }

    /// Full address-creation flow: request, decrypt the grant, prove
    /// ownership with the server-chosen secret, and install our own keys.
    pub fn create_address(
        &mut self,
        read: KeyChoice,
        write: KeyChoice,
        own: KeyChoice,
        rng: &mut dyn RngCore,
    ) -> Result<AddressSecrets, ClientError> {
        let session_key = ContentKey::generate(rng);
        let hello =
            cipher::hybrid_seal(&self.params, &self.server_key, session_key.as_bytes(), rng);
        let resp = self.transport.round_trip(&ClientFrame::CreateAddress { hello })?;
        let ServerFrame::CreatedBlob { blob } = resp else {
            return Err(Self::expect_err(resp));
        };
        let grant = CreationGrant::from_bytes(&cipher::open(&session_key, &blob)?)
            .map_err(|e| ClientError::Protocol(format!("bad creation grant: {e}")))?;

        let mut pick = |choice: KeyChoice| -> SecretExponent {
            match choice {
                KeyChoice::Open => SecretExponent::wildcard(),
                KeyChoice::Gated => {
                    SecretExponent::new(&self.params, self.params.random_exponent(rng))
                        .expect("exponent sampled below the order")
                }
            }
        };
        let secrets = AddressSecrets {
            c: grant.c,
            read: pick(read),
            write: pick(write),
            own: pick(own),
        };
        let server_own = SecretExponent::new(&self.params, grant.o.clone())
            .map_err(|e| ClientError::Protocol(format!("grant secret out of range: {e}")))?;
        self.update_keys_with(grant.c, &server_own, &secrets)?;
        Ok(secrets)
    }

    /// Replaces all three keys of `c`, proving ownership with `own`.
    pub fn update_keys_with(
        &mut self,
        c: AddressId,
        own: &SecretExponent,
        new: &AddressSecrets,
    ) -> Result<(), ClientError> {
        let frame = ClientFrame::UpdateAddress {
            c,
            p_r: new.read.public(&self.params),
            p_w: new.write.public(&self.params),
            p_o: new.own.public(&self.params),
        };
        let resp = self.transport.round_trip(&frame)?;
        let resp = self.answer_challenge(resp, Some(own))?;
        match resp {
            ServerFrame::AddressCreated { c: got } if got == c => Ok(()),
            other => Err(Self::expect_err(other)),
        }
    }

    /// Reads raw payloads from `cursor` on, solving the read challenge if
    /// one is issued. Returns the payloads and the next cursor.
    pub fn read_raw(
        &mut self,
        c: AddressId,
        read: Option<&SecretExponent>,
        cursor: u64,
    ) -> Result<(Vec<Vec<u8>>, u64), ClientError> {
        let resp = self.transport.round_trip(&ClientFrame::ReadAddress { c, cursor })?;
        let resp = self.answer_challenge(resp, read)?;
        match resp {
            ServerFrame::Messages { next_cursor, payloads } => Ok((payloads, next_cursor)),
            other => Err(Self::expect_err(other)),
        }
    }

    /// Appends one payload, solving the write challenge if issued.
    pub fn write_raw(
        &mut self,
        c: AddressId,
        write: Option<&SecretExponent>,
        payload: Vec<u8>,
    ) -> Result<(), ClientError> {
        let resp = self.transport.round_trip(&ClientFrame::WriteAddress { c, payload })?;
        let resp = self.answer_challenge(resp, write)?;
        match resp {
            ServerFrame::Ack => Ok(()),
            other => Err(Self::expect_err(other)),
        }
    }

    /// Deletes messages below `upto`, proving ownership.
    pub fn truncate(
        &mut self,
        c: AddressId,
        own: Option<&SecretExponent>,
        upto: u64,
    ) -> Result<(), ClientError> {
        let resp = self.transport.round_trip(&ClientFrame::TruncateAddress { c, upto })?;
        let resp = self.answer_challenge(resp, own)?;
        match resp {
            ServerFrame::Ack => Ok(()),
            other => Err(Self::expect_err(other)),
        }
    }

    /// Spec'd receive: fetch from `cursor`, split merged envelopes into
    /// chunks, open each with the content key. Undecryptable chunks are
    /// skipped and counted.
    pub fn receive(
        &mut self,
        c: AddressId,
        read: Option<&SecretExponent>,
        key: &ContentKey,
        cursor: u64,
    ) -> Result<Received, ClientError> {
        self.receive_with(c, read, cursor, |chunk| cipher::open(key, chunk).ok())
    }

    /// Like [`Session::receive`] but with a caller-supplied chunk opener,
    /// for mailboxes holding hybrid-sealed chunks.
    pub fn receive_with(
        &mut self,
        c: AddressId,
        read: Option<&SecretExponent>,
        cursor: u64,
        mut open_chunk: impl FnMut(&[u8]) -> Option<Vec<u8>>,
    ) -> Result<Received, ClientError> {
        let (payloads, next_cursor) = self.read_raw(c, read, cursor)?;
        let mut plaintexts = Vec::new();
        let mut skipped = 0usize;
        for payload in &payloads {
            let chunks = match veilbox_core::envelope::unpack_chunks(payload) {
                Ok(chunks) => chunks,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            for chunk in chunks {
                match open_chunk(&chunk) {
                    Some(pt) => plaintexts.push(pt),
                    None => skipped += 1,
                }
            }
        }
        Ok(Received { plaintexts, next_cursor, skipped })
    }
}

/// Result of a receive: decrypted messages in arrival order, the cursor to
/// poll from next, and how many chunks failed to open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub plaintexts: Vec<Vec<u8>>,
    pub next_cursor: u64,
    pub skipped: usize,
}

/// Encodes a value the way challenged answers travel, for tests that need
/// to submit deliberately wrong values.
pub fn raw_answer(session: veilbox_core::wire::SessionId, value: BigUint) -> ClientFrame {
    ClientFrame::ChallengeAnswer { session, value }
}
