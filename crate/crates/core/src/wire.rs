//! Newline-delimited client/server frame codec.
//!
//! One frame per line, fields separated by single spaces, binary fields in
//! lowercase base16 (`-` for empty), group elements in minimal lowercase
//! base16, address keys as elements or the literal `*`. The encoding is
//! canonical: every frame value has exactly one byte representation, and
//! the decoder rejects all others. The full grammar lives in
//! `docs/wire-protocol.ebnf`; frozen encodings live under `testdata/`.

use num_bigint::BigUint;
use thiserror::Error;

use crate::group::{parse_biguint_hex, AddressKeyPublic, GroupError};

pub const ADDRESS_ID_LEN: usize = 16;

/// Opaque 128-bit server-side address identifier, rendered as 32 lowercase
/// hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AddressId(pub [u8; ADDRESS_ID_LEN]);

/// One-shot challenge-session identifier, same rendering as [`AddressId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(pub [u8; ADDRESS_ID_LEN]);

impl std::fmt::Display for AddressId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl std::str::FromStr for AddressId {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(AddressId(parse_id(s, 0)?))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("parse error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn err(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError { offset, message: message.into() }
}

/// Error codes carried by `ERR` frames. A closed vocabulary: unknown codes
/// fail to decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    NoSuchAddress,
    ChallengeExpired,
    UnknownSession,
    AccessDenied,
    TooLarge,
    WildcardForbidden,
    BadRequest,
    Internal,
}

impl ErrorCode {
    pub fn as_wire(self) -> &'static str {
        match self {
            ErrorCode::NoSuchAddress => "NO_SUCH_ADDRESS",
            ErrorCode::ChallengeExpired => "CHALLENGE_EXPIRED",
            ErrorCode::UnknownSession => "UNKNOWN_SESSION",
            ErrorCode::AccessDenied => "ACCESS_DENIED",
            ErrorCode::TooLarge => "TOO_LARGE",
            ErrorCode::WildcardForbidden => "WILDCARD_FORBIDDEN",
            ErrorCode::BadRequest => "BAD_REQUEST",
            ErrorCode::Internal => "INTERNAL",
        }
    }

    fn from_wire(s: &str, offset: usize) -> Result<Self, ParseError> {
        Ok(match s {
            "NO_SUCH_ADDRESS" => ErrorCode::NoSuchAddress,
            "CHALLENGE_EXPIRED" => ErrorCode::ChallengeExpired,
            "UNKNOWN_SESSION" => ErrorCode::UnknownSession,
            "ACCESS_DENIED" => ErrorCode::AccessDenied,
            "TOO_LARGE" => ErrorCode::TooLarge,
            "WILDCARD_FORBIDDEN" => ErrorCode::WildcardForbidden,
            "BAD_REQUEST" => ErrorCode::BadRequest,
            "INTERNAL" => ErrorCode::Internal,
            other => return Err(err(offset, format!("unknown error code {other:?}"))),
        })
    }
}

/// Frames a client sends to the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientFrame {
    /// Requests a fresh concealed address; `hello` is a session key sealed
    /// to the server's public key.
    CreateAddress { hello: Vec<u8> },
    /// Replaces all three address keys, gated by an ownership challenge.
    UpdateAddress {
        c: AddressId,
        p_r: AddressKeyPublic,
        p_w: AddressKeyPublic,
        p_o: AddressKeyPublic,
    },
    /// Reads stored messages from `cursor` on (0 = all).
    ReadAddress { c: AddressId, cursor: u64 },
    /// Appends one opaque payload.
    WriteAddress { c: AddressId, payload: Vec<u8> },
    /// Deletes messages with sequence below `upto`, gated by ownership.
    TruncateAddress { c: AddressId, upto: u64 },
    /// Answers an open challenge session.
    ChallengeAnswer { session: SessionId, value: BigUint },
}

/// Frames the server sends back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerFrame {
    AddressCreated { c: AddressId },
    CreatedBlob { blob: Vec<u8> },
    ChallengeIssued { session: SessionId, c0: BigUint, c1: BigUint },
    Messages { next_cursor: u64, payloads: Vec<Vec<u8>> },
    Ack,
    Error { code: ErrorCode, detail: String },
}

fn bytes_to_wire(b: &[u8]) -> String {
    if b.is_empty() {
        "-".to_string()
    } else {
        hex::encode(b)
    }
}

fn bytes_from_wire(s: &str, offset: usize) -> Result<Vec<u8>, ParseError> {
    if s == "-" {
        return Ok(Vec::new());
    }
    if s.is_empty() || s.len() % 2 != 0 {
        return Err(err(offset, "binary field must be even-length hex"));
    }
    if !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(err(offset, "binary field must be lowercase hex"));
    }
    hex::decode(s).map_err(|e| err(offset, e.to_string()))
}

fn parse_id(s: &str, offset: usize) -> Result<[u8; ADDRESS_ID_LEN], ParseError> {
    if s.len() != ADDRESS_ID_LEN * 2 {
        return Err(err(offset, format!("id must be {} hex chars", ADDRESS_ID_LEN * 2)));
    }
    let bytes = bytes_from_wire(s, offset)?;
    Ok(bytes.try_into().expect("length checked"))
}

fn parse_u64(s: &str, offset: usize) -> Result<u64, ParseError> {
    if s.is_empty() || (s.len() > 1 && s.starts_with('0')) || !s.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(err(offset, "expected canonical decimal"));
    }
    s.parse().map_err(|_| err(offset, "decimal out of range"))
}

fn parse_element(s: &str, offset: usize) -> Result<BigUint, ParseError> {
    parse_biguint_hex(s).map_err(|e| err(offset, e.to_string()))
}

/// Structural address-key parse: `*`, or a minimal-hex element. The value
/// 1 is reserved for the wildcard and rejected; subgroup membership is the
/// server's concern since the codec carries no group parameters.
fn parse_key(s: &str, offset: usize) -> Result<AddressKeyPublic, ParseError> {
    if s == "*" {
        return Ok(AddressKeyPublic::Wildcard);
    }
    let e = parse_element(s, offset)?;
    if e == BigUint::from(1u32) {
        return Err(err(offset, GroupError::ReservedElement("1".into()).to_string()));
    }
    Ok(AddressKeyPublic::Element(e))
}

/// Splits a line into tokens, tracking each token's byte offset. Exactly
/// one space between tokens; leading/trailing spaces are malformed.
fn tokenize(line: &str) -> Result<Vec<(usize, &str)>, ParseError> {
    if line.is_empty() {
        return Err(err(0, "empty line"));
    }
    if line.contains('\n') {
        return Err(err(line.find('\n').unwrap(), "embedded newline"));
    }
    let mut out = Vec::new();
    let mut pos = 0;
    for tok in line.split(' ') {
        if tok.is_empty() {
            return Err(err(pos, "empty token (doubled, leading, or trailing space)"));
        }
        out.push((pos, tok));
        pos += tok.len() + 1;
    }
    Ok(out)
}

struct Fields<'a> {
    toks: Vec<(usize, &'a str)>,
    next: usize,
    line_len: usize,
}

impl<'a> Fields<'a> {
    fn take(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        let got = self.toks.get(self.next).copied();
        self.next += 1;
        got.ok_or_else(|| err(self.line_len, format!("missing field: {what}")))
    }

    fn finish(self) -> Result<(), ParseError> {
        match self.toks.get(self.next) {
            Some((off, _)) => Err(err(*off, "trailing fields")),
            None => Ok(()),
        }
    }

    fn remaining(&mut self) -> Vec<(usize, &'a str)> {
        let rest = self.toks[self.next..].to_vec();
        self.next = self.toks.len();
        rest
    }
}

fn fields(line: &str) -> Result<(Fields<'_>, usize, &str), ParseError> {
    let toks = tokenize(line)?;
    let (tag_off, tag) = toks[0];
    Ok((Fields { toks, next: 1, line_len: line.len() }, tag_off, tag))
}

impl ClientFrame {
    /// Canonical single-line encoding (no trailing newline).
    pub fn encode(&self) -> String {
        match self {
            ClientFrame::CreateAddress { hello } => format!("CREATE {}", bytes_to_wire(hello)),
            ClientFrame::UpdateAddress { c, p_r, p_w, p_o } => {
                format!("UPDATE {c} {} {} {}", p_r.to_wire(), p_w.to_wire(), p_o.to_wire())
            }
            ClientFrame::ReadAddress { c, cursor } => format!("READ {c} {cursor}"),
            ClientFrame::WriteAddress { c, payload } => {
                format!("WRITE {c} {}", bytes_to_wire(payload))
            }
            ClientFrame::TruncateAddress { c, upto } => format!("TRUNCATE {c} {upto}"),
            ClientFrame::ChallengeAnswer { session, value } => {
                format!("ANSWER {session} {}", value.to_str_radix(16))
            }
        }
    }

    pub fn decode(line: &str) -> Result<Self, ParseError> {
        let (mut f, tag_off, tag) = fields(line)?;
        let frame = match tag {
            "CREATE" => {
                let (o, s) = f.take("hello")?;
                ClientFrame::CreateAddress { hello: bytes_from_wire(s, o)? }
            }
            "UPDATE" => {
                let (o, s) = f.take("address id")?;
                let c = AddressId(parse_id(s, o)?);
                let (o, s) = f.take("read key")?;
                let p_r = parse_key(s, o)?;
                let (o, s) = f.take("write key")?;
                let p_w = parse_key(s, o)?;
                let (o, s) = f.take("owner key")?;
                let p_o = parse_key(s, o)?;
                ClientFrame::UpdateAddress { c, p_r, p_w, p_o }
            }
            "READ" => {
                let (o, s) = f.take("address id")?;
                let c = AddressId(parse_id(s, o)?);
                let (o, s) = f.take("cursor")?;
                ClientFrame::ReadAddress { c, cursor: parse_u64(s, o)? }
            }
            "WRITE" => {
                let (o, s) = f.take("address id")?;
                let c = AddressId(parse_id(s, o)?);
                let (o, s) = f.take("payload")?;
                ClientFrame::WriteAddress { c, payload: bytes_from_wire(s, o)? }
            }
            "TRUNCATE" => {
                let (o, s) = f.take("address id")?;
                let c = AddressId(parse_id(s, o)?);
                let (o, s) = f.take("upto")?;
                ClientFrame::TruncateAddress { c, upto: parse_u64(s, o)? }
            }
            "ANSWER" => {
                let (o, s) = f.take("session id")?;
                let session = SessionId(parse_id(s, o)?);
                let (o, s) = f.take("value")?;
                ClientFrame::ChallengeAnswer { session, value: parse_element(s, o)? }
            }
            other => return Err(err(tag_off, format!("unknown client frame {other:?}"))),
        };
        f.finish()?;
        Ok(frame)
    }
}

impl ServerFrame {
    /// Canonical single-line encoding (no trailing newline).
    pub fn encode(&self) -> String {
        match self {
            ServerFrame::AddressCreated { c } => format!("CREATED {c}"),
            ServerFrame::CreatedBlob { blob } => format!("BLOB {}", bytes_to_wire(blob)),
            ServerFrame::ChallengeIssued { session, c0, c1 } => {
                format!("CHALLENGE {session} {} {}", c0.to_str_radix(16), c1.to_str_radix(16))
            }
            ServerFrame::Messages { next_cursor, payloads } => {
                let mut out = format!("MSGS {next_cursor}");
                for p in payloads {
                    out.push(' ');
                    out.push_str(&bytes_to_wire(p));
                }
                out
            }
            ServerFrame::Ack => "OK".to_string(),
            ServerFrame::Error { code, detail } => {
                format!("ERR {} {}", code.as_wire(), bytes_to_wire(detail.as_bytes()))
            }
        }
    }

    pub fn decode(line: &str) -> Result<Self, ParseError> {
        let (mut f, tag_off, tag) = fields(line)?;
        let frame = match tag {
            "CREATED" => {
                let (o, s) = f.take("address id")?;
                ServerFrame::AddressCreated { c: AddressId(parse_id(s, o)?) }
            }
            "BLOB" => {
                let (o, s) = f.take("blob")?;
                ServerFrame::CreatedBlob { blob: bytes_from_wire(s, o)? }
            }
            "CHALLENGE" => {
                let (o, s) = f.take("session id")?;
                let session = SessionId(parse_id(s, o)?);
                let (o, s) = f.take("c0")?;
                let c0 = parse_element(s, o)?;
                let (o, s) = f.take("c1")?;
                let c1 = parse_element(s, o)?;
                ServerFrame::ChallengeIssued { session, c0, c1 }
            }
            "MSGS" => {
                let (o, s) = f.take("next cursor")?;
                let next_cursor = parse_u64(s, o)?;
                let mut payloads = Vec::new();
                for (o, s) in f.remaining() {
                    payloads.push(bytes_from_wire(s, o)?);
                }
                ServerFrame::Messages { next_cursor, payloads }
            }
            "OK" => ServerFrame::Ack,
            "ERR" => {
                let (o, s) = f.take("code")?;
                let code = ErrorCode::from_wire(s, o)?;
                let (o, s) = f.take("detail")?;
                let detail = String::from_utf8(bytes_from_wire(s, o)?)
                    .map_err(|_| err(o, "detail is not utf-8"))?;
                ServerFrame::Error { code, detail }
            }
            other => return Err(err(tag_off, format!("unknown server frame {other:?}"))),
        };
        f.finish()?;
        Ok(frame)
    }
}

/// Contents of the `BLOB` reply to `CREATE`, once opened with the session
/// key: the fresh address id plus the server-chosen secret exponents the
/// creator needs to pass the first ownership challenge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreationGrant {
    pub c: AddressId,
    pub r: BigUint,
    pub w: BigUint,
    pub o: BigUint,
}

impl CreationGrant {
    pub fn to_bytes(&self) -> Vec<u8> {
        format!(
            "{} {} {} {}",
            self.c,
            self.r.to_str_radix(16),
            self.w.to_str_radix(16),
            self.o.to_str_radix(16)
        )
        .into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ParseError> {
        let text = std::str::from_utf8(bytes).map_err(|_| err(0, "grant is not utf-8"))?;
        let mut f = tokenize(text).map(|toks| Fields { toks, next: 0, line_len: text.len() })?;
        let (o, s) = f.take("address id")?;
        let c = AddressId(parse_id(s, o)?);
        let (o, s) = f.take("read secret")?;
        let r = parse_element(s, o)?;
        let (o, s) = f.take("write secret")?;
        let w = parse_element(s, o)?;
        let (o, s) = f.take("owner secret")?;
        let ow = parse_element(s, o)?;
        f.finish()?;
        Ok(Self { c, r, w, o: ow })
    }
}
