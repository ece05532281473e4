//! Server connections. Everything above this trait is transport-agnostic,
//! so tests and simulations can splice in an in-process store.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use thiserror::Error;
use veilbox_core::wire::{ClientFrame, ErrorCode, ParseError, ServerFrame};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed server frame: {0}")]
    BadServerFrame(#[from] ParseError),
    #[error("server error {code:?}: {detail}")]
    Server { code: ErrorCode, detail: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("access denied")]
    AccessDenied,
    #[error("decryption failed: {0}")]
    Cipher(#[from] veilbox_core::cipher::CipherError),
    #[error("group error: {0}")]
    Group(#[from] veilbox_core::group::GroupError),
    #[error("envelope error: {0}")]
    Envelope(#[from] veilbox_core::envelope::EnvelopeError),
    #[error("{0}")]
    State(String),
}

impl ClientError {
    /// The error code, when the failure was a server-signalled one.
    pub fn server_code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Server { code, .. } => Some(*code),
            ClientError::AccessDenied => Some(ErrorCode::AccessDenied),
            _ => None,
        }
    }
}

pub trait Transport {
    /// Sends one frame and returns the server's single response frame.
    fn round_trip(&mut self, frame: &ClientFrame) -> Result<ServerFrame, ClientError>;
}

/// Plain TCP transport speaking the newline-delimited wire format.
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: &str) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true).ok();
        Ok(Self { reader: BufReader::new(stream.try_clone()?), writer: stream })
    }
}

impl Transport for TcpTransport {
    fn round_trip(&mut self, frame: &ClientFrame) -> Result<ServerFrame, ClientError> {
        self.writer.write_all(frame.encode().as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        let n = self.reader.read_line(&mut line)?;
        if n == 0 {
            return Err(ClientError::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            )));
        }
        let line = line.trim_end_matches('\n');
        Ok(ServerFrame::decode(line)?)
    }
}
