//! Blocking TCP front end: one line in, one line out, one thread per
//! connection, all connections sharing the store behind a mutex. The wire
//! protocol itself assumes the server is the adversary, so there is no
//! transport security here by design.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use veilbox_core::wire::{ClientFrame, ErrorCode, ServerFrame};

use crate::store::{AddressStore, Timestamp};

/// Hard cap on one request line (hex-encoded payloads stay well under it).
const MAX_LINE: usize = 1 << 20;

pub fn now_ms() -> Timestamp {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("system clock after unix epoch")
        .as_millis() as Timestamp
}

/// Accepts connections until `shutdown` flips. Returns once the listener
/// has been drained of its final accepted connection.
pub fn serve(
    listener: TcpListener,
    store: Arc<Mutex<AddressStore>>,
    shutdown: Arc<AtomicBool>,
) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    let mut workers = Vec::new();
    while !shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _peer)) => {
                let store = Arc::clone(&store);
                workers.push(std::thread::spawn(move || {
                    let _ = handle_connection(stream, store);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return Err(e),
        }
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

fn handle_connection(stream: TcpStream, store: Arc<Mutex<AddressStore>>) -> io::Result<()> {
    stream.set_nodelay(true).ok();
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    loop {
        let line = match read_capped_line(&mut reader)? {
            Some(line) => line,
            None => return Ok(()), // EOF
        };
        let response = match ClientFrame::decode(&line) {
            Ok(frame) => {
                let mut store = store.lock().expect("store mutex");
                let (resp, _deltas) = store.handle_at(now_ms(), &frame);
                resp
            }
            Err(e) => ServerFrame::Error { code: ErrorCode::BadRequest, detail: e.to_string() },
        };
        writer.write_all(response.encode().as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
}

/// Reads one `\n`-terminated line, rejecting oversized input instead of
/// buffering it.
fn read_capped_line<R: Read>(reader: &mut BufReader<R>) -> io::Result<Option<String>> {
    let mut buf = Vec::new();
    loop {
        let available = reader.fill_buf()?;
        if available.is_empty() {
            if buf.is_empty() {
                return Ok(None);
            }
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "unterminated line"));
        }
        if let Some(pos) = available.iter().position(|&b| b == b'\n') {
            buf.extend_from_slice(&available[..pos]);
            reader.consume(pos + 1);
            break;
        }
        buf.extend_from_slice(available);
        let n = available.len();
        reader.consume(n);
        if buf.len() > MAX_LINE {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "line too long"));
        }
    }
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "line is not utf-8"))
}
