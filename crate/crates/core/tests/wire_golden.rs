//! Frozen wire encodings. These lines must never change across releases;
//! a diff here is a protocol break.

use num_bigint::BigUint;
use veilbox_core::group::AddressKeyPublic;
use veilbox_core::wire::*;

const GOLDEN: &str = include_str!("../testdata/wire_golden.txt");

fn a(b: u8) -> AddressId {
    AddressId([b; 16])
}

fn s(b: u8) -> SessionId {
    SessionId([b; 16])
}

fn el(v: u64) -> BigUint {
    BigUint::from(v)
}

fn expected_client() -> Vec<ClientFrame> {
    vec![
        ClientFrame::CreateAddress { hello: vec![0x01, 0x02, 0xfe] },
        ClientFrame::CreateAddress { hello: vec![] },
        ClientFrame::UpdateAddress {
            c: a(0xa6),
            p_r: AddressKeyPublic::Element(el(18)),
            p_w: AddressKeyPublic::Element(el(9)),
            p_o: AddressKeyPublic::Element(el(13)),
        },
        ClientFrame::UpdateAddress {
            c: a(0x01),
            p_r: AddressKeyPublic::Wildcard,
            p_w: AddressKeyPublic::Wildcard,
            p_o: AddressKeyPublic::Element(el(16)),
        },
        ClientFrame::UpdateAddress {
            c: a(0x02),
            p_r: AddressKeyPublic::Element(el(0x1f2a3b)),
            p_w: AddressKeyPublic::Wildcard,
            p_o: AddressKeyPublic::Element(el(2)),
        },
        ClientFrame::ReadAddress { c: a(0xa6), cursor: 0 },
        ClientFrame::ReadAddress { c: a(0xb7), cursor: 12345678901234 },
        ClientFrame::WriteAddress { c: a(0xc8), payload: b"opaque".to_vec() },
        ClientFrame::WriteAddress { c: a(0xd9), payload: vec![] },
        ClientFrame::WriteAddress { c: a(0xda), payload: vec![0u8, 0xff, 0x10] },
        ClientFrame::TruncateAddress { c: a(0xea), upto: 0 },
        ClientFrame::TruncateAddress { c: a(0xeb), upto: 42 },
        ClientFrame::ChallengeAnswer { session: s(0x11), value: el(7) },
        ClientFrame::ChallengeAnswer {
            session: s(0x22),
            value: BigUint::parse_bytes(b"deadbeefcafe1234", 16).unwrap(),
        },
    ]
}

fn expected_server() -> Vec<ServerFrame> {
    vec![
        ServerFrame::AddressCreated { c: a(0xa6) },
        ServerFrame::CreatedBlob { blob: vec![0xaa, 0xbb, 0xcc] },
        ServerFrame::ChallengeIssued { session: s(0x11), c0: el(12), c1: el(21) },
        ServerFrame::ChallengeIssued {
            session: s(0x33),
            c0: BigUint::parse_bytes(b"ffccaa11", 16).unwrap(),
            c1: el(3),
        },
        ServerFrame::Messages { next_cursor: 0, payloads: vec![] },
        ServerFrame::Messages { next_cursor: 3, payloads: vec![vec![0xde, 0xad], vec![0xbe, 0xef]] },
        ServerFrame::Messages { next_cursor: 9, payloads: vec![vec![], vec![0x00]] },
        ServerFrame::Ack,
        ServerFrame::Error { code: ErrorCode::NoSuchAddress, detail: "no such address".into() },
        ServerFrame::Error { code: ErrorCode::AccessDenied, detail: String::new() },
        ServerFrame::Error { code: ErrorCode::ChallengeExpired, detail: "expired".into() },
        ServerFrame::Error { code: ErrorCode::UnknownSession, detail: String::new() },
        ServerFrame::Error { code: ErrorCode::TooLarge, detail: "payload over limit".into() },
        ServerFrame::Error { code: ErrorCode::WildcardForbidden, detail: String::new() },
    ]
}

struct GoldenLines {
    client: Vec<String>,
    server: Vec<String>,
}

fn golden_lines() -> GoldenLines {
    let mut client = Vec::new();
    let mut server = Vec::new();
    for line in GOLDEN.lines() {
        let (dir, encoding) = line.split_once('\t').expect("direction<TAB>encoding");
        match dir {
            "client" => client.push(encoding.to_string()),
            "server" => server.push(encoding.to_string()),
            other => panic!("unknown direction {other:?}"),
        }
    }
    GoldenLines { client, server }
}

#[test]
fn corpus_has_at_least_25_frames() {
    let lines = golden_lines();
    assert!(lines.client.len() + lines.server.len() >= 25);
}

#[test]
fn client_golden_frames_are_stable() {
    let lines = golden_lines();
    let expected = expected_client();
    assert_eq!(lines.client.len(), expected.len());
    for (stored, frame) in lines.client.iter().zip(&expected) {
        let decoded = ClientFrame::decode(stored).unwrap_or_else(|e| {
            panic!("stored encoding no longer decodes: {stored:?}: {e}")
        });
        assert_eq!(&decoded, frame, "decoded value drifted for {stored:?}");
        assert_eq!(&decoded.encode(), stored, "re-encoding not byte-identical");
    }
}

#[test]
fn server_golden_frames_are_stable() {
    let lines = golden_lines();
    let expected = expected_server();
    assert_eq!(lines.server.len(), expected.len());
    for (stored, frame) in lines.server.iter().zip(&expected) {
        let decoded = ServerFrame::decode(stored).unwrap_or_else(|e| {
            panic!("stored encoding no longer decodes: {stored:?}: {e}")
        });
        assert_eq!(&decoded, frame, "decoded value drifted for {stored:?}");
        assert_eq!(&decoded.encode(), stored, "re-encoding not byte-identical");
    }
}
