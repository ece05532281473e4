//! Address lifecycle, keyring persistence, and contact verification.

mod common;

use common::SharedStore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use veilbox_client::engine::KeyChoice;
use veilbox_client::keyring::{ContactBlob, Keyring};
use veilbox_client::ClientError;
use veilbox_core::cipher::{self, ContentKey};
use veilbox_core::group::GroupParams;
use veilbox_core::wire::ErrorCode;

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[test]
fn fully_gated_address_locks_out_strangers() {
    let shared = SharedStore::new(GroupParams::test_small(), 1);
    let mut rng = rng(1);

    let mut t = shared.transport();
    let mut session = shared.session(&mut t);
    let secrets = session
        .create_address(KeyChoice::Gated, KeyChoice::Gated, KeyChoice::Gated, &mut rng)
        .unwrap();
    session.write_raw(secrets.c, secrets.write_secret(), b"mine".to_vec()).unwrap();

    // A stranger with their own fresh secrets is denied on both verbs.
    let stranger = session
        .create_address(KeyChoice::Gated, KeyChoice::Gated, KeyChoice::Gated, &mut rng)
        .unwrap();
    let read_err =
        session.read_raw(secrets.c, stranger.read_secret(), 0).unwrap_err();
    assert_eq!(read_err.server_code(), Some(ErrorCode::AccessDenied));
    let write_err =
        session.write_raw(secrets.c, stranger.write_secret(), b"theirs".to_vec()).unwrap_err();
    assert_eq!(write_err.server_code(), Some(ErrorCode::AccessDenied));

    // The owner still reads exactly what they wrote.
    let (payloads, next) = session.read_raw(secrets.c, secrets.read_secret(), 0).unwrap();
    assert_eq!(payloads, vec![b"mine".to_vec()]);
    assert_eq!(next, 1);
}

#[test]
fn pinboard_accepts_stranger_writes() {
    let shared = SharedStore::new(GroupParams::test_small(), 2);
    let mut rng = rng(2);
    let mut t = shared.transport();
    let mut session = shared.session(&mut t);

    let pinboard = session
        .create_address(KeyChoice::Gated, KeyChoice::Open, KeyChoice::Gated, &mut rng)
        .unwrap();
    // No write secret needed.
    session.write_raw(pinboard.c, None, b"graffiti".to_vec()).unwrap();
    let (payloads, _) = session.read_raw(pinboard.c, pinboard.read_secret(), 0).unwrap();
    assert_eq!(payloads, vec![b"graffiti".to_vec()]);
}

#[test]
fn public_feed_root_reads_without_proof() {
    let shared = SharedStore::new(GroupParams::test_small(), 3);
    let mut rng = rng(3);
    let mut t = shared.transport();
    let mut session = shared.session(&mut t);

    let root = session
        .create_address(KeyChoice::Open, KeyChoice::Gated, KeyChoice::Gated, &mut rng)
        .unwrap();
    session.write_raw(root.c, root.write_secret(), b"hello world".to_vec()).unwrap();
    let (payloads, _) = session.read_raw(root.c, None, 0).unwrap();
    assert_eq!(payloads, vec![b"hello world".to_vec()]);
}

#[test]
fn receive_splits_merged_payloads_and_skips_foreign_chunks() {
    let shared = SharedStore::new(GroupParams::test_small(), 4);
    let mut rng = rng(4);
    let mut t = shared.transport();
    let mut session = shared.session(&mut t);

    let inbox = session
        .create_address(KeyChoice::Gated, KeyChoice::Open, KeyChoice::Gated, &mut rng)
        .unwrap();
    let key = ContentKey::generate(&mut rng);
    let other_key = ContentKey::generate(&mut rng);
    let chunks = vec![
        cipher::seal(&key, b"first", &mut rng),
        cipher::seal(&other_key, b"not ours", &mut rng),
        cipher::seal(&key, b"second", &mut rng),
    ];
    let envelopes = veilbox_core::envelope::pack_chunks(&chunks, 1024, &mut rng).unwrap();
    for env in envelopes {
        session.write_raw(inbox.c, None, env).unwrap();
    }

    let received = session.receive(inbox.c, inbox.read_secret(), &key, 0).unwrap();
    assert_eq!(received.plaintexts, vec![b"first".to_vec(), b"second".to_vec()]);
    assert_eq!(received.skipped, 1);
    assert_eq!(received.next_cursor, 1);

    // Cursor advances monotonically across polls.
    let again = session.receive(inbox.c, inbox.read_secret(), &key, received.next_cursor).unwrap();
    assert!(again.plaintexts.is_empty());
    assert_eq!(again.next_cursor, 1);
}

#[test]
fn keyring_round_trips_encrypted() {
    let dir = std::env::temp_dir().join(format!("veilbox-kr-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("alice.keyring");

    // A full-width group gives the secret a long hex form, so the
    // plaintext-leak scan below is meaningful.
    let mut rng = rng(5);
    let mut alice = Keyring::create("alice", "modp768", &mut rng).unwrap();
    let bob = Keyring::create("bob", "modp768", &mut rng).unwrap();
    alice.add_contact(&bob.contact_blob()).unwrap();
    alice.save(&path, "hunter2").unwrap();

    let loaded = Keyring::load(&path, "hunter2").unwrap();
    assert_eq!(loaded, alice);

    // Secrets never serialize unencrypted: the raw file must not contain
    // the secret exponent hex.
    let raw = std::fs::read(&path).unwrap();
    let needle = alice.secret.to_hex();
    assert!(!windows_contains(&raw, needle.as_bytes()));

    assert!(matches!(Keyring::load(&path, "wrong"), Err(ClientError::State(_))));
    std::fs::remove_dir_all(&dir).ok();
}

fn windows_contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn contact_blob_round_trips_and_verification_flows() {
    let mut rng = rng(6);
    let mut alice = Keyring::create("alice", "test", &mut rng).unwrap();
    let mut bob = Keyring::create("bob", "test", &mut rng).unwrap();

    let blob = bob.contact_blob();
    let parsed = ContactBlob::from_json(&blob.to_json()).unwrap();
    assert_eq!(parsed, blob);
    assert_eq!(blob.to_qr_text().lines().count(), 1);

    alice.add_contact(&blob).unwrap();
    bob.add_contact(&alice.contact_blob()).unwrap();

    // Matching key sets produce matching word strings on both sides.
    let a_words = alice.fingerprint_with("bob").unwrap();
    let b_words = bob.fingerprint_with("alice").unwrap();
    assert_eq!(a_words, b_words);
    assert_eq!(a_words.split(' ').count(), 8);
    assert!(alice.confirm_verification("bob", &b_words).unwrap());
    assert!(alice.contact("bob").unwrap().verified);

    // A substituted key changes the fingerprint and verification fails.
    let mallory = Keyring::create("bob", "test", &mut rng).unwrap();
    let mut eve_view = Keyring::create("alice2", "test", &mut rng).unwrap();
    eve_view.add_contact(&mallory.contact_blob()).unwrap();
    let tampered = eve_view.fingerprint_with("bob").unwrap();
    assert_ne!(tampered, b_words);
    assert!(!alice.confirm_verification("bob", &tampered).unwrap());
    assert!(!alice.contact("bob").unwrap().verified);

    // No claimed keys at all: nothing to fingerprint.
    assert!(alice.fingerprint_with("nobody").is_err());
}

#[test]
fn contact_group_mismatch_rejected() {
    let mut rng = rng(7);
    let mut alice = Keyring::create("alice", "test", &mut rng).unwrap();
    let bob = Keyring::create("bob", "modp768", &mut rng).unwrap();
    assert!(alice.add_contact(&bob.contact_blob()).is_err());
}
