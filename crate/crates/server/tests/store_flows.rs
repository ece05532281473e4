//! End-to-end store flows: address creation, key installation, gated
//! reads/writes, session lifecycle, truncation, and snapshots.

use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use veilbox_core::cipher::{self, ContentKey};
use veilbox_core::group::{
    keygen, solve_challenge, wildcard, AddressKeyPublic, GroupParams, SecretExponent,
};
use veilbox_core::wire::{AddressId, ClientFrame, CreationGrant, ErrorCode, ServerFrame};
use veilbox_server::store::{AddressStore, StoreConfig};

fn test_store(seed: u64) -> AddressStore {
    let cfg = StoreConfig::new(GroupParams::test_small());
    AddressStore::with_fresh_key(cfg, Box::new(ChaCha20Rng::seed_from_u64(seed)))
}

fn client_rng() -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(0xc11e)
}

/// Runs the full creation flow and installs the given keys, returning the
/// new address id.
fn create_address(
    store: &mut AddressStore,
    now: u64,
    rng: &mut dyn RngCore,
    p_r: AddressKeyPublic,
    p_w: AddressKeyPublic,
    p_o: AddressKeyPublic,
) -> AddressId {
    let grant = begin_creation(store, now, rng);
    let c = grant.c;
    finish_creation(store, now, &grant, p_r, p_w, p_o);
    c
}

fn begin_creation(store: &mut AddressStore, now: u64, rng: &mut dyn RngCore) -> CreationGrant {
    let params = store.params().clone();
    let session_key = ContentKey::generate(rng);
    let hello = cipher::hybrid_seal(&params, store.server_public_key(), session_key.as_bytes(), rng);
    let (resp, _) = store.handle_at(now, &ClientFrame::CreateAddress { hello });
    let ServerFrame::CreatedBlob { blob } = resp else { panic!("expected blob, got {resp:?}") };
    CreationGrant::from_bytes(&cipher::open(&session_key, &blob).unwrap()).unwrap()
}

fn finish_creation(
    store: &mut AddressStore,
    now: u64,
    grant: &CreationGrant,
    p_r: AddressKeyPublic,
    p_w: AddressKeyPublic,
    p_o: AddressKeyPublic,
) {
    let params = store.params().clone();
    let (resp, _) =
        store.handle_at(now, &ClientFrame::UpdateAddress { c: grant.c, p_r, p_w, p_o });
    let ServerFrame::ChallengeIssued { session, c0, c1 } = resp else {
        panic!("expected ownership challenge, got {resp:?}")
    };
    let secret = SecretExponent::new(&params, grant.o.clone()).unwrap();
    let value = solve_challenge(&params, &secret, &veilbox_core::group::Challenge { c0, c1 }).unwrap();
    let (resp, _) = store.handle_at(now, &ClientFrame::ChallengeAnswer { session, value });
    assert_eq!(resp, ServerFrame::AddressCreated { c: grant.c });
}

/// Answers an open challenge with the given secret; returns the response.
fn answer_with(
    store: &mut AddressStore,
    now: u64,
    resp: ServerFrame,
    secret: &SecretExponent,
) -> ServerFrame {
    let params = store.params().clone();
    let ServerFrame::ChallengeIssued { session, c0, c1 } = resp else {
        panic!("expected challenge, got {resp:?}")
    };
    let value =
        solve_challenge(&params, secret, &veilbox_core::group::Challenge { c0, c1 }).unwrap();
    store.handle_at(now, &ClientFrame::ChallengeAnswer { session, value }).0
}

#[test]
fn creation_grant_secrets_are_in_range() {
    let mut store = test_store(1);
    let mut rng = client_rng();
    let grant = begin_creation(&mut store, 0, &mut rng);
    let q = store.params().order().clone();
    for secret in [&grant.r, &grant.w, &grant.o] {
        assert!(*secret < q && *secret > BigUint::from(0u32));
    }
}

#[test]
fn two_creations_get_distinct_addresses() {
    let mut store = test_store(2);
    let mut rng = client_rng();
    let a = begin_creation(&mut store, 0, &mut rng);
    let b = begin_creation(&mut store, 0, &mut rng);
    assert_ne!(a.c, b.c);
}

#[test]
fn pending_creation_expires() {
    let mut store = test_store(3);
    let mut rng = client_rng();
    let ttl = store.config().pending_creation_ttl_ms;
    let grant = begin_creation(&mut store, 0, &mut rng);
    // After expiry the pending slot is gone: the first update says so.
    let (resp, _) = store.handle_at(
        ttl + 1,
        &ClientFrame::UpdateAddress {
            c: grant.c,
            p_r: wildcard(),
            p_w: wildcard(),
            p_o: AddressKeyPublic::Element(store.params().generator_pow(&BigUint::from(6u32))),
        },
    );
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::NoSuchAddress, .. }));
    // A replayed creation yields a fresh address.
    let again = begin_creation(&mut store, ttl + 1, &mut rng);
    assert_ne!(again.c, grant.c);
}

#[test]
fn rekey_revokes_old_read_secret() {
    let mut store = test_store(4);
    let mut rng = client_rng();
    let params = store.params().clone();
    let (old_r, old_r_pub) = keygen(&params, &mut rng);
    let (owner, owner_pub) = keygen(&params, &mut rng);
    let c = create_address(&mut store, 0, &mut rng, old_r_pub, wildcard(), owner_pub.clone());

    // Reads pass with the old secret.
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 0 });
    let resp = answer_with(&mut store, 0, resp, &old_r);
    assert!(matches!(resp, ServerFrame::Messages { .. }));

    // Owner rotates the read key.
    let (new_r, new_r_pub) = keygen(&params, &mut rng);
    let (resp, _) = store.handle_at(
        0,
        &ClientFrame::UpdateAddress { c, p_r: new_r_pub, p_w: wildcard(), p_o: owner_pub },
    );
    let resp = answer_with(&mut store, 0, resp, &owner);
    assert_eq!(resp, ServerFrame::AddressCreated { c });

    // The old secret now fails; the new one passes.
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 0 });
    let resp = answer_with(&mut store, 0, resp, &old_r);
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::AccessDenied, .. }));
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 0 });
    let resp = answer_with(&mut store, 0, resp, &new_r);
    assert!(matches!(resp, ServerFrame::Messages { .. }));
}

#[test]
fn wrong_answer_leaves_keys_unchanged() {
    let mut store = test_store(5);
    let mut rng = client_rng();
    let params = store.params().clone();
    let (_, r_pub) = keygen(&params, &mut rng);
    let (_, owner_pub) = keygen(&params, &mut rng);
    let c = create_address(&mut store, 0, &mut rng, r_pub, wildcard(), owner_pub.clone());
    let before = store.record_view(&c).unwrap();

    let (wrong, _) = keygen(&params, &mut rng);
    let (resp, _) = store.handle_at(
        0,
        &ClientFrame::UpdateAddress { c, p_r: wildcard(), p_w: wildcard(), p_o: owner_pub },
    );
    let resp = answer_with(&mut store, 0, resp, &wrong);
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::AccessDenied, .. }));
    assert_eq!(store.record_view(&c).unwrap(), before);
}

#[test]
fn wildcard_read_serves_without_challenge() {
    let mut store = test_store(6);
    let mut rng = client_rng();
    let (_, owner_pub) = keygen(&store.params().clone(), &mut rng);
    let c = create_address(&mut store, 0, &mut rng, wildcard(), wildcard(), owner_pub);

    let (resp, _) = store.handle_at(0, &ClientFrame::WriteAddress { c, payload: b"post".to_vec() });
    assert_eq!(resp, ServerFrame::Ack);
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 0 });
    assert_eq!(
        resp,
        ServerFrame::Messages { next_cursor: 1, payloads: vec![b"post".to_vec()] }
    );
}

#[test]
fn gated_write_discards_payload_on_denial() {
    let mut store = test_store(7);
    let mut rng = client_rng();
    let params = store.params().clone();
    let (_, w_pub) = keygen(&params, &mut rng);
    let (_, owner_pub) = keygen(&params, &mut rng);
    let c = create_address(&mut store, 0, &mut rng, wildcard(), w_pub, owner_pub);

    let (wrong, _) = keygen(&params, &mut rng);
    let (resp, _) =
        store.handle_at(0, &ClientFrame::WriteAddress { c, payload: b"intruder".to_vec() });
    let resp = answer_with(&mut store, 0, resp, &wrong);
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::AccessDenied, .. }));
    assert!(store.record_view(&c).unwrap().messages.is_empty());
}

#[test]
fn oversize_payload_rejected() {
    let mut store = test_store(8);
    let mut rng = client_rng();
    let (_, owner_pub) = keygen(&store.params().clone(), &mut rng);
    let c = create_address(&mut store, 0, &mut rng, wildcard(), wildcard(), owner_pub);
    let max = store.config().max_payload;
    let (resp, _) =
        store.handle_at(0, &ClientFrame::WriteAddress { c, payload: vec![0; max + 1] });
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::TooLarge, .. }));
    let (resp, _) = store.handle_at(0, &ClientFrame::WriteAddress { c, payload: vec![0; max] });
    assert_eq!(resp, ServerFrame::Ack);
}

#[test]
fn concurrent_writers_lose_nothing() {
    let mut store = test_store(9);
    let mut rng = client_rng();
    let (_, owner_pub) = keygen(&store.params().clone(), &mut rng);
    let c = create_address(&mut store, 0, &mut rng, wildcard(), wildcard(), owner_pub);

    let store = Arc::new(Mutex::new(store));
    let mut handles = Vec::new();
    for i in 0..100u32 {
        let store = Arc::clone(&store);
        handles.push(std::thread::spawn(move || {
            let payload = format!("writer {i}").into_bytes();
            let (resp, _) =
                store.lock().unwrap().handle_at(0, &ClientFrame::WriteAddress { c, payload });
            assert_eq!(resp, ServerFrame::Ack);
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
    let store = store.lock().unwrap();
    let view = store.record_view(&c).unwrap();
    assert_eq!(view.messages.len(), 100);
    let unique: std::collections::HashSet<_> =
        view.messages.iter().map(|(_, p)| p.clone()).collect();
    assert_eq!(unique.len(), 100);
}

#[test]
fn session_is_single_use_and_expires() {
    let mut store = test_store(10);
    let mut rng = client_rng();
    let params = store.params().clone();
    let (r, r_pub) = keygen(&params, &mut rng);
    let (_, owner_pub) = keygen(&params, &mut rng);
    let c = create_address(&mut store, 0, &mut rng, r_pub, wildcard(), owner_pub);

    // Reuse: answer twice with the same session id.
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 0 });
    let ServerFrame::ChallengeIssued { session, c0, c1 } = resp else { panic!() };
    let value = solve_challenge(&params, &r, &veilbox_core::group::Challenge { c0, c1 }).unwrap();
    let (first, _) =
        store.handle_at(0, &ClientFrame::ChallengeAnswer { session, value: value.clone() });
    assert!(matches!(first, ServerFrame::Messages { .. }));
    let (second, _) = store.handle_at(0, &ClientFrame::ChallengeAnswer { session, value });
    assert!(matches!(second, ServerFrame::Error { code: ErrorCode::UnknownSession, .. }));

    // Expiry: answer after the TTL.
    let ttl = store.config().challenge_ttl_ms;
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 0 });
    let ServerFrame::ChallengeIssued { session, c0, c1 } = resp else { panic!() };
    let value = solve_challenge(&params, &r, &veilbox_core::group::Challenge { c0, c1 }).unwrap();
    let (resp, _) = store.handle_at(ttl + 1, &ClientFrame::ChallengeAnswer { session, value });
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::ChallengeExpired, .. }));
}

#[test]
fn cursor_pagination_and_truncate() {
    let mut store = test_store(11);
    let mut rng = client_rng();
    let params = store.params().clone();
    let (owner, owner_pub) = keygen(&params, &mut rng);
    let c = create_address(&mut store, 0, &mut rng, wildcard(), wildcard(), owner_pub);

    for i in 0u8..5 {
        store.handle_at(0, &ClientFrame::WriteAddress { c, payload: vec![i] });
    }
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 3 });
    assert_eq!(
        resp,
        ServerFrame::Messages { next_cursor: 5, payloads: vec![vec![3], vec![4]] }
    );

    // Truncation is owner-gated and removes only seq < upto.
    let (resp, _) = store.handle_at(0, &ClientFrame::TruncateAddress { c, upto: 4 });
    let resp = answer_with(&mut store, 0, resp, &owner);
    assert_eq!(resp, ServerFrame::Ack);
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 0 });
    assert_eq!(resp, ServerFrame::Messages { next_cursor: 5, payloads: vec![vec![4]] });

    // Sequence numbers keep rising after truncation.
    store.handle_at(0, &ClientFrame::WriteAddress { c, payload: vec![9] });
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c, cursor: 5 });
    assert_eq!(resp, ServerFrame::Messages { next_cursor: 6, payloads: vec![vec![9]] });
}

#[test]
fn unknown_addresses_probe_identically() {
    let mut store = test_store(12);
    let c = AddressId([0x42; 16]);
    for frame in [
        ClientFrame::ReadAddress { c, cursor: 0 },
        ClientFrame::WriteAddress { c, payload: vec![1] },
        ClientFrame::TruncateAddress { c, upto: 0 },
        ClientFrame::UpdateAddress {
            c,
            p_r: wildcard(),
            p_w: wildcard(),
            p_o: AddressKeyPublic::Element(store.params().generator_pow(&BigUint::from(2u32))),
        },
    ] {
        let (resp, _) = store.handle_at(0, &frame);
        let ServerFrame::Error { code, detail } = resp else { panic!("expected error") };
        assert_eq!(code, ErrorCode::NoSuchAddress);
        assert!(detail.is_empty(), "probing detail must not differ");
    }
}

#[test]
fn wildcard_owner_needs_explicit_opt_in() {
    let mut store = test_store(13);
    let mut rng = client_rng();
    let grant = begin_creation(&mut store, 0, &mut rng);
    let (resp, _) = store.handle_at(
        0,
        &ClientFrame::UpdateAddress {
            c: grant.c,
            p_r: wildcard(),
            p_w: wildcard(),
            p_o: wildcard(),
        },
    );
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::WildcardForbidden, .. }));

    let mut cfg = StoreConfig::new(GroupParams::test_small());
    cfg.allow_wildcard_owner = true;
    let mut permissive =
        AddressStore::with_fresh_key(cfg, Box::new(ChaCha20Rng::seed_from_u64(99)));
    let grant = begin_creation(&mut permissive, 0, &mut rng);
    finish_creation(&mut permissive, 0, &grant, wildcard(), wildcard(), wildcard());
    // With a wildcard owner, further updates run unchallenged.
    let (resp, _) = permissive.handle_at(
        0,
        &ClientFrame::UpdateAddress {
            c: grant.c,
            p_r: wildcard(),
            p_w: wildcard(),
            p_o: wildcard(),
        },
    );
    assert_eq!(resp, ServerFrame::AddressCreated { c: grant.c });
}

#[test]
fn bad_hello_rejected() {
    let mut store = test_store(14);
    let (resp, _) = store.handle_at(0, &ClientFrame::CreateAddress { hello: vec![1, 2, 3] });
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::BadRequest, .. }));
}

#[test]
fn non_subgroup_update_keys_rejected() {
    let mut store = test_store(15);
    let mut rng = client_rng();
    let grant = begin_creation(&mut store, 0, &mut rng);
    // 7 is not in the order-11 subgroup mod 23.
    let (resp, _) = store.handle_at(
        0,
        &ClientFrame::UpdateAddress {
            c: grant.c,
            p_r: AddressKeyPublic::Element(BigUint::from(7u32)),
            p_w: wildcard(),
            p_o: AddressKeyPublic::Element(store.params().generator_pow(&BigUint::from(2u32))),
        },
    );
    assert!(matches!(resp, ServerFrame::Error { code: ErrorCode::BadRequest, .. }));
}

#[test]
fn snapshot_round_trips_and_excludes_sessions() {
    let mut store = test_store(16);
    let mut rng = client_rng();
    let params = store.params().clone();
    let (r, r_pub) = keygen(&params, &mut rng);
    let (_, owner_pub) = keygen(&params, &mut rng);
    let gated = create_address(&mut store, 0, &mut rng, r_pub, wildcard(), owner_pub.clone());
    let open = create_address(&mut store, 0, &mut rng, wildcard(), wildcard(), owner_pub);
    store.handle_at(0, &ClientFrame::WriteAddress { c: gated, payload: b"one".to_vec() });
    store.handle_at(0, &ClientFrame::WriteAddress { c: open, payload: b"two".to_vec() });

    // Leave a dangling session and a pending creation; neither may persist.
    let (resp, _) = store.handle_at(0, &ClientFrame::ReadAddress { c: gated, cursor: 0 });
    let ServerFrame::ChallengeIssued { session, .. } = resp else { panic!() };
    begin_creation(&mut store, 0, &mut rng);

    let snap = store.snapshot();
    let text = String::from_utf8(snap.clone()).unwrap();
    assert!(!text.contains(&session.to_string()), "sessions must not be persisted");
    assert_eq!(text.matches("addr ").count(), 2, "only committed records persist");

    let restored = AddressStore::restore(
        StoreConfig::new(params.clone()),
        veilbox_core::cipher::HybridSecretKey::from_hex("5").unwrap(),
        Box::new(ChaCha20Rng::seed_from_u64(1)),
        &snap,
    )
    .unwrap();
    assert_eq!(restored.record_view(&gated), store.record_view(&gated));
    assert_eq!(restored.record_view(&open), store.record_view(&open));

    // The restored store still enforces the same read key.
    let mut restored = restored;
    let (resp, _) = restored.handle_at(0, &ClientFrame::ReadAddress { c: gated, cursor: 0 });
    let resp = answer_with(&mut restored, 0, resp, &r);
    assert_eq!(
        resp,
        ServerFrame::Messages { next_cursor: 1, payloads: vec![b"one".to_vec()] }
    );
}

#[test]
fn empty_and_corrupt_snapshots() {
    let store = test_store(17);
    let snap = store.snapshot();
    let restored = AddressStore::restore(
        StoreConfig::new(GroupParams::test_small()),
        veilbox_core::cipher::HybridSecretKey::from_hex("5").unwrap(),
        Box::new(ChaCha20Rng::seed_from_u64(1)),
        &snap,
    )
    .unwrap();
    assert_eq!(restored.address_count(), 0);

    for bad in [
        &b"garbage"[..],
        &b"veilbox-store 1\n"[..],
        // wrong group (p=29)
        &b"veilbox-store 1\ngroup 1d b 4\nend\n"[..],
        // truncated: missing end marker
        &snap[..snap.len() - 2],
    ] {
        assert!(
            AddressStore::restore(
                StoreConfig::new(GroupParams::test_small()),
                veilbox_core::cipher::HybridSecretKey::from_hex("5").unwrap(),
                Box::new(ChaCha20Rng::seed_from_u64(1)),
                bad,
            )
            .is_err(),
            "accepted corrupt snapshot {bad:?}"
        );
    }
}
