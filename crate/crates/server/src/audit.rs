//! Independent access-control auditing.
//!
//! The oracle here decides challenge answers by enumerating all `q`
//! exponents of the test group rather than by unblinding, and the small
//! model replays every frame sequence up to a given length against both
//! the real store and a from-scratch reference state machine. Any
//! divergence in grant/deny decisions or resulting record state is a bug
//! in one of them.

use num_bigint::BigUint;
use num_traits::One;
use rand::SeedableRng;

use veilbox_core::cipher::{self, ContentKey};
use veilbox_core::group::{AddressKeyPublic, GroupParams};
use veilbox_core::wire::{AddressId, ClientFrame, CreationGrant, ErrorCode, ServerFrame, SessionId};

use crate::store::{AddressStore, RecordView, StoreConfig, Timestamp};

/// Finds x in [0, q) with g^x = target by exhaustion. Only sensible for
/// desk-scale groups.
pub fn dlog_by_enumeration(params: &GroupParams, target: &BigUint) -> Option<BigUint> {
    let mut x = BigUint::from(0u32);
    let mut acc = BigUint::one();
    while &x < params.order() {
        if &acc == target {
            return Some(x);
        }
        acc = params.mul(&acc, params.generator());
        x += BigUint::one();
    }
    None
}

/// The unique answer a challenge `(c0, c1)` against `key` accepts,
/// derived without the key holder's secret: enumerate the discrete log of
/// the key, then unmask. Returns `None` if the key is outside the
/// subgroup.
pub fn oracle_expected_nonce(
    params: &GroupParams,
    key: &BigUint,
    c0: &BigUint,
    c1: &BigUint,
) -> Option<BigUint> {
    let x = dlog_by_enumeration(params, key)?;
    let mask = params.pow(c0, &x);
    Some(params.mul(c1, &params.inv(&mask)))
}

/// Symbolic actions the small model enumerates. Session-directed actions
/// resolve against the run's live state, so every sequence is executable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Read,
    Write,
    Update,
    Truncate,
    AnswerCorrect,
    AnswerWrong,
    AnswerJunk,
    AnswerStale,
    AnswerNoSession,
    Tick,
}

const ALL_ACTIONS: [Action; 10] = [
    Action::Read,
    Action::Write,
    Action::Update,
    Action::Truncate,
    Action::AnswerCorrect,
    Action::AnswerWrong,
    Action::AnswerJunk,
    Action::AnswerStale,
    Action::AnswerNoSession,
    Action::Tick,
];

/// Initial key configuration for the single modeled address.
#[derive(Debug, Clone, Copy)]
pub struct KeyConfig {
    pub read_gated: bool,
    pub write_gated: bool,
}

pub const ALL_KEY_CONFIGS: [KeyConfig; 4] = [
    KeyConfig { read_gated: true, write_gated: true },
    KeyConfig { read_gated: true, write_gated: false },
    KeyConfig { read_gated: false, write_gated: true },
    KeyConfig { read_gated: false, write_gated: false },
];

#[derive(Debug, Default, Clone, Copy)]
pub struct SmallModelOutcome {
    pub sequences_run: usize,
    pub grants_observed: usize,
    pub denials_observed: usize,
}

struct ModelSession {
    c0: BigUint,
    c1: BigUint,
    action: Action0,
    expires_at: Timestamp,
}

/// What a granted session would do, in reference-model terms.
#[derive(Debug, Clone)]
enum Action0 {
    Read { cursor: u64 },
    Write { payload: Vec<u8> },
    Update { p_r: AddressKeyPublic, p_w: AddressKeyPublic, p_o: AddressKeyPublic },
    Truncate { upto: u64 },
}

/// Reference model of the one-address store. Kept deliberately naive:
/// plain data, exhaustive-search answers, no shared code with the store's
/// decision path.
struct Model {
    params: GroupParams,
    view: RecordView,
    sessions: Vec<(SessionId, ModelSession)>,
    challenge_ttl_ms: u64,
}

impl Model {
    fn expected(&self, s: &ModelSession) -> BigUint {
        let key = match &s.action {
            Action0::Read { .. } => &self.view.read,
            Action0::Write { .. } => &self.view.write,
            Action0::Update { .. } | Action0::Truncate { .. } => &self.view.own,
        };
        let AddressKeyPublic::Element(e) = key else {
            panic!("model never issues challenges against wildcards");
        };
        oracle_expected_nonce(&self.params, e, &s.c0, &s.c1)
            .expect("stored keys are subgroup elements")
    }

    fn execute(&mut self, action: &Action0) {
        match action {
            Action0::Read { .. } => {}
            Action0::Write { payload } => {
                let seq = self.view.next_seq;
                self.view.next_seq += 1;
                self.view.messages.push((seq, payload.clone()));
            }
            Action0::Update { p_r, p_w, p_o } => {
                self.view.read = p_r.clone();
                self.view.write = p_w.clone();
                self.view.own = p_o.clone();
            }
            Action0::Truncate { upto } => {
                self.view.messages.retain(|(seq, _)| seq >= upto);
            }
        }
    }
}

/// One run state: the real store plus bookkeeping the symbolic actions
/// need (latest open session, consumed sessions, clock).
struct Run {
    store: AddressStore,
    model: Model,
    now: Timestamp,
    c: AddressId,
    latest_open: Option<SessionId>,
    consumed: Vec<SessionId>,
    grants: usize,
    denials: usize,
    any_grant: bool,
    messages_revealed: bool,
}

const TEST_PAYLOAD: &[u8] = b"small-model payload";

fn setup_run(config: KeyConfig, seed: u64) -> Result<Run, String> {
    let params = GroupParams::test_small();
    let store_cfg = StoreConfig::new(params.clone());
    let challenge_ttl_ms = store_cfg.challenge_ttl_ms;
    let rng = Box::new(rand_chacha::ChaCha20Rng::seed_from_u64(seed));
    let mut store = AddressStore::with_fresh_key(store_cfg, rng);

    let mut client_rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed ^ 0xabcd);
    let session_key = ContentKey::generate(&mut client_rng);
    let hello = cipher::hybrid_seal(
        &params,
        store.server_public_key(),
        session_key.as_bytes(),
        &mut client_rng,
    );
    let (resp, _) = store.handle_at(0, &ClientFrame::CreateAddress { hello });
    let ServerFrame::CreatedBlob { blob } = resp else {
        return Err(format!("setup: expected blob, got {resp:?}"));
    };
    let grant = CreationGrant::from_bytes(
        &cipher::open(&session_key, &blob).map_err(|e| format!("setup: {e}"))?,
    )
    .map_err(|e| format!("setup: {e}"))?;
    let c = grant.c;

    // Install initial keys: gated keys use small fixed exponents so the
    // oracle's exhaustion stays readable.
    let key_for = |gated: bool, exp: u32| {
        if gated {
            AddressKeyPublic::Element(params.generator_pow(&BigUint::from(exp)))
        } else {
            AddressKeyPublic::Wildcard
        }
    };
    let p_r = key_for(config.read_gated, 3);
    let p_w = key_for(config.write_gated, 5);
    let p_o = AddressKeyPublic::Element(params.generator_pow(&BigUint::from(7u32)));

    let (resp, _) = store.handle_at(
        0,
        &ClientFrame::UpdateAddress { c, p_r: p_r.clone(), p_w: p_w.clone(), p_o: p_o.clone() },
    );
    let ServerFrame::ChallengeIssued { session, c0, c1 } = resp else {
        return Err(format!("setup: expected ownership challenge, got {resp:?}"));
    };
    // Answer via the enumeration oracle, not the protocol solver. During
    // creation the owner key is the server-chosen g^o.
    let pending_owner = params.generator_pow(&grant.o);
    let value = oracle_expected_nonce(&params, &pending_owner, &c0, &c1)
        .ok_or("setup: oracle failed")?;
    let (resp, _) = store.handle_at(0, &ClientFrame::ChallengeAnswer { session, value });
    if resp != (ServerFrame::AddressCreated { c }) {
        return Err(format!("setup: expected AddressCreated, got {resp:?}"));
    }

    let view = store.record_view(&c).ok_or("setup: record missing")?;
    let model = Model { params, view, sessions: Vec::new(), challenge_ttl_ms };
    Ok(Run {
        store,
        model,
        now: 0,
        c,
        latest_open: None,
        consumed: vec![session],
        grants: 0,
        denials: 0,
        any_grant: false,
        messages_revealed: false,
    })
}

fn step(run: &mut Run, action: Action) -> Result<(), String> {
    let params = run.model.params.clone();
    let c = run.c;

    // Resolve the symbolic action into a concrete frame plus the model's
    // predicted response.
    let (frame, predicted): (ClientFrame, Predicted) = match action {
        Action::Tick => {
            run.now += run.model.challenge_ttl_ms + 1;
            return Ok(());
        }
        Action::Read => {
            let frame = ClientFrame::ReadAddress { c, cursor: 0 };
            if run.model.view.read.is_wildcard() {
                (frame, Predicted::Messages)
            } else {
                (frame, Predicted::Challenge(Action0::Read { cursor: 0 }))
            }
        }
        Action::Write => {
            let frame = ClientFrame::WriteAddress { c, payload: TEST_PAYLOAD.to_vec() };
            if run.model.view.write.is_wildcard() {
                (frame, Predicted::GrantWrite)
            } else {
                (frame, Predicted::Challenge(Action0::Write { payload: TEST_PAYLOAD.to_vec() }))
            }
        }
        Action::Update => {
            let fresh = |e: u32| AddressKeyPublic::Element(params.generator_pow(&BigUint::from(e)));
            let (p_r, p_w, p_o) = (fresh(2), fresh(4), fresh(6));
            let frame =
                ClientFrame::UpdateAddress { c, p_r: p_r.clone(), p_w: p_w.clone(), p_o: p_o.clone() };
            (frame, Predicted::Challenge(Action0::Update { p_r, p_w, p_o }))
        }
        Action::Truncate => {
            let frame = ClientFrame::TruncateAddress { c, upto: 1 };
            (frame, Predicted::Challenge(Action0::Truncate { upto: 1 }))
        }
        Action::AnswerCorrect | Action::AnswerWrong | Action::AnswerJunk => {
            let Some(sid) = run.latest_open else {
                let frame = ClientFrame::ChallengeAnswer {
                    session: SessionId([0xee; 16]),
                    value: BigUint::from(2u32),
                };
                run.latest_open = None;
                let (resp, _) = run.store.handle_at(run.now, &frame);
                return expect_error(resp, ErrorCode::UnknownSession);
            };
            let (pos, (_, msession)) = run
                .model
                .sessions
                .iter()
                .enumerate()
                .find(|(_, (id, _))| *id == sid)
                .ok_or("model lost an open session")?;
            let expected = run.model.expected(msession);
            let value = match action {
                Action::AnswerCorrect => expected.clone(),
                // expected * g stays in the subgroup and differs from expected
                Action::AnswerWrong => params.mul(&expected, params.generator()),
                // 7 is not a quadratic residue mod 23: outside the subgroup
                Action::AnswerJunk => BigUint::from(7u32),
                _ => unreachable!(),
            };
            let frame = ClientFrame::ChallengeAnswer { session: sid, value: value.clone() };
            let expired = msession.expires_at <= run.now;
            let maction = msession.action.clone();
            let (resp, _) = run.store.handle_at(run.now, &frame);
            // The session is consumed by the store whatever happens next.
            run.model.sessions.remove(pos);
            run.latest_open = None;
            run.consumed.push(sid);
            if expired {
                return expect_error(resp, ErrorCode::ChallengeExpired);
            }
            if value != expected {
                run.denials += 1;
                return expect_error(resp, ErrorCode::AccessDenied);
            }
            run.grants += 1;
            run.any_grant = true;
            run.model.execute(&maction);
            return check_granted_response(run, &maction, resp);
        }
        Action::AnswerStale => {
            let session = run.consumed.first().copied().unwrap_or(SessionId([0xdd; 16]));
            let frame = ClientFrame::ChallengeAnswer { session, value: BigUint::from(2u32) };
            let (resp, _) = run.store.handle_at(run.now, &frame);
            return expect_error(resp, ErrorCode::UnknownSession);
        }
        Action::AnswerNoSession => {
            let frame = ClientFrame::ChallengeAnswer {
                session: SessionId([0xcc; 16]),
                value: BigUint::from(2u32),
            };
            let (resp, _) = run.store.handle_at(run.now, &frame);
            return expect_error(resp, ErrorCode::UnknownSession);
        }
    };

    let (resp, _) = run.store.handle_at(run.now, &frame);
    match predicted {
        Predicted::Messages => {
            let ServerFrame::Messages { payloads, .. } = &resp else {
                return Err(format!("expected Messages, got {resp:?}"));
            };
            let want: Vec<Vec<u8>> =
                run.model.view.messages.iter().map(|(_, p)| p.clone()).collect();
            if payloads != &want {
                return Err(format!("payload mismatch: {payloads:?} vs {want:?}"));
            }
            Ok(())
        }
        Predicted::GrantWrite => {
            run.model.execute(&Action0::Write { payload: TEST_PAYLOAD.to_vec() });
            if resp != ServerFrame::Ack {
                return Err(format!("expected Ack for wildcard write, got {resp:?}"));
            }
            Ok(())
        }
        Predicted::Challenge(maction) => {
            let ServerFrame::ChallengeIssued { session, c0, c1 } = resp else {
                return Err(format!("expected challenge, got {resp:?}"));
            };
            run.model.sessions.push((
                session,
                ModelSession {
                    c0,
                    c1,
                    action: maction,
                    expires_at: run.now + run.model.challenge_ttl_ms,
                },
            ));
            run.latest_open = Some(session);
            Ok(())
        }
    }
}

enum Predicted {
    Messages,
    GrantWrite,
    Challenge(Action0),
}

fn expect_error(resp: ServerFrame, code: ErrorCode) -> Result<(), String> {
    match resp {
        ServerFrame::Error { code: got, .. } if got == code => Ok(()),
        other => Err(format!("expected {code:?}, got {other:?}")),
    }
}

fn check_granted_response(
    run: &mut Run,
    action: &Action0,
    resp: ServerFrame,
) -> Result<(), String> {
    match action {
        Action0::Read { .. } => {
            let ServerFrame::Messages { payloads, .. } = &resp else {
                return Err(format!("granted read: expected Messages, got {resp:?}"));
            };
            run.messages_revealed = true;
            let want: Vec<Vec<u8>> =
                run.model.view.messages.iter().map(|(_, p)| p.clone()).collect();
            if payloads != &want {
                return Err(format!("granted read mismatch: {payloads:?} vs {want:?}"));
            }
            Ok(())
        }
        Action0::Write { .. } | Action0::Truncate { .. } => {
            if resp != ServerFrame::Ack {
                return Err(format!("granted op: expected Ack, got {resp:?}"));
            }
            Ok(())
        }
        Action0::Update { .. } => match resp {
            ServerFrame::AddressCreated { .. } => Ok(()),
            other => Err(format!("granted update: expected AddressCreated, got {other:?}")),
        },
    }
}

/// Runs every action sequence of length 1..=`max_len` for every key
/// configuration, comparing the store against the reference model after
/// each step and checking access monotonicity at the end of each run.
pub fn run_small_model(max_len: usize) -> Result<SmallModelOutcome, String> {
    let mut outcome = SmallModelOutcome::default();
    let mut sequence: Vec<Action> = Vec::new();
    for config in ALL_KEY_CONFIGS {
        enumerate(&mut sequence, max_len, &mut |seq| {
            outcome.sequences_run += 1;
            let mut run = setup_run(config, 42)?;
            let initial = run.store.record_view(&run.c).expect("record exists");
            for &action in seq {
                step(&mut run, action).map_err(|e| format!("{config:?} {seq:?}: {e}"))?;
            }
            // Store and model must agree on final record state.
            let store_view = run.store.record_view(&run.c).expect("record exists");
            if store_view != run.model.view {
                return Err(format!(
                    "{config:?} {seq:?}: state diverged\nstore: {store_view:?}\nmodel: {:?}",
                    run.model.view
                ));
            }
            // Access monotonicity: without a granted challenge, keys never
            // change and a gated address never reveals messages.
            if !run.any_grant {
                if store_view.read != initial.read
                    || store_view.write != initial.write
                    || store_view.own != initial.own
                {
                    return Err(format!("{config:?} {seq:?}: keys changed without a grant"));
                }
                if config.read_gated && run.messages_revealed {
                    return Err(format!("{config:?} {seq:?}: messages revealed without a grant"));
                }
            }
            outcome.grants_observed += run.grants;
            outcome.denials_observed += run.denials;
            Ok(())
        })?;
    }
    Ok(outcome)
}

fn enumerate(
    sequence: &mut Vec<Action>,
    max_len: usize,
    visit: &mut impl FnMut(&[Action]) -> Result<(), String>,
) -> Result<(), String> {
    if !sequence.is_empty() {
        visit(sequence)?;
    }
    if sequence.len() == max_len {
        return Ok(());
    }
    for action in ALL_ACTIONS {
        sequence.push(action);
        enumerate(sequence, max_len, visit)?;
        sequence.pop();
    }
    Ok(())
}
