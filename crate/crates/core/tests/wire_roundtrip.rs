//! Property tests for the frame codec: decode inverts encode on randomized
//! frames, and the encoding is canonical.

use num_bigint::BigUint;
use proptest::prelude::*;
use veilbox_core::group::AddressKeyPublic;
use veilbox_core::wire::*;

fn address_id() -> impl Strategy<Value = AddressId> {
    any::<[u8; 16]>().prop_map(AddressId)
}

fn session_id() -> impl Strategy<Value = SessionId> {
    any::<[u8; 16]>().prop_map(SessionId)
}

fn element() -> impl Strategy<Value = BigUint> {
    proptest::collection::vec(any::<u8>(), 1..64)
        .prop_map(|bytes| BigUint::from_bytes_be(&bytes))
}

fn address_key() -> impl Strategy<Value = AddressKeyPublic> {
    prop_oneof![
        Just(AddressKeyPublic::Wildcard),
        // avoid the reserved element 1
        element().prop_map(|e| if e == BigUint::from(1u32) {
            AddressKeyPublic::Element(BigUint::from(2u32))
        } else {
            AddressKeyPublic::Element(e)
        }),
    ]
}

fn payload() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(any::<u8>(), 0..200)
}

fn client_frame() -> impl Strategy<Value = ClientFrame> {
    prop_oneof![
        payload().prop_map(|hello| ClientFrame::CreateAddress { hello }),
        (address_id(), address_key(), address_key(), address_key())
            .prop_map(|(c, p_r, p_w, p_o)| ClientFrame::UpdateAddress { c, p_r, p_w, p_o }),
        (address_id(), any::<u64>()).prop_map(|(c, cursor)| ClientFrame::ReadAddress { c, cursor }),
        (address_id(), payload()).prop_map(|(c, payload)| ClientFrame::WriteAddress { c, payload }),
        (address_id(), any::<u64>()).prop_map(|(c, upto)| ClientFrame::TruncateAddress { c, upto }),
        (session_id(), element())
            .prop_map(|(session, value)| ClientFrame::ChallengeAnswer { session, value }),
    ]
}

fn error_code() -> impl Strategy<Value = ErrorCode> {
    prop_oneof![
        Just(ErrorCode::NoSuchAddress),
        Just(ErrorCode::ChallengeExpired),
        Just(ErrorCode::UnknownSession),
        Just(ErrorCode::AccessDenied),
        Just(ErrorCode::TooLarge),
        Just(ErrorCode::WildcardForbidden),
        Just(ErrorCode::BadRequest),
        Just(ErrorCode::Internal),
    ]
}

fn server_frame() -> impl Strategy<Value = ServerFrame> {
    prop_oneof![
        address_id().prop_map(|c| ServerFrame::AddressCreated { c }),
        payload().prop_map(|blob| ServerFrame::CreatedBlob { blob }),
        (session_id(), element(), element())
            .prop_map(|(session, c0, c1)| ServerFrame::ChallengeIssued { session, c0, c1 }),
        (any::<u64>(), proptest::collection::vec(payload(), 0..8))
            .prop_map(|(next_cursor, payloads)| ServerFrame::Messages { next_cursor, payloads }),
        Just(ServerFrame::Ack),
        (error_code(), "[a-z ]{0,30}")
            .prop_map(|(code, detail)| ServerFrame::Error { code, detail }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn client_frames_round_trip(frame in client_frame()) {
        let line = frame.encode();
        prop_assert_eq!(ClientFrame::decode(&line).unwrap(), frame.clone());
        // canonical: one byte string per frame value
        prop_assert_eq!(ClientFrame::decode(&line).unwrap().encode(), line);
    }

    #[test]
    fn server_frames_round_trip(frame in server_frame()) {
        let line = frame.encode();
        prop_assert_eq!(ServerFrame::decode(&line).unwrap(), frame.clone());
        prop_assert_eq!(ServerFrame::decode(&line).unwrap().encode(), line);
    }

    #[test]
    fn decoder_never_panics_on_junk(line in "[ -~]{0,120}") {
        let _ = ClientFrame::decode(&line);
        let _ = ServerFrame::decode(&line);
    }
}
