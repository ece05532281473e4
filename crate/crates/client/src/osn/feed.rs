//! Feeds and pinboards: list-of-posts addresses with a content key per
//! audience. A pinboard is simply a feed whose write key is the wildcard.

use rand::RngCore;

use veilbox_core::cipher::ContentKey;

use crate::engine::{AddressSecrets, KeyChoice, Session};
use crate::osn::records::{KeyId, SealedPayload};
use crate::transport::ClientError;

#[derive(Debug, Clone, PartialEq)]
pub struct FeedState {
    pub label: String,
    pub address: AddressSecrets,
    pub key_id: KeyId,
    pub key: ContentKey,
    pub pinboard: bool,
}

/// Creates a feed address. `pinboard` leaves the write key open so
/// strangers can post.
pub fn create_feed(
    session: &mut Session<'_>,
    label: &str,
    key_id: KeyId,
    pinboard: bool,
    rng: &mut dyn RngCore,
) -> Result<FeedState, ClientError> {
    let write = if pinboard { KeyChoice::Open } else { KeyChoice::Gated };
    let address = session.create_address(KeyChoice::Gated, write, KeyChoice::Gated, rng)?;
    Ok(FeedState {
        label: label.to_string(),
        address,
        key_id,
        key: ContentKey::generate(rng),
        pinboard,
    })
}

/// Seals `content` under the feed key and appends it.
pub fn post_to_feed(
    session: &mut Session<'_>,
    feed: &FeedState,
    content: &str,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let record = SealedPayload::Post { text: content.to_string() }
        .seal_tagged(feed.key_id, &feed.key, rng);
    session.write_raw(feed.address.c, feed.address.write_secret(), record.to_bytes())
}

/// Posting path for a non-owner who was handed the feed's key (and, for a
/// gated pinboard, nothing else: the wildcard write needs no secret).
pub fn post_as_visitor(
    session: &mut Session<'_>,
    address: veilbox_core::wire::AddressId,
    key_id: KeyId,
    key: &ContentKey,
    content: &str,
    rng: &mut dyn RngCore,
) -> Result<(), ClientError> {
    let record = SealedPayload::Post { text: content.to_string() }.seal_tagged(key_id, key, rng);
    session.write_raw(address, None, record.to_bytes())
}
