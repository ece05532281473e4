//! OSN semantics on top of concealed addresses: profiles as encrypted
//! linked-address graphs, feeds and pinboards, chats with key rotation,
//! and groups with roles.

pub mod chat;
pub mod feed;
pub mod group;
pub mod profile;
pub mod records;
