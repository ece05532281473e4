//! The concealed-address server: opaque addressed mailboxes guarded by
//! discrete-log challenge-response proofs, plus the TCP front end, plain
//! config format, and access-control audit tooling.

pub mod audit;
pub mod config;
pub mod net;
pub mod store;

pub use config::ServerConfig;
pub use store::{AddressStore, Permission, RecordView, StoreConfig, StoreDelta, Timestamp};
