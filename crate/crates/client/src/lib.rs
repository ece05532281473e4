//! Client-side protocol engine: address lifecycle, challenge solving,
//! onion construction, mixes, keyrings, and the OSN layer built from
//! concealed addresses.

pub mod directory;
pub mod engine;
pub mod keyring;
pub mod messaging;
pub mod mix;
pub mod onion;
pub mod osn;
pub mod transport;

pub use engine::{AddressSecrets, KeyChoice, Received, Session};
pub use keyring::{Contact, ContactBlob, Keyring};
pub use transport::{ClientError, TcpTransport, Transport};
