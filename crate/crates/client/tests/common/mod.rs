//! In-process transport over a shared store, for client tests.

use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use veilbox_client::transport::{ClientError, Transport};
use veilbox_client::Session;
use veilbox_core::cipher::HybridPublicKey;
use veilbox_core::group::GroupParams;
use veilbox_core::wire::{ClientFrame, ServerFrame};
use veilbox_server::store::{AddressStore, StoreConfig};

pub struct SharedStore {
    pub store: Arc<Mutex<AddressStore>>,
    pub clock: Arc<Mutex<u64>>,
    pub params: GroupParams,
    pub server_key: HybridPublicKey,
}

impl SharedStore {
    pub fn new(params: GroupParams, seed: u64) -> Self {
        let store = AddressStore::with_fresh_key(
            StoreConfig::new(params.clone()),
            Box::new(ChaCha20Rng::seed_from_u64(seed)),
        );
        let server_key = store.server_public_key().clone();
        Self {
            store: Arc::new(Mutex::new(store)),
            clock: Arc::new(Mutex::new(0)),
            params,
            server_key,
        }
    }

    pub fn transport(&self) -> LocalTransport {
        LocalTransport { store: Arc::clone(&self.store), clock: Arc::clone(&self.clock) }
    }

    pub fn advance_clock(&self, ms: u64) {
        *self.clock.lock().unwrap() += ms;
    }

    pub fn session<'t>(&self, transport: &'t mut LocalTransport) -> Session<'t> {
        Session::new(self.params.clone(), self.server_key.clone(), transport)
    }

    pub fn session_any<'t>(&self, transport: &'t mut dyn Transport) -> Session<'t> {
        Session::new(self.params.clone(), self.server_key.clone(), transport)
    }
}

pub struct LocalTransport {
    store: Arc<Mutex<AddressStore>>,
    clock: Arc<Mutex<u64>>,
}

impl Transport for LocalTransport {
    fn round_trip(&mut self, frame: &ClientFrame) -> Result<ServerFrame, ClientError> {
        let now = *self.clock.lock().unwrap();
        let (resp, _) = self.store.lock().unwrap().handle_at(now, frame);
        Ok(resp)
    }
}

/// A transport that fails writes while the flag is set; everything else
/// passes through.
pub struct FlakyTransport {
    pub inner: LocalTransport,
    pub fail_writes: bool,
}

impl Transport for FlakyTransport {
    fn round_trip(&mut self, frame: &ClientFrame) -> Result<ServerFrame, ClientError> {
        if self.fail_writes && matches!(frame, ClientFrame::WriteAddress { .. }) {
            return Err(ClientError::State("injected write failure".into()));
        }
        self.inner.round_trip(frame)
    }
}
