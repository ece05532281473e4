//! Content encryption: one authenticated symmetric scheme and one hybrid
//! public-key scheme, fixed by [`SUITE`].
//!
//! The hybrid scheme is an ElGamal-style KEM over the same Schnorr group
//! the address keys live in: the sender picks an ephemeral exponent `e`,
//! transmits `g^e`, and both sides derive the content key from
//! `pk^e = (g^e)^sk` by hashing.

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use num_bigint::BigUint;
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{parse_biguint_hex, GroupError, GroupParams};

/// Cipher-suite identifier baked into every KEM derivation. There is no
/// negotiation; peers on different suites simply fail to decrypt.
pub const SUITE: &str = "veilbox/1:modp-elgamal+chacha20poly1305";

/// Symmetric key length for the suite.
pub const CONTENT_KEY_LEN: usize = 32;

const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

/// Constant size added by `seal` on top of the plaintext.
pub const SEAL_OVERHEAD: usize = NONCE_LEN + TAG_LEN;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CipherError {
    #[error("decryption failed")]
    Decrypt,
    #[error("ciphertext too short")]
    Truncated,
    #[error("bad key encoding: {0}")]
    BadKey(String),
}

/// A symmetric content key.
#[derive(Clone, PartialEq, Eq)]
pub struct ContentKey([u8; CONTENT_KEY_LEN]);

impl ContentKey {
    pub fn generate(rng: &mut dyn RngCore) -> Self {
        let mut bytes = [0u8; CONTENT_KEY_LEN];
        rng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn from_bytes(bytes: [u8; CONTENT_KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; CONTENT_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CipherError> {
        let v = hex::decode(s).map_err(|e| CipherError::BadKey(e.to_string()))?;
        let arr: [u8; CONTENT_KEY_LEN] =
            v.try_into().map_err(|_| CipherError::BadKey("wrong length".into()))?;
        Ok(Self(arr))
    }
}

impl std::fmt::Debug for ContentKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ContentKey(<redacted>)")
    }
}

/// Authenticated encryption under a content key. Output layout:
/// `nonce (12) || ciphertext+tag`.
pub fn seal(key: &ContentKey, plaintext: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(key.0.as_slice().into());
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

/// Inverse of [`seal`]; rejects any tampered ciphertext.
pub fn open(key: &ContentKey, sealed: &[u8]) -> Result<Vec<u8>, CipherError> {
    if sealed.len() < NONCE_LEN + TAG_LEN {
        return Err(CipherError::Truncated);
    }
    let (nonce, ct) = sealed.split_at(NONCE_LEN);
    let cipher = ChaCha20Poly1305::new(key.0.as_slice().into());
    cipher
        .decrypt(Nonce::from_slice(nonce), ct)
        .map_err(|_| CipherError::Decrypt)
}

/// Secret half of a hybrid keypair: an exponent in [1, q-1].
#[derive(Clone, PartialEq, Eq)]
pub struct HybridSecretKey(BigUint);

impl std::fmt::Debug for HybridSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "HybridSecretKey(<redacted>)")
    }
}

/// Public half of a hybrid keypair: `g^sk` in the group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HybridPublicKey(BigUint);

impl HybridSecretKey {
    pub fn exponent(&self) -> &BigUint {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16)
    }

    pub fn from_hex(s: &str) -> Result<Self, GroupError> {
        Ok(Self(parse_biguint_hex(s)?))
    }

    pub fn public(&self, params: &GroupParams) -> HybridPublicKey {
        HybridPublicKey(params.generator_pow(&self.0))
    }
}

impl HybridPublicKey {
    pub fn element(&self) -> &BigUint {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16)
    }

    pub fn from_hex(s: &str) -> Result<Self, GroupError> {
        Ok(Self(parse_biguint_hex(s)?))
    }

    /// Canonical fixed-width bytes, suitable for fingerprinting.
    pub fn to_fixed_bytes(&self, params: &GroupParams) -> Vec<u8> {
        fixed_bytes(&self.0, params)
    }
}

pub fn hybrid_keygen(
    params: &GroupParams,
    rng: &mut dyn RngCore,
) -> (HybridSecretKey, HybridPublicKey) {
    let sk = params.random_exponent(rng);
    let pk = params.generator_pow(&sk);
    (HybridSecretKey(sk), HybridPublicKey(pk))
}

/// Big-endian bytes left-padded to the modulus width, so KEM shares and
/// KDF inputs have one canonical length per group.
fn fixed_bytes(e: &BigUint, params: &GroupParams) -> Vec<u8> {
    let width = (params.modulus().bits() as usize + 7) / 8;
    let raw = e.to_bytes_be();
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

fn kem_derive(params: &GroupParams, ephemeral: &BigUint, shared: &BigUint) -> ContentKey {
    let mut h = Sha256::new();
    h.update(SUITE.as_bytes());
    h.update(fixed_bytes(ephemeral, params));
    h.update(fixed_bytes(shared, params));
    ContentKey(h.finalize().into())
}

/// Constant size added by `hybrid_seal` on top of the plaintext, for a
/// given group.
pub fn hybrid_overhead(params: &GroupParams) -> usize {
    (params.modulus().bits() as usize + 7) / 8 + SEAL_OVERHEAD
}

/// Randomized public-key authenticated encryption. Output layout:
/// `g^e (modulus width) || seal(H(suite, g^e, pk^e), plaintext)`.
pub fn hybrid_seal(
    params: &GroupParams,
    recipient: &HybridPublicKey,
    plaintext: &[u8],
    rng: &mut dyn RngCore,
) -> Vec<u8> {
    let e = params.random_exponent(rng);
    let ephemeral = params.generator_pow(&e);
    let shared = params.pow(&recipient.0, &e);
    let key = kem_derive(params, &ephemeral, &shared);
    let mut out = fixed_bytes(&ephemeral, params);
    out.extend_from_slice(&seal(&key, plaintext, rng));
    out
}

/// Inverse of [`hybrid_seal`] for the holder of the secret exponent.
pub fn hybrid_open(
    params: &GroupParams,
    secret: &HybridSecretKey,
    sealed: &[u8],
) -> Result<Vec<u8>, CipherError> {
    let width = (params.modulus().bits() as usize + 7) / 8;
    if sealed.len() < width + SEAL_OVERHEAD {
        return Err(CipherError::Truncated);
    }
    let (eph_bytes, rest) = sealed.split_at(width);
    let ephemeral = BigUint::from_bytes_be(eph_bytes);
    if ephemeral >= *params.modulus() {
        return Err(CipherError::Decrypt);
    }
    let shared = params.pow(&ephemeral, &secret.0);
    let key = kem_derive(params, &ephemeral, &shared);
    open(&key, rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(11)
    }

    #[test]
    fn seal_round_trip() {
        let mut rng = rng();
        let key = ContentKey::generate(&mut rng);
        let ct = seal(&key, b"abc", &mut rng);
        assert_eq!(open(&key, &ct).unwrap(), b"abc");
    }

    #[test]
    fn wrong_key_rejected() {
        let mut rng = rng();
        let key = ContentKey::generate(&mut rng);
        let other = ContentKey::generate(&mut rng);
        let ct = seal(&key, b"abc", &mut rng);
        assert_eq!(open(&other, &ct).unwrap_err(), CipherError::Decrypt);
    }

    #[test]
    fn seal_overhead_is_constant() {
        let mut rng = rng();
        let key = ContentKey::generate(&mut rng);
        for len in [0usize, 1, 100, 4096] {
            let ct = seal(&key, &vec![0u8; len], &mut rng);
            assert_eq!(ct.len(), len + SEAL_OVERHEAD);
        }
    }

    #[test]
    fn single_bit_mutation_rejected() {
        let mut rng = rng();
        let key = ContentKey::generate(&mut rng);
        let ct = seal(&key, b"payload bytes", &mut rng);
        for i in 0..ct.len() {
            let mut bad = ct.clone();
            bad[i] ^= 1;
            assert!(open(&key, &bad).is_err(), "bit flip at byte {i} accepted");
        }
    }

    #[test]
    fn hybrid_round_trip() {
        let params = GroupParams::modp_768();
        let mut rng = rng();
        let (sk, pk) = hybrid_keygen(params, &mut rng);
        let ct = hybrid_seal(params, &pk, b"hello", &mut rng);
        assert_eq!(hybrid_open(params, &sk, &ct).unwrap(), b"hello");
        assert_eq!(ct.len(), 5 + hybrid_overhead(params));
    }

    #[test]
    fn hybrid_wrong_secret_rejected() {
        let params = GroupParams::modp_768();
        let mut rng = rng();
        let (_, pk) = hybrid_keygen(params, &mut rng);
        let (other_sk, _) = hybrid_keygen(params, &mut rng);
        let ct = hybrid_seal(params, &pk, b"hello", &mut rng);
        assert_eq!(hybrid_open(params, &other_sk, &ct).unwrap_err(), CipherError::Decrypt);
    }

    #[test]
    fn hybrid_seal_is_randomized() {
        let params = GroupParams::modp_768();
        let mut rng = rng();
        let (_, pk) = hybrid_keygen(params, &mut rng);
        let a = hybrid_seal(params, &pk, b"same plaintext", &mut rng);
        let b = hybrid_seal(params, &pk, b"same plaintext", &mut rng);
        assert_ne!(a, b);
    }

    #[test]
    fn hybrid_tamper_rejected() {
        let params = GroupParams::modp_768();
        let mut rng = rng();
        let (sk, pk) = hybrid_keygen(params, &mut rng);
        let ct = hybrid_seal(params, &pk, b"payload", &mut rng);
        for i in (0..ct.len()).step_by(13) {
            let mut bad = ct.clone();
            bad[i] ^= 0x80;
            assert!(hybrid_open(params, &sk, &bad).is_err());
        }
    }

    #[test]
    fn content_key_hex_round_trip() {
        let mut rng = rng();
        let key = ContentKey::generate(&mut rng);
        assert_eq!(ContentKey::from_hex(&key.to_hex()).unwrap(), key);
        assert!(ContentKey::from_hex("abcd").is_err());
    }
}
