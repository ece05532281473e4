//! Schnorr signatures over the same group as everything else, used where
//! a participant chooses to publish something under their identity (for
//! example a group roster entry).

use num_bigint::BigUint;
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cipher::{HybridPublicKey, HybridSecretKey};
use crate::group::GroupParams;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SigError {
    #[error("malformed signature encoding")]
    Malformed,
}

/// `(commitment, response)` pair; hex-encoded on the wire as `R.s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub commitment: BigUint,
    pub response: BigUint,
}

impl Signature {
    pub fn to_hex(&self) -> String {
        format!("{}.{}", self.commitment.to_str_radix(16), self.response.to_str_radix(16))
    }

    pub fn from_hex(s: &str) -> Result<Self, SigError> {
        let (r, z) = s.split_once('.').ok_or(SigError::Malformed)?;
        Ok(Self {
            commitment: crate::group::parse_biguint_hex(r).map_err(|_| SigError::Malformed)?,
            response: crate::group::parse_biguint_hex(z).map_err(|_| SigError::Malformed)?,
        })
    }
}

fn challenge_scalar(params: &GroupParams, commitment: &BigUint, message: &[u8]) -> BigUint {
    let mut h = Sha256::new();
    h.update(b"veilbox-sig-1");
    h.update(commitment.to_bytes_be());
    h.update((message.len() as u64).to_be_bytes());
    h.update(message);
    BigUint::from_bytes_be(&h.finalize()) % params.order()
}

pub fn sign(
    params: &GroupParams,
    secret: &HybridSecretKey,
    message: &[u8],
    rng: &mut dyn RngCore,
) -> Signature {
    let k = params.random_exponent(rng);
    let commitment = params.generator_pow(&k);
    let e = challenge_scalar(params, &commitment, message);
    let response = (k + e * secret.exponent()) % params.order();
    Signature { commitment, response }
}

pub fn verify(
    params: &GroupParams,
    public: &HybridPublicKey,
    message: &[u8],
    sig: &Signature,
) -> bool {
    let e = challenge_scalar(params, &sig.commitment, message);
    let lhs = params.generator_pow(&sig.response);
    let rhs = params.mul(&sig.commitment, &params.pow(public.element(), &e));
    lhs == rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cipher::hybrid_keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sign_verify_round_trip() {
        let params = GroupParams::modp_768();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (sk, pk) = hybrid_keygen(params, &mut rng);
        let sig = sign(params, &sk, b"roster entry", &mut rng);
        assert!(verify(params, &pk, b"roster entry", &sig));
        assert!(!verify(params, &pk, b"other message", &sig));

        let (_, other_pk) = hybrid_keygen(params, &mut rng);
        assert!(!verify(params, &other_pk, b"roster entry", &sig));
    }

    #[test]
    fn signature_hex_round_trip() {
        let params = GroupParams::test_small();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let (sk, _) = hybrid_keygen(&params, &mut rng);
        let sig = sign(&params, &sk, b"m", &mut rng);
        assert_eq!(Signature::from_hex(&sig.to_hex()).unwrap(), sig);
        assert!(Signature::from_hex("zz").is_err());
    }
}
