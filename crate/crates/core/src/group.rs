//! Schnorr-group arithmetic and the challenge-response primitive guarding
//! concealed addresses.
//!
//! All address permissions (read, write, own) are proven by solving a
//! blinded-nonce challenge: the verifier picks a nonce `m` and a blinding
//! exponent `r`, publishes `(c0, c1) = (g^r, key^r * m)`, and only a client
//! holding the secret exponent `x` with `key = g^x` can unblind `m` as
//! `c1 / c0^x`. Arithmetic is modulo a prime `p`; exponents live modulo a
//! prime `q` dividing `p - 1`, and honest values stay inside the order-`q`
//! subgroup generated by `g`.

use std::sync::OnceLock;

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::RngCore;
use thiserror::Error;

/// RFC 3526 2048-bit MODP prime (group 14), a safe prime.
const MODP_2048_HEX: &str = "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd1\
29024e088a67cc74020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f1\
4374fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7edee386bfb5a\
899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf0598da48361c55d39a69163fa\
8fd24cf5f83655d23dca3ad961c62f356208552bb9ed529077096966d670c354e4abc9804f174\
6c08ca18217c32905e462e36ce3be39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9d\
e2bcbf6955817183995497cea956ae515d2261898fa051015728e5a8aacaa68ffffffffffffff\
ff";

/// RFC 2409 Oakley group 1 prime (768-bit), also a safe prime. Small enough
/// for fast simulation runs while keeping the same algebraic structure.
const MODP_768_HEX: &str = "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd12\
9024e088a67cc74020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f14\
374fe1356d6d51c245e485b576625e7ec6f44c42e9a63a3620ffffffffffffffff";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("modulus is not prime")]
    ModulusNotPrime,
    #[error("order is not prime")]
    OrderNotPrime,
    #[error("order does not divide modulus - 1")]
    OrderDoesNotDivide,
    #[error("generator does not have the requested order")]
    BadGenerator,
    #[error("wildcard keys need no proof")]
    WildcardNeedsNoProof,
    #[error("secret exponent is the wildcard (zero)")]
    WildcardSecret,
    #[error("element {0} is not a valid non-wildcard key (1 is reserved for the wildcard)")]
    ReservedElement(String),
    #[error("element out of range for the group")]
    ElementOutOfRange,
    #[error("malformed element encoding: {0}")]
    BadEncoding(String),
}

/// The cyclic-group setting shared by a server and its clients: prime
/// modulus `p`, prime subgroup order `q | p - 1`, and a generator `g` of
/// the order-`q` subgroup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupParams {
    modulus: BigUint,
    order: BigUint,
    generator: BigUint,
}

impl GroupParams {
    /// Validates and constructs a group. Primality of `p` and `q` plus
    /// `g^q = 1 (mod p)`, `g != 1` together force `g` to have order
    /// exactly `q`.
    pub fn new(modulus: BigUint, order: BigUint, generator: BigUint) -> Result<Self, GroupError> {
        if !is_probably_prime(&modulus) {
            return Err(GroupError::ModulusNotPrime);
        }
        if !is_probably_prime(&order) {
            return Err(GroupError::OrderNotPrime);
        }
        if (&modulus - BigUint::one()) % &order != BigUint::zero() {
            return Err(GroupError::OrderDoesNotDivide);
        }
        if generator <= BigUint::one()
            || generator >= modulus
            || generator.modpow(&order, &modulus) != BigUint::one()
        {
            return Err(GroupError::BadGenerator);
        }
        Ok(Self { modulus, order, generator })
    }

    /// The desk-scale test group (p=23, q=11, g=4).
    pub fn test_small() -> Self {
        Self::new(BigUint::from(23u32), BigUint::from(11u32), BigUint::from(4u32))
            .expect("fixed test parameters")
    }

    /// 768-bit safe-prime group (RFC 2409 Oakley group 1, g=2, q=(p-1)/2).
    /// Intended for simulations where per-operation cost matters.
    pub fn modp_768() -> &'static Self {
        static PARAMS: OnceLock<GroupParams> = OnceLock::new();
        PARAMS.get_or_init(|| Self::from_safe_prime_hex(MODP_768_HEX))
    }

    /// Production 2048-bit safe-prime group (RFC 3526 group 14, g=2,
    /// q=(p-1)/2).
    pub fn production_2048() -> &'static Self {
        static PARAMS: OnceLock<GroupParams> = OnceLock::new();
        PARAMS.get_or_init(|| Self::from_safe_prime_hex(MODP_2048_HEX))
    }

    /// Look up a named group. Accepted names: `test`, `modp768`, `modp2048`.
    pub fn named(name: &str) -> Option<GroupParams> {
        match name {
            "test" => Some(Self::test_small()),
            "modp768" => Some(Self::modp_768().clone()),
            "modp2048" => Some(Self::production_2048().clone()),
            _ => None,
        }
    }

    /// Canonical name if this is one of the shipped groups.
    pub fn name(&self) -> Option<&'static str> {
        if self == &Self::test_small() {
            Some("test")
        } else if self == Self::modp_768() {
            Some("modp768")
        } else if self == Self::production_2048() {
            Some("modp2048")
        } else {
            None
        }
    }

    fn from_safe_prime_hex(hex: &str) -> Self {
        let p = BigUint::parse_bytes(hex.as_bytes(), 16).expect("fixed hex constant");
        let q = (&p - BigUint::one()) >> 1;
        // p = 7 mod 8 for both shipped primes, so 2 is a quadratic residue
        // and generates the order-q subgroup.
        Self::new(p, q, BigUint::from(2u32)).expect("fixed group constants")
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn order(&self) -> &BigUint {
        &self.order
    }

    pub fn generator(&self) -> &BigUint {
        &self.generator
    }

    pub fn pow(&self, base: &BigUint, exp: &BigUint) -> BigUint {
        base.modpow(exp, &self.modulus)
    }

    pub fn generator_pow(&self, exp: &BigUint) -> BigUint {
        self.pow(&self.generator, exp)
    }

    pub fn mul(&self, a: &BigUint, b: &BigUint) -> BigUint {
        (a * b) % &self.modulus
    }

    /// Multiplicative inverse mod p via Fermat (p is prime).
    pub fn inv(&self, a: &BigUint) -> BigUint {
        let exp = &self.modulus - BigUint::from(2u32);
        a.modpow(&exp, &self.modulus)
    }

    /// True iff `e` lies in the order-q subgroup (includes the identity).
    pub fn in_subgroup(&self, e: &BigUint) -> bool {
        !e.is_zero() && e < &self.modulus && self.pow(e, &self.order) == BigUint::one()
    }

    /// Uniform exponent in [1, q-1].
    pub fn random_exponent(&self, rng: &mut dyn RngCore) -> BigUint {
        let mut wrapped = RngAdapter(rng);
        wrapped.gen_biguint_range(&BigUint::one(), &self.order)
    }

    /// Uniform element of the order-q subgroup (may be the identity).
    pub fn random_subgroup_element(&self, rng: &mut dyn RngCore) -> BigUint {
        let mut wrapped = RngAdapter(rng);
        let t = wrapped.gen_biguint_below(&self.order);
        self.generator_pow(&t)
    }
}

/// Bridges `&mut dyn RngCore` to the `RngCore` bound `RandBigInt` wants.
struct RngAdapter<'a>(&'a mut dyn RngCore);

impl RngCore for RngAdapter<'_> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// A secret address-key exponent in [0, q-1]; zero encodes the wildcard.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretExponent(BigUint);

impl SecretExponent {
    pub fn new(params: &GroupParams, value: BigUint) -> Result<Self, GroupError> {
        if &value >= params.order() {
            return Err(GroupError::ElementOutOfRange);
        }
        Ok(Self(value))
    }

    pub fn wildcard() -> Self {
        Self(BigUint::zero())
    }

    pub fn is_wildcard(&self) -> bool {
        self.0.is_zero()
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    /// The public key this secret proves: `g^x`, or the wildcard when x=0.
    pub fn public(&self, params: &GroupParams) -> AddressKeyPublic {
        if self.is_wildcard() {
            AddressKeyPublic::Wildcard
        } else {
            AddressKeyPublic::Element(params.generator_pow(&self.0))
        }
    }

    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16)
    }

    pub fn from_hex(params: &GroupParams, s: &str) -> Result<Self, GroupError> {
        Self::new(params, parse_biguint_hex(s)?)
    }
}

// Secrets never appear in debug output.
impl std::fmt::Debug for SecretExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SecretExponent(<{} bits>)", self.0.bits())
    }
}

/// A public address key: a subgroup element, or the distinguished wildcard
/// marker granting the permission to everyone.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AddressKeyPublic {
    Wildcard,
    Element(BigUint),
}

impl AddressKeyPublic {
    pub fn is_wildcard(&self) -> bool {
        matches!(self, AddressKeyPublic::Wildcard)
    }

    /// Wire form: `*` for the wildcard, else minimal lowercase hex.
    pub fn to_wire(&self) -> String {
        match self {
            AddressKeyPublic::Wildcard => "*".to_string(),
            AddressKeyPublic::Element(e) => e.to_str_radix(16),
        }
    }

    /// Parses and validates a wire-form key against the group. The element
    /// 1 (= g^0) is reserved for the wildcard and rejected here.
    pub fn from_wire(params: &GroupParams, s: &str) -> Result<Self, GroupError> {
        if s == "*" {
            return Ok(AddressKeyPublic::Wildcard);
        }
        let e = parse_biguint_hex(s)?;
        if e.is_one() {
            return Err(GroupError::ReservedElement(s.to_string()));
        }
        if !params.in_subgroup(&e) {
            return Err(GroupError::ElementOutOfRange);
        }
        Ok(AddressKeyPublic::Element(e))
    }
}

/// One issued challenge: `c0 = g^r`, `c1 = key^r * m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Challenge {
    pub c0: BigUint,
    pub c1: BigUint,
}

/// Generates a fresh address keypair. Never returns the wildcard: the
/// exponent is drawn uniformly from [1, q-1].
pub fn keygen(params: &GroupParams, rng: &mut dyn RngCore) -> (SecretExponent, AddressKeyPublic) {
    let x = params.random_exponent(rng);
    let public = AddressKeyPublic::Element(params.generator_pow(&x));
    (SecretExponent(x), public)
}

/// The wildcard address key.
pub fn wildcard() -> AddressKeyPublic {
    AddressKeyPublic::Wildcard
}

/// Issues a challenge against `key`, sampling the blinding exponent from
/// [1, q-1] and the nonce uniformly from the subgroup. Returns the
/// challenge and the expected nonce, which the issuer keeps and never
/// sends.
pub fn make_challenge(
    params: &GroupParams,
    key: &AddressKeyPublic,
    rng: &mut dyn RngCore,
) -> Result<(Challenge, BigUint), GroupError> {
    let r = params.random_exponent(rng);
    let m = params.random_subgroup_element(rng);
    challenge_from_parts(params, key, &r, &m)
}

/// Deterministic challenge construction from caller-chosen `r` and `m`.
/// `make_challenge` delegates here; tests use it to pin exact values.
pub fn challenge_from_parts(
    params: &GroupParams,
    key: &AddressKeyPublic,
    r: &BigUint,
    m: &BigUint,
) -> Result<(Challenge, BigUint), GroupError> {
    let element = match key {
        AddressKeyPublic::Wildcard => return Err(GroupError::WildcardNeedsNoProof),
        AddressKeyPublic::Element(e) => e,
    };
    let c0 = params.generator_pow(r);
    let c1 = params.mul(&params.pow(element, r), m);
    Ok((Challenge { c0, c1 }, m.clone()))
}

/// Recovers the issuer's nonce as `c1 * (c0^x)^-1`. Matches the issuer's
/// value exactly when the public key under challenge equals `g^x`.
pub fn solve_challenge(
    params: &GroupParams,
    secret: &SecretExponent,
    challenge: &Challenge,
) -> Result<BigUint, GroupError> {
    if secret.is_wildcard() {
        return Err(GroupError::WildcardSecret);
    }
    let mask = params.pow(&challenge.c0, secret.value());
    Ok(params.mul(&challenge.c1, &params.inv(&mask)))
}

/// Minimal lowercase hex for group elements on the wire.
pub fn element_to_hex(e: &BigUint) -> String {
    e.to_str_radix(16)
}

/// Strict parse of the minimal lowercase hex form: rejects uppercase,
/// empty strings, and redundant leading zeros so each value has exactly
/// one encoding.
pub fn parse_biguint_hex(s: &str) -> Result<BigUint, GroupError> {
    if s.is_empty() {
        return Err(GroupError::BadEncoding("empty".into()));
    }
    if s.len() > 1 && s.starts_with('0') {
        return Err(GroupError::BadEncoding(format!("leading zero in {s:?}")));
    }
    if !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(GroupError::BadEncoding(format!("non-hex in {s:?}")));
    }
    BigUint::parse_bytes(s.as_bytes(), 16)
        .ok_or_else(|| GroupError::BadEncoding(format!("unparseable {s:?}")))
}

/// Miller-Rabin with fixed witnesses, deterministic for inputs below
/// 3.3 * 10^24 and overwhelming confidence beyond.
fn is_probably_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    let small: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &s in &small {
        let s = BigUint::from(s);
        if n == &s {
            return true;
        }
        if n % &s == BigUint::zero() {
            return false;
        }
    }
    // n - 1 = d * 2^s with d odd
    let n_minus_1 = n - BigUint::one();
    let mut d = n_minus_1.clone();
    let mut s = 0u32;
    while &d % &two == BigUint::zero() {
        d >>= 1;
        s += 1;
    }
    'witness: for &a in &small {
        let a = BigUint::from(a);
        let mut x = a.modpow(&d, n);
        if x == BigUint::one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
