//! Word-string fingerprints for out-of-band key verification.
//!
//! Two parties each concatenate the public keys they hold, in a fixed
//! order (ascending key id), hash the result, and render the first 112
//! bits as 8 words from a 16384-word list. Equal word strings mean equal
//! key sets; a substituted key changes the string.

use sha2::{Digest, Sha256};
use std::sync::OnceLock;
use thiserror::Error;

/// Versioned wordlist: one word per line, index = line number.
const WORDLIST_RAW: &str = include_str!("../data/wordlist.txt");

const WORD_COUNT: usize = 16384;
const BITS_PER_WORD: u32 = 14;
const WORDS_PER_FINGERPRINT: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("duplicate key id {0:?}")]
    DuplicateKeyId(String),
    #[error("no keys to fingerprint")]
    Empty,
}

fn wordlist() -> &'static Vec<&'static str> {
    static WORDS: OnceLock<Vec<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        let words: Vec<&str> = WORDLIST_RAW.lines().collect();
        assert_eq!(words.len(), WORD_COUNT, "wordlist must hold exactly {WORD_COUNT} words");
        words
    })
}

/// Computes the fingerprint of a key set. Entries are sorted by ascending
/// key id before hashing, so insertion order never matters.
pub fn fingerprint(keys: &[(String, Vec<u8>)]) -> Result<String, FingerprintError> {
    if keys.is_empty() {
        return Err(FingerprintError::Empty);
    }
    let mut sorted: Vec<&(String, Vec<u8>)> = keys.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    for pair in sorted.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(FingerprintError::DuplicateKeyId(pair[0].0.clone()));
        }
    }
    let mut h = Sha256::new();
    for (_, bytes) in &sorted {
        h.update(bytes);
    }
    let digest = h.finalize();

    let words = wordlist();
    let mut out = Vec::with_capacity(WORDS_PER_FINGERPRINT);
    let mut acc: u32 = 0;
    let mut acc_bits: u32 = 0;
    let mut bytes = digest.iter();
    for _ in 0..WORDS_PER_FINGERPRINT {
        while acc_bits < BITS_PER_WORD {
            acc = (acc << 8) | u32::from(*bytes.next().expect("32-byte digest suffices"));
            acc_bits += 8;
        }
        let shift = acc_bits - BITS_PER_WORD;
        let index = (acc >> shift) as usize & (WORD_COUNT - 1);
        acc &= (1 << shift) - 1;
        acc_bits = shift;
        out.push(words[index]);
    }
    Ok(out.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keyset() -> Vec<(String, Vec<u8>)> {
        vec![
            ("alice/enc".into(), vec![0xba, 0x9c, 0x31]),
            ("alice/sig".into(), vec![0x0c, 0x54, 0xf8]),
            ("bob/enc".into(), vec![0x30, 0x6d, 0x70]),
        ]
    }

    #[test]
    fn deterministic_across_parties() {
        let a = fingerprint(&keyset()).unwrap();
        let b = fingerprint(&keyset()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.split(' ').count(), 8);
    }

    #[test]
    fn order_invariant() {
        let mut permuted = keyset();
        permuted.reverse();
        assert_eq!(fingerprint(&keyset()).unwrap(), fingerprint(&permuted).unwrap());
    }

    #[test]
    fn flipped_key_changes_string() {
        let mut tampered = keyset();
        tampered[1].1[0] ^= 0x01;
        assert_ne!(fingerprint(&keyset()).unwrap(), fingerprint(&tampered).unwrap());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut keys = keyset();
        keys.push(("alice/enc".into(), vec![1, 2, 3]));
        assert_eq!(
            fingerprint(&keys).unwrap_err(),
            FingerprintError::DuplicateKeyId("alice/enc".into())
        );
        assert_eq!(fingerprint(&[]).unwrap_err(), FingerprintError::Empty);
    }

    #[test]
    fn wordlist_is_well_formed() {
        let words = wordlist();
        assert_eq!(words.len(), 16384);
        let unique: std::collections::HashSet<_> = words.iter().collect();
        assert_eq!(unique.len(), 16384);
        assert!(words.iter().all(|w| !w.is_empty() && w.is_ascii()));
    }

    #[test]
    fn all_words_reachable_per_slot() {
        // Index extraction covers the full 14-bit range: craft digests via
        // brute force over inputs and check spread on the first word.
        let mut seen = std::collections::HashSet::new();
        for i in 0u32..2000 {
            let keys = vec![("k".to_string(), i.to_be_bytes().to_vec())];
            let fp = fingerprint(&keys).unwrap();
            seen.insert(fp.split(' ').next().unwrap().to_string());
        }
        // 2000 draws over 16384 buckets: expect nearly all distinct.
        assert!(seen.len() > 1800, "only {} distinct first words", seen.len());
    }
}
