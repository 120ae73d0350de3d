//! Seeded, platform-independent 64-bit hashing.
//!
//! Every stochastic or content-addressed component in the crate (MinHash
//! slot hashes, Bernoulli corpus sampling, per-stage seed derivation) goes
//! through these functions so results are reproducible across runs and
//! platforms. FNV-1a supplies the byte mixing, a splitmix64 finalizer the
//! avalanche.

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;
const GOLDEN: u64 = 0x9e3779b97f4a7c15;

/// splitmix64 finalizer; full-avalanche bijection on u64.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    x
}

/// Seeded 64-bit hash of a byte string.
#[inline]
pub fn hash64(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ mix64(seed);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix64(h)
}

/// Unseeded convenience form, used for stable name hashing.
#[inline]
pub fn hash64_str(s: &str) -> u64 {
    hash64(s.as_bytes(), 0)
}

/// The i-th member of a seeded hash-function family, applied to a
/// precomputed base hash. Used for MinHash slot permutations.
#[inline]
pub fn family_hash(base: u64, seed: u64, index: u64) -> u64 {
    mix64(base ^ mix64(seed ^ (index.wrapping_add(1)).wrapping_mul(GOLDEN)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_deterministic() {
        assert_eq!(hash64(b"abc", 7), hash64(b"abc", 7));
        assert_ne!(hash64(b"abc", 7), hash64(b"abc", 8));
        assert_ne!(hash64(b"abc", 7), hash64(b"abd", 7));
    }

    #[test]
    fn family_members_differ() {
        let base = hash64(b"shingle", 42);
        assert_ne!(family_hash(base, 42, 0), family_hash(base, 42, 1));
    }

    #[test]
    fn empty_input_hashes() {
        // must be defined and stable
        assert_eq!(hash64(b"", 0), hash64(b"", 0));
    }
}
