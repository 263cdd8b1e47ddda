//! Stable hashing and counter-based random numbers.
//!
//! Everything random in the pipeline is a pure function of a seed and a key
//! (a sentence text, or a batch/slot index), so results never depend on
//! thread count or record order.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64 over `seed.to_le_bytes() ++ text.as_bytes()`.
pub fn fnv1a_seeded(seed: u64, text: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in seed.to_le_bytes().iter().chain(text.as_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// MurmurHash3 64-bit finalizer.
#[inline]
pub fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^ (k >> 33)
}

/// Stable per-sentence hash: `fmix64(fnv1a_seeded(seed, text))`.
///
/// Raw FNV-1a leaves its top bits dominated by the last few input bytes, so
/// `h / 2^64` is visibly non-uniform over similar sentences; the finalizer
/// avalanches every input bit into the high word. This exact definition is
/// the reproducibility contract for downsampling; do not change it.
pub fn stable_hash(seed: u64, text: &str) -> u64 {
    fmix64(fnv1a_seeded(seed, text))
}

/// Maps a 64-bit hash to `[0, 1]` as `h / 2^64` in binary64.
#[inline]
pub fn unit_from_hash(h: u64) -> f64 {
    h as f64 / 18_446_744_073_709_551_616.0
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based generator: a keyed 64-bit output for every
/// `(seed, counter...)` tuple. Each counter word is absorbed through a full
/// splitmix64 round.
pub fn counter_u64(seed: u64, counters: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &c in counters {
        h = splitmix64(h ^ c);
    }
    h
}

/// Uniform in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn counter_unit(seed: u64, counters: &[u64]) -> f64 {
    (counter_u64(seed, counters) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `[0, n)` via a widening multiply.
#[inline]
pub fn counter_below(seed: u64, counters: &[u64], n: u64) -> u64 {
    ((u128::from(counter_u64(seed, counters)) * u128::from(n)) >> 64) as u64
}
