//! Counter-based keyed randomness.
//!
//! Every random value used during probing is a pure function of a key and a
//! counter, so results do not depend on thread scheduling or call order.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// The splitmix64 finalizer. A bijection on `u64` with good avalanche.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Folds a sequence of words into one 64-bit key by iterated splitmix.
///
/// `mix_words(&[a, b, c])` = `splitmix(splitmix(splitmix(a) ^ b) ^ c)`.
pub fn mix_words(words: &[u64]) -> u64 {
    let mut state = 0u64;
    for &w in words {
        state = splitmix64(state ^ w);
    }
    state
}

/// Per-sample seed for probe sample `j` at strength index `i` of a record.
pub fn sample_seed(master_seed: u64, record_id: &str, strength_index: usize, sample_index: usize) -> u64 {
    mix_words(&[
        master_seed,
        fnv1a64(record_id.as_bytes()),
        strength_index as u64,
        sample_index as u64,
    ])
}

/// A random-access stream of uniform values keyed by a 64-bit key.
///
/// Value `k` is `splitmix64(key + k * gamma)`; any index can be read without
/// producing the ones before it.
#[derive(Debug, Clone)]
pub struct KeyedStream {
    key: u64,
    counter: u64,
}

impl KeyedStream {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Stream keyed by a generation sample seed and the caption text.
    pub fn for_generation(sample_seed: u64, caption: &str) -> Self {
        Self::new(mix_words(&[sample_seed, fnv1a64(caption.as_bytes())]))
    }

    #[inline]
    pub fn at(&self, index: u64) -> u64 {
        splitmix64(self.key.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = self.at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (one draw per pair of uniforms).
    pub fn next_gaussian(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn position(&self) -> u64 {
        self.counter
    }
}
