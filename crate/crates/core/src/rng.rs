//! Deterministic pseudo-random streams.
//!
//! Every random quantity in the crate comes from [`Prng`], a SplitMix64
//! generator. SplitMix64 is defined purely in terms of wrapping 64-bit
//! integer arithmetic, so a given seed yields the same stream on every
//! platform. Independent streams are derived from a parent seed and a
//! string tag with [`Prng::derive`].

/// SplitMix64 (Steele, Lea & Flood 2014) generator.
#[derive(Debug, Clone)]
pub struct Prng {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// FNV-1a over the tag bytes.
fn hash_tag(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Child stream keyed by `(seed, tag)`.
    pub fn derive(seed: u64, tag: &str) -> Self {
        Self::new(mix64(seed ^ mix64(hash_tag(tag))))
    }

    /// Seed for a child stream, for APIs that take a plain `u64`.
    pub fn derive_seed(seed: u64, tag: &str) -> u64 {
        mix64(seed ^ mix64(hash_tag(tag)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize % n
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
