//! Small, fully specified generators used where outputs must be reproducible bit-for-bit
//! across platforms and languages.

/// splitmix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller, cosine branch only: two uniforms per draw.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// 64-bit FNV-1a over the UTF-8 bytes of `s`.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// `(global_seed * 1_000_003 + fnv1a64(utterance_id)) mod 2^63`.
pub fn derive_mock_seed(global_seed: u64, utterance_id: &str) -> u64 {
    let v = u128::from(global_seed) * 1_000_003 + u128::from(fnv1a64(utterance_id));
    (v % (1u128 << 63)) as u64
}

/// Mixes several integers into one seed for per-sample RNG streams.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut sm = SplitMix64::new(0x5EED);
    let mut acc = 0u64;
    for p in parts {
        sm.state ^= p.wrapping_add(acc);
        acc = sm.next_u64();
    }
    acc
}
