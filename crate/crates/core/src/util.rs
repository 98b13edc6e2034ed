//! Numeric and randomness helpers shared across modules.

/// Compensated (Kahan) accumulator. Order-sensitive statistics in this crate
/// sum with this so that identities like the persistence/increment
/// decomposition hold to ~1e-12 even over long streams.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Mean of `values` with compensated summation. Returns `None` when empty.
pub fn kahan_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = KahanSum::new();
    let mut n = 0u64;
    for v in values {
        sum.add(v);
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(sum.value() / n as f64)
    }
}

/// Sample mean and a 95% normal-approximation confidence half-width.
/// `half_width` is 0 for n < 2.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanCi {
    pub n: u64,
    pub mean: f64,
    pub half_width: f64,
}

pub fn mean_ci(values: impl IntoIterator<Item = f64>) -> Option<MeanCi> {
    let mut sum = KahanSum::new();
    let mut sq = KahanSum::new();
    let mut n = 0u64;
    for v in values {
        sum.add(v);
        sq.add(v * v);
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let mean = sum.value() / nf;
    let half_width = if n < 2 {
        0.0
    } else {
        // unbiased sample variance, clamped against rounding
        let var = ((sq.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
        1.96 * (var / nf).sqrt()
    };
    Some(MeanCi { n, mean, half_width })
}

/// SplitMix64 step; the standard 64-bit finalizer-based generator.
#[inline]
pub fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    *state = z ^ (z >> 31);
}

/// Counter-based uniform draw in [0, 1) keyed by (seed, stream, a, b).
///
/// The draw depends only on the key, never on call order, so parallel
/// per-pair sampling is schedule-independent.
#[inline]
pub fn pair_unit(seed: u64, stream: u64, a: u32, b: u32) -> f64 {
    let mut s = seed ^ 0x6a09e667f3bcc908;
    splitmix64(&mut s);
    s ^= stream.wrapping_mul(0xd1b54a32d192ed03);
    splitmix64(&mut s);
    s ^= ((a as u64) << 32) | b as u64;
    splitmix64(&mut s);
    // 53 random bits -> [0, 1)
    (s >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
