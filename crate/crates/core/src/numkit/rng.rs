//! Counter-based random stream.
//!
//! Draw `k` of a stream with seed `s` is a pure function of `(s, k)`:
//!
//! ```text
//! key   = mix64(s ^ 0x6A09E667F3BCC909)
//! base  = key + (k + 1) * 0x9E3779B97F4A7C15      (wrapping)
//! lane0 = mix64(base)
//! lane1 = mix64(base ^ 0xBB67AE8584CAA73B)
//! ```
//!
//! `mix64` is the SplitMix64 finalizer (`0xBF58476D1CE4E5B9`,
//! `0x94D049BB133111EB`, shifts 30/27/31). Integer draws use `lane0`; a
//! standard normal draw consumes one counter value and uses both lanes in a
//! Box–Muller transform evaluated with `libm`, so results do not depend on the
//! platform's math library.

use rand_core::RngCore;

use super::tensor::Tensor;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const KEY_SALT: u64 = 0x6A09_E667_F3BC_C909;
const LANE_SALT: u64 = 0xBB67_AE85_84CA_A73B;
const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a, used to turn purpose labels into sub-stream keys.
fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn at(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Independent stream keyed by a purpose label.
    pub fn derive(&self, label: &str) -> Self {
        Self::new(mix64(self.seed ^ mix64(fnv1a(label))))
    }

    /// Independent stream keyed by an index (worker, path, epoch, ...).
    pub fn split(&self, index: u64) -> Self {
        Self::new(mix64(self.seed.wrapping_add(mix64(index ^ LANE_SALT))))
    }

    fn lanes(&self, k: u64) -> (u64, u64) {
        let key = mix64(self.seed ^ KEY_SALT);
        let base = key.wrapping_add(k.wrapping_add(1).wrapping_mul(GOLDEN));
        (mix64(base), mix64(base ^ LANE_SALT))
    }

    pub fn next_u64(&mut self) -> u64 {
        let (a, _) = self.lanes(self.counter);
        self.counter += 1;
        a
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let (a, b) = self.lanes(self.counter);
        self.counter += 1;
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((a >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (b >> 11) as f64 * TWO_POW_M53;
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
    }

    /// Tensor of i.i.d. standard normal draws; advances the counter by the
    /// element count.
    pub fn sample_standard_normal(&mut self, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.standard_normal()).collect();
        Tensor::new(shape, data).expect("shape from product")
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (RngStream::next_u64(self) >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        RngStream::next_u64(self)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = RngStream::next_u64(self).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
