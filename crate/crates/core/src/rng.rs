//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(key, device, step, lane)`, so results do
//! not depend on evaluation order or on how devices are split across threads.

/// Lane for the per-step switching draw.
pub const LANE_SWITCH: u32 = 0;
/// Lane for the resolution-randomized limit shift.
pub const LANE_SHIFT: u32 = 1;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const WY0: u64 = 0xA076_1D64_78BD_642F;
const WY1: u64 = 0xE703_7ED1_A0B4_28DB;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for the `index`-th child of `seed`.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ GOLDEN).wrapping_add(index.wrapping_mul(GOLDEN)))
}

/// Keyed stream of uniform draws on `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stream {
    keys: [u64; 2],
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            keys: [derive_seed(seed, 1), derive_seed(seed, 2)],
        }
    }

    /// 64 random bits for `(device, step)` on `lane`: the wyhash mix of the
    /// two words under the lane key.
    #[inline]
    pub fn bits(&self, device: u32, step: u32, lane: u32) -> u64 {
        let a = (device as u64) ^ WY1;
        let b = (step as u64) ^ self.keys[lane as usize & 1];
        let m = (a as u128).wrapping_mul(b as u128);
        let (lo, hi) = (m as u64 ^ WY0, (m >> 64) as u64 ^ WY1);
        let m = (lo as u128).wrapping_mul(hi as u128);
        (m as u64) ^ ((m >> 64) as u64)
    }

    #[inline]
    pub fn uniform(&self, device: u32, step: u32, lane: u32) -> f64 {
        (self.bits(device, step, lane) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Integer threshold `k` such that `uniform(..) < p` exactly when
    /// `bits(..) >> 11 < k`.
    #[inline]
    pub fn threshold(p: f64) -> u64 {
        (p.clamp(0.0, 1.0) * (1u64 << 53) as f64).ceil() as u64
    }
}
