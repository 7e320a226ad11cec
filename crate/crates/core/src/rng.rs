//! Portable seeded random numbers.
//!
//! Streams are xorshift64* (shifts 12, 25, 27; multiplier
//! `0x2545_F491_4F6C_DD1D`) seeded through one SplitMix64 round
//! (increment `0x9E37_79B9_7F4A_7C15`, mixers `0xBF58_476D_1CE4_E5B9` and
//! `0x94D0_49BB_1331_11EB`). The constants are fixed so that shuffles,
//! transform draws and weight initialization reproduce in any language.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Xorshift64Star {
    state: u64,
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Self {
        let state = splitmix64(seed);
        Self {
            state: if state == 0 { GOLDEN_GAMMA } else { state },
        }
    }

    /// Independent stream `stream` of `seed`; used to split per image index so
    /// that parallel generation matches serial output.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        Self::new(seed ^ splitmix64(stream.wrapping_mul(GOLDEN_GAMMA)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; returns `lo` exactly when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let t = self.next_f64();
        if hi == lo {
            lo
        } else {
            lo + (hi - lo) * t
        }
    }

    /// Uniform integer in `[0, n)`, by rejection to avoid modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
