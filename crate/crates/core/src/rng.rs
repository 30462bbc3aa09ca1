//! The pinned random stream used for every seeded draw in the crate.
//!
//! Generator: ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), keyed from a
//! 64-bit seed through `rand_core`'s PCG32-based `seed_from_u64` expansion.
//! Uniform reals are built directly from the raw 64-bit outputs rather than
//! through `rand`'s distribution layer, so the mapping below is the whole
//! contract:
//!
//! ```text
//! u = ((next_u64 >> 12) + 0.5) * 2^-52        // u in (0, 1), never 0 or 1
//! q = bound * (2u - 1)                        // q in (-bound, +bound)
//! ```
//!
//! Test vectors for seeds 0 and 42 are frozen in this module's tests.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Open-interval uniform on (0, 1) with 52 bits of resolution.
/// (53 bits would round `2^53 - 0.5` up to `2^53`, i.e. `u == 1`.)
#[inline]
pub fn unit_open(rng: &mut impl RngCore) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 52) as f64;
    (((rng.next_u64() >> 12) as f64) + 0.5) * SCALE
}

/// Uniform on the open interval (-bound, bound). Returns exactly 0 when `bound == 0`.
#[inline]
pub fn symmetric(rng: &mut impl RngCore, bound: f64) -> f64 {
    bound * (2.0 * unit_open(rng) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_raw_outputs() {
        let mut r = stream(0);
        let got: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        assert_eq!(got, SEED0_VECTOR);

        let mut r = stream(42);
        let got: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        assert_eq!(got, SEED42_VECTOR);
    }

    const SEED0_VECTOR: [u64; 3] = [13080132717333068652, 8594738769458413623, 12896916468484187878];
    const SEED42_VECTOR: [u64; 3] = [12578764544318200737, 17529487244874322312, 7886285670807131020];

    #[test]
    fn unit_open_never_hits_endpoints() {
        struct Fixed(u64);
        impl RngCore for Fixed {
            fn next_u32(&mut self) -> u32 {
                self.0 as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {}
        }
        let lo = unit_open(&mut Fixed(0));
        let hi = unit_open(&mut Fixed(u64::MAX));
        assert!(lo > 0.0 && hi < 1.0);
        assert!(symmetric(&mut Fixed(0), 0.03) > -0.03);
        assert!(symmetric(&mut Fixed(u64::MAX), 0.03) < 0.03);
        assert_eq!(symmetric(&mut Fixed(7), 0.0), 0.0);
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<f64> = {
            let mut r = stream(9);
            (0..16).map(|_| unit_open(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = stream(9);
            (0..16).map(|_| unit_open(&mut r)).collect()
        };
        assert_eq!(a, b);
    }
}
