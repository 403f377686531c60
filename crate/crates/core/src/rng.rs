//! Counter-addressed random draws.
//!
//! Built on ChaCha8: `(seed, stream, index)` addresses one 32-bit word of the
//! keystream, so any slice of a frame can be generated independently and the
//! result never depends on how work was split across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Golden-ratio increment used to derive per-frame sub-seeds.
pub const FRAME_SEED_STEP: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sub-seed for 0-based frame `k`: `seed ⊕ (k · FRAME_SEED_STEP)`.
    pub fn frame_seed(seed: u64, k: usize) -> u64 {
        seed ^ (k as u64).wrapping_mul(FRAME_SEED_STEP)
    }

    /// Sequential uniform `[0, 1)` draws starting at word `start` of `stream`.
    pub fn uniforms(&self, stream: u64, start: u64) -> Uniforms {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        inner.set_word_pos(start as u128);
        Uniforms { inner }
    }

    /// Fills `out` with the uniforms at words `start..start + out.len()`.
    pub fn fill_uniform(&self, stream: u64, start: u64, out: &mut [f32]) {
        let mut draws = self.uniforms(stream, start);
        for v in out {
            *v = draws.next_f32();
        }
    }
}

pub struct Uniforms {
    inner: ChaCha8Rng,
}

impl Uniforms {
    /// 24 random mantissa bits, uniform on `[0, 1)`.
    pub fn next_f32(&mut self) -> f32 {
        (self.inner.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let a = CounterRng::new(42);
        let mut x = [0.0f32; 64];
        let mut y = [0.0f32; 64];
        a.fill_uniform(0, 0, &mut x);
        CounterRng::new(42).fill_uniform(0, 0, &mut y);
        assert_eq!(x, y);
        assert!(x.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn offsets_address_the_same_words() {
        let rng = CounterRng::new(9);
        let mut whole = [0.0f32; 100];
        rng.fill_uniform(3, 0, &mut whole);
        let mut tail = [0.0f32; 37];
        rng.fill_uniform(3, 63, &mut tail);
        assert_eq!(&whole[63..], &tail[..]);
    }

    #[test]
    fn streams_and_seeds_differ() {
        let mut a = [0.0f32; 32];
        let mut b = [0.0f32; 32];
        let mut c = [0.0f32; 32];
        CounterRng::new(1).fill_uniform(0, 0, &mut a);
        CounterRng::new(1).fill_uniform(1, 0, &mut b);
        CounterRng::new(2).fill_uniform(0, 0, &mut c);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn frame_zero_keeps_seed() {
        assert_eq!(CounterRng::frame_seed(77, 0), 77);
        assert_eq!(CounterRng::frame_seed(0, 1), FRAME_SEED_STEP);
    }
}
