//! Portable seeded generator for switching sequences.
//!
//! The stream is ChaCha8 seeded through `seed_from_u64`, which the
//! `rand_chacha` crate guarantees to be value-stable across platforms.
//! Bounded draws use Lemire's multiply-and-reject reduction on `next_u64`,
//! implemented here so the index sequence does not depend on the sampling
//! algorithm of any particular `rand` release.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct PortableRng {
    inner: ChaCha8Rng,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        PortableRng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform index in `0..n`.
    ///
    /// # Panics
    /// If `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let wide = (self.next_u64() as u128) * (n as u128);
            if (wide as u64) >= threshold {
                return (wide >> 64) as usize;
            }
        }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = PortableRng::new(7);
        let mut b = PortableRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.index(3), b.index(3));
        }
    }

    #[test]
    fn indices_in_range_and_roughly_uniform() {
        let mut r = PortableRng::new(1);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[r.index(3)] += 1;
        }
        for c in counts {
            assert!((9_000..11_000).contains(&c), "{counts:?}");
        }
        for _ in 0..1000 {
            let u = r.unit();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
