//! Deterministic random streams.
//!
//! Every draw in the crate flows through an [`RngStream`], a ChaCha8 generator
//! keyed by `(seed, stream_id)`. ChaCha output is specified bit-for-bit, so an
//! identical key reproduces an identical sequence on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// An independent child stream, a pure function of this stream's key and `index`.
    pub fn fork(&self, index: u64) -> RngStream {
        RngStream::new(
            self.seed,
            splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))),
        )
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_keys_identical_draws() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        let xa: Vec<f64> = (0..100).map(|_| a.random()).collect();
        let xb: Vec<f64> = (0..100).map(|_| b.random()).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let mut c = a.fork(0);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_ne!(x, y);
        assert_ne!(x, z);
        assert_eq!(
            a.fork(3).next_u64(),
            RngStream::new(42, 0).fork(3).next_u64()
        );
    }

    #[test]
    fn pinned_first_draw() {
        // guards against silent changes in the generator or its seeding
        let first = RngStream::new(0, 0).next_u64();
        assert_eq!(first, 13080132717333068652);
        assert_ne!(first, RngStream::new(1, 0).next_u64());
    }
}
