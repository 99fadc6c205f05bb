//! Counter-based random streams.
//!
//! Every variate is addressed by `(seed, stream, index)`: the ChaCha8 key is
//! derived from the seed, the ChaCha stream id selects the stream and the
//! word position selects the index. Any partition of the index range over
//! threads therefore reproduces the same numbers bit for bit.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream id reserved for initial-position sampling. Euler steps use their
/// step index as stream id.
pub const INITIAL_STREAM: u64 = u64::MAX;

const TWO_PI: f64 = std::f64::consts::TAU;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * INV_2_53
}

/// One addressable stream of variates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    fn positioned(&self, word: u128) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word);
        rng
    }

    /// Uniforms on the open interval (0, 1); `out[k]` is variate `first + k`.
    pub fn fill_uniform(&self, first: u64, out: &mut [f64]) {
        let mut rng = self.positioned(2 * first as u128);
        for v in out.iter_mut() {
            *v = open_unit(rng.next_u64());
        }
    }

    /// Standard normals by Box–Muller; variate `i` consumes exactly four
    /// 32-bit words so its position in the stream is fixed.
    pub fn fill_normal(&self, first: u64, out: &mut [f64]) {
        let mut rng = self.positioned(4 * first as u128);
        for v in out.iter_mut() {
            let u1 = open_unit(rng.next_u64());
            let u2 = open_unit(rng.next_u64());
            *v = (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos();
        }
    }

    pub fn uniform(&self, index: u64) -> f64 {
        let mut out = [0.0];
        self.fill_uniform(index, &mut out);
        out[0]
    }

    pub fn normal(&self, index: u64) -> f64 {
        let mut out = [0.0];
        self.fill_normal(index, &mut out);
        out[0]
    }
}

/// SplitMix64 finaliser, used to derive independent seeds for sub-runs.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential() {
        let s = RngStream::new(42, 7);
        let mut block = vec![0.0; 100];
        s.fill_normal(0, &mut block);
        for i in [0usize, 1, 17, 63, 99] {
            assert_eq!(s.normal(i as u64).to_bits(), block[i].to_bits());
        }
        let mut tail = vec![0.0; 30];
        s.fill_normal(70, &mut tail);
        assert_eq!(&block[70..], &tail[..]);

        let mut u = vec![0.0; 50];
        s.fill_uniform(0, &mut u);
        assert_eq!(s.uniform(33).to_bits(), u[33].to_bits());
        assert!(u.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn streams_and_seeds_differ() {
        let a = RngStream::new(1, 0).normal(0);
        let b = RngStream::new(1, 1).normal(0);
        let c = RngStream::new(2, 0).normal(0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }

    #[test]
    fn normal_moments() {
        let n = 200_000;
        let mut z = vec![0.0; n];
        RngStream::new(9, 3).fill_normal(0, &mut z);
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 4.0 * 2f64.sqrt() / (n as f64).sqrt());
    }
}
