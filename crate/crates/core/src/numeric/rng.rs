//! Counter-based random streams addressed by `(seed, stream-id)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Address of an independent random stream. Identical addresses reproduce
/// identical sequences on every platform; distinct stream ids never overlap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Child stream for sub-task `tag`, e.g. one per Monte Carlo trial.
    pub fn child(&self, tag: u64) -> RngStream {
        RngStream { seed: self.seed, stream: splitmix64(self.stream ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))) }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` i.i.d. standard normal draws from the start of `stream`.
pub fn gauss_sample<T: Real>(stream: &RngStream, n: usize) -> Vec<T> {
    let mut rng = stream.generator();
    gauss_fill(&mut rng, n)
}

pub fn gauss_fill<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_address() {
        let s = RngStream::new(7, 3);
        let a: Vec<f64> = gauss_sample(&s, 100);
        let b: Vec<f64> = gauss_sample(&s, 100);
        assert_eq!(a, b);
        let c: Vec<f64> = gauss_sample(&RngStream::new(7, 4), 100);
        assert_ne!(a, c);
        assert_ne!(s.child(0), s.child(1));
    }

    #[test]
    fn moments_of_a_million_draws() {
        let n = 1_000_000;
        let x: Vec<f64> = gauss_sample(&RngStream::new(2024, 0), n);
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // 3/sqrt(n) = 0.003 for the mean; chi-square sd of the variance is sqrt(2/n) ≈ 0.0014.
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }
}
