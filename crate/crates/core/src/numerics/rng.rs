use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seeded random stream.
///
/// Backed by ChaCha8, a counter-based generator whose output is fully
/// specified by `(seed, stream)`: identical seeds give identical streams on
/// every platform. Independent sub-streams (initialization, per-epoch noise,
/// inference sampling) use different `stream` ids of the same seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

/// Uniform draws are clamped to `[GUMBEL_EPS, 1 - GUMBEL_EPS]` before the
/// double log.
pub const GUMBEL_EPS: f64 = 1e-12;

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngState {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gumbel(&mut self) -> f64 {
        gumbel_from_uniform(self.uniform())
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    /// `amount` distinct indices from `0..len`, in sampling order.
    pub fn sample_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, len, amount).into_vec()
    }
}

/// Maps a uniform draw to a standard Gumbel variate, `-ln(-ln u)`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
    -libm::log(-libm::log(u))
}

/// `count` independent standard Gumbel draws.
pub fn sample_gumbel(rng: &mut RngState, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.gumbel()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gumbel_fixed_points() {
        let e = core::f64::consts::E;
        assert!(gumbel_from_uniform(1.0 / e).abs() < 1e-15);
        assert!((gumbel_from_uniform(libm::exp(-e)) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gumbel_endpoints_stay_finite() {
        assert!(gumbel_from_uniform(0.0).is_finite());
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let mut rng = RngState::new(17);
        let n = 1_000_000;
        let mean = sample_gumbel(&mut rng, n).iter().sum::<f64>() / n as f64;
        assert!((mean - 0.577_215_664_9).abs() < 0.01, "mean = {mean}");
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngState::new(42);
        let mut b = RngState::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngState::with_stream(42, 1);
        assert_ne!(RngState::new(42).next_u64(), c.next_u64());
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = RngState::new(3);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
