//! Random streams.
//!
//! Every particle of every run draws from its own ChaCha8 stream, keyed by the
//! run seed and by the particle's (stage, index) position in the branching
//! tree. A run is therefore a pure function of its seed, and batches do not
//! depend on how runs are scheduled across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `index` in a batch started from `master`.
#[inline]
pub fn run_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Stream for particle `index` of generation `stage` in the run seeded with `seed`.
pub fn particle_rng(seed: u64, stage: u32, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stage as u64) << 32) | index as u64);
    rng
}

/// Uniform draw on `[0, 1)` with 53 random bits.
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Pair of independent standard normals by the Marsaglia polar method.
///
/// Only `libm` arithmetic is involved, so a seed gives the same pair on every
/// platform.
pub fn standard_normal_pair<R: RngCore + ?Sized>(rng: &mut R) -> [f64; 2] {
    loop {
        let a = 2.0 * uniform(rng) - 1.0;
        let b = 2.0 * uniform(rng) - 1.0;
        let s = a * a + b * b;
        if s > 0.0 && s < 1.0 {
            let f = libm::sqrt(-2.0 * libm::log(s) / s);
            return [a * f, b * f];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = particle_rng(7, 0, 0);
        for _ in 0..10_000 {
            let u = uniform(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = particle_rng(1, 2, 3).next_u64();
        let b: u64 = particle_rng(1, 2, 3).next_u64();
        let c: u64 = particle_rng(1, 2, 4).next_u64();
        let d: u64 = particle_rng(1, 3, 3).next_u64();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(run_seed(0, 1), run_seed(0, 2));
    }

    #[test]
    fn normal_moments() {
        // 10^6 bivariate draws; mean within 5 SE of 0, variance within 5 SE of 1.
        let mut rng = particle_rng(11, 0, 0);
        let draws = 1_000_000usize;
        let mut sum = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for _ in 0..draws {
            let z = standard_normal_pair(&mut rng);
            for i in 0..2 {
                sum[i] += z[i];
                sq[i] += z[i] * z[i];
            }
        }
        let k = draws as f64;
        for i in 0..2 {
            let mean = sum[i] / k;
            let var = sq[i] / k - mean * mean;
            assert!(mean.abs() < 5.0 / k.sqrt(), "mean {mean}");
            // Var of Z^2 is 2 for a standard normal.
            assert!((var - 1.0).abs() < 5.0 * (2.0 / k).sqrt(), "var {var}");
        }
    }
}
