use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::DenseMatrix;

/// The generator used everywhere randomness is needed. ChaCha keeps streams
/// stable across platforms and crate versions.
pub type Rng64 = ChaCha8Rng;

/// A generator for `seed` on an independent `stream`, so that e.g. parameter
/// initialization and dropout draw from unrelated sequences.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Glorot/Xavier uniform initialization in `±sqrt(6 / (rows + cols))`.
pub fn glorot_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_within_bound() {
        for seed in 0..20 {
            let w = glorot_init(1, 1, &mut seeded_rng(seed, 0));
            assert!(w[(0, 0)].abs() <= 3f64.sqrt());
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = glorot_init(4, 3, &mut seeded_rng(7, 0));
        let b = glorot_init(4, 3, &mut seeded_rng(7, 0));
        let c = glorot_init(4, 3, &mut seeded_rng(7, 1));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn large_sample_mean_near_zero() {
        // uniform on ±sqrt(6/200): sd ≈ 0.1, so the mean of 1e4 draws has sd ≈ 1e-3
        let w = glorot_init(100, 100, &mut seeded_rng(0, 0));
        let mean = w.sum() / w.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        let bound = (6.0f64 / 200.0).sqrt();
        assert!(w.max_abs() <= bound);
    }
}
