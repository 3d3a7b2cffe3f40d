//! Reproducible random initial data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::{Field, Grid1D};

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `scale * exp(sum_{k=1}^4 a_k cos(k pi xhat))` with `a_k ~ N(0, 1/(2 k^2))`:
/// smooth, strictly positive and with zero slope at both ends.
pub fn random_positive_field(grid: Grid1D, rng: &mut SeededRng, scale: f64) -> Field {
    let a: Vec<f64> = (1..=4)
        .map(|k| {
            let sd = (0.5f64).sqrt() / k as f64;
            Normal::new(0.0, sd).expect("finite sd").sample(rng)
        })
        .collect();
    Field::from_fn(grid, |x| {
        let xh = grid.normalized(x);
        let s: f64 = a
            .iter()
            .enumerate()
            .map(|(i, ak)| ak * ((i + 1) as f64 * std::f64::consts::PI * xh).cos())
            .sum();
        scale * s.exp()
    })
}
