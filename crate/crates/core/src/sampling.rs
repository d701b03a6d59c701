//! Low-discrepancy sampling.
//!
//! Halton points with a Cranley-Patterson rotation drawn from a seeded
//! ChaCha stream, so a `(dim, seed)` pair always reproduces the same cloud.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Point;

const PRIMES: [u8; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Randomly shifted Halton sequence on `[0, 1)^dim`.
#[derive(Clone, Debug)]
pub struct QuasiRandom {
    shift: Vec<f64>,
    index: usize,
}

impl QuasiRandom {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(
            dim <= PRIMES.len(),
            "quasi-random sampling supports at most {} dimensions",
            PRIMES.len()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        // Skip index 0, which is the origin for every base.
        Self { shift, index: 1 }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Next point of the unit cube.
    pub fn next_unit(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        self.shift
            .iter()
            .zip(PRIMES.iter())
            .map(|(s, &b)| (halton::number(b, i) + s).fract())
            .collect()
    }

    /// Next point of the axis-aligned box `bounds`.
    pub fn next_in_box(&mut self, bounds: &[[f64; 2]]) -> Point {
        debug_assert_eq!(bounds.len(), self.dim());
        let u = self.next_unit();
        Point::from_iterator(
            bounds.len(),
            bounds.iter().zip(u).map(|([lo, hi], u)| lo + (hi - lo) * u),
        )
    }

    /// Next scalar in `[lo, hi]`, using only the first coordinate.
    pub fn next_in_interval(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.next_unit()[0];
        lo + (hi - lo) * u
    }
}

/// Maps a unit-cube sample to the closed unit ball by radial rescaling of
/// the cube `[-1, 1]^n`. Not uniform, but it covers every radius.
pub fn cube_to_ball(unit: &[f64]) -> Point {
    let n = unit.len();
    let c = Point::from_iterator(n, unit.iter().map(|u| 2.0 * u - 1.0));
    let linf = c.amax();
    let l2 = c.norm();
    if l2 == 0.0 {
        c
    } else {
        c * (linf / l2)
    }
}
