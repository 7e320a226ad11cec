//! Fixtures shared by the benchmarks.

use lgcn_core::rng::Xorshift64Star;
use lgcn_core::{lifting, AlgebraVector, GroupKind, LiftedSet, PixelGrid};

pub fn noise_image(height: usize, width: usize, seed: u64) -> PixelGrid {
    let mut rng = Xorshift64Star::new(seed);
    PixelGrid::from_fn(height, width, 1, |_| rng.next_f64()).expect("unit interval")
}

pub fn lifted(kind: GroupKind, side: usize) -> LiftedSet {
    lifting::lift(&noise_image(side, side, 1), kind)
}

pub fn algebra_vectors(n: usize, seed: u64) -> Vec<AlgebraVector> {
    let mut rng = Xorshift64Star::new(seed);
    (0..n)
        .map(|_| {
            AlgebraVector::sim2(
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
                rng.uniform(-3.0, 3.0),
                rng.uniform(-1.0, 1.0),
            )
        })
        .collect()
}
