#![allow(dead_code)]

use aptomo::{ComplexImage, ComplexVolume, Field3, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn c64(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn volume(rng: &mut impl Rng, n: usize) -> ComplexVolume {
    ComplexVolume::from_fn(n, |_, _, _| c64(rng))
}

pub fn image(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexImage {
    ComplexImage::from_fn(rows, cols, |_, _| c64(rng))
}

pub fn field(rng: &mut impl Rng, n: usize) -> Field3 {
    Field3 {
        x: volume(rng, n),
        y: volume(rng, n),
        z: volume(rng, n),
    }
}

/// `|a - b| / (scale)` where `scale` is the product of the operand norms.
pub fn dot_gap(lhs: C64, rhs: C64, scale: f64) -> f64 {
    (lhs - rhs).norm() / scale.max(f64::MIN_POSITIVE)
}
