use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{ComplexImage, ComplexVolume, Field3, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_c64(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_volume(rng: &mut impl Rng, n: usize) -> ComplexVolume {
    ComplexVolume::from_fn(n, |_, _, _| random_c64(rng))
}

pub fn random_image(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexImage {
    ComplexImage::from_fn(rows, cols, |_, _| random_c64(rng))
}

pub fn random_field(rng: &mut impl Rng, n: usize) -> Field3 {
    Field3 {
        x: random_volume(rng, n),
        y: random_volume(rng, n),
        z: random_volume(rng, n),
    }
}

pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}
