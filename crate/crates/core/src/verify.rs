//! Randomized self-checks of the operator algebra and the proximal maps,
//! shared by the test suites and the `selfcheck` command.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::forward::{t_adjoint, t_apply, ScanGeometry};
use crate::grid::{
    backproject, dft2_normalized, divergence3, embed_window, extract_window, gradient3, idft2_normalized,
    rotate_adjoint, rotate_volume, xray_project, Angle, ComplexImage, ComplexVolume, Field3, C64,
};
use crate::solver::{pagm_magnitude, pipm_magnitude};

/// Worst error of one randomized check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub trials: usize,
    pub worst: f64,
}

fn c64(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn volume(rng: &mut impl Rng, n: usize) -> ComplexVolume {
    ComplexVolume::from_fn(n, |_, _, _| c64(rng))
}

fn image(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexImage {
    ComplexImage::from_fn(rows, cols, |_, _| c64(rng))
}

fn field(rng: &mut impl Rng, n: usize) -> Field3 {
    Field3 {
        x: volume(rng, n),
        y: volume(rng, n),
        z: volume(rng, n),
    }
}

// |<Ax, y> - <x, A'y>| relative to ‖Ax‖‖y‖ + ‖x‖‖A'y‖
fn gap(lhs: C64, rhs: C64, scale: f64) -> f64 {
    (lhs - rhs).norm() / scale.max(f64::MIN_POSITIVE)
}

/// Dot-product tests `⟨Ax, y⟩ = ⟨x, Aᵀy⟩` for the DFT, window, projection,
/// rotation, gradient and `T_{j,θ}` pairs, plus DFT unitarity. Grid sides are
/// drawn from `4..=max_n`.
pub fn adjoint_suite(trials: usize, max_n: usize, seed: u64) -> Vec<CheckOutcome> {
    assert!(max_n >= 4, "grids need at least 4 points per side");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 7];
    for _ in 0..trials {
        let n = rng.random_range(4..=max_n);

        let x = image(&mut rng, n, n);
        let y = image(&mut rng, n, n);
        let fx = dft2_normalized(&x).expect("square");
        let fy = idft2_normalized(&y).expect("square");
        worst[0] = worst[0].max(gap(fx.dot(&y), x.dot(&fy), fx.norm() * y.norm() + x.norm() * fy.norm()));
        worst[1] = worst[1].max((fx.norm() - x.norm()).abs() / x.norm());

        let side = rng.random_range(1..=n);
        let pos = (rng.random_range(0..=n - side), rng.random_range(0..=n - side));
        let w = image(&mut rng, side, side);
        let sx = extract_window(&x, pos, side).expect("in range");
        let sw = embed_window(&w, pos, n).expect("in range");
        worst[2] = worst[2].max(gap(sx.dot(&w), x.dot(&sw), sx.norm() * w.norm() + x.norm() * sw.norm()));

        let u = volume(&mut rng, n);
        let qu = xray_project(&u);
        let qy = backproject(&y, n).expect("square");
        worst[3] = worst[3].max(gap(qu.dot(&y), u.dot(&qy), qu.norm() * y.norm() + u.norm() * qy.norm()));

        let v = volume(&mut rng, n);
        let theta = Angle::new(rng.random_range(0.0..PI)).expect("in range");
        let ru = rotate_volume(&u, theta);
        let rv = rotate_adjoint(&v, theta);
        worst[4] = worst[4].max(gap(ru.dot(&v), u.dot(&rv), ru.norm() * v.norm() + u.norm() * rv.norm()));

        let p = field(&mut rng, n);
        let gu = gradient3(&u);
        let mut dp = divergence3(&p).expect("same side");
        dp.scale(C64::new(-1.0, 0.0));
        worst[5] = worst[5].max(gap(
            gu.dot(&p),
            u.dot(&dp),
            gu.norm_sqr().sqrt() * p.norm_sqr().sqrt() + u.norm() * dp.norm(),
        ));

        let geom = ScanGeometry::unchecked(n, side, vec![pos], None).expect("position in range");
        let tu = t_apply(&u, 0, theta, &geom).expect("consistent shapes");
        let tw = t_adjoint(&w, 0, theta, &geom, n).expect("consistent shapes");
        worst[6] = worst[6].max(gap(tu.dot(&w), u.dot(&tw), tu.norm() * w.norm() + u.norm() * tw.norm()));
    }
    let names = ["F", "F unitarity", "S", "Q", "R", "grad/div", "T"];
    names
        .iter()
        .zip(worst)
        .map(|(&name, worst)| CheckOutcome { name, trials, worst })
        .collect()
}

fn bisect(mut lo: f64, mut hi: f64, deriv: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Magnitude minimizing `½(ρ - √f)² + (r₂/2)(ρ - a)²` over `ρ ≥ 0`, by
/// bisection on the derivative.
pub fn pagm_oracle(a: f64, f: f64, r2: f64) -> f64 {
    let hi = 2.0 * (a + f.sqrt()) + 1.0;
    bisect(0.0, hi, |r| (r - f.sqrt()) + r2 * (r - a))
}

/// Magnitude minimizing `½(ρ² - f log ρ²) + (r₂/2)(ρ - a)²` over `ρ > 0`.
pub fn pipm_oracle(a: f64, f: f64, r2: f64) -> f64 {
    let hi = 2.0 * (a + f.sqrt()) + 1.0;
    bisect(0.0, hi, |r| r - f / r + r2 * (r - a))
}

/// Compares both closed-form magnitudes against the scalar oracles on random
/// `(|z̃|, f, r₂)` triples, and checks the fixed point `f = |z̃|² ⇒ ρ = |z̃|`.
/// Errors are relative to `max(1, ρ)`.
pub fn prox_suite(triples: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..triples {
        let a = rng.random_range(0.0..10.0);
        let f = rng.random_range(0.0..100.0);
        let r2 = 10f64.powf(rng.random_range(-2.0..2.0));
        let p = pagm_magnitude(a, f, r2);
        worst[0] = worst[0].max((p - pagm_oracle(a, f, r2)).abs() / p.max(1.0));
        let q = pipm_magnitude(a, f, r2);
        worst[1] = worst[1].max((q - pipm_oracle(a, f, r2)).abs() / q.max(1.0));
        let fixed = a * a;
        let e = (pagm_magnitude(a, fixed, r2) - a)
            .abs()
            .max((pipm_magnitude(a, fixed, r2) - a).abs());
        worst[2] = worst[2].max(e / a.max(1.0));
    }
    ["pAGM vs oracle", "pIPM vs oracle", "fixed point"]
        .iter()
        .zip(worst)
        .map(|(&name, worst)| CheckOutcome {
            name,
            trials: triples,
            worst,
        })
        .collect()
}
