mod common;

use std::time::Instant;

use aptomo::solver::{csign, prox_z_pagm, prox_z_pipm, shrink_p};
use aptomo::verify::prox_suite;
use aptomo::{ComplexImage, Field3, C64};
use common::{field, rng};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn closed_forms_match_scalar_minimization() {
    let start = Instant::now();
    for c in prox_suite(10_000, 99) {
        let tol = if c.name == "fixed point" { 1e-12 } else { 1e-8 };
        assert!(c.worst <= tol, "{}: worst {:e}", c.name, c.worst);
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn fixed_points_on_whole_frames() {
    let mut r = rng(5);
    let zt = common::image(&mut r, 8, 8);
    let f: Vec<f64> = zt.as_slice().iter().map(|z| z.norm_sqr()).collect();
    for out in [prox_z_pagm(&zt, &f, 0.7).unwrap(), prox_z_pipm(&zt, &f, 0.7).unwrap()] {
        for (a, b) in out.as_slice().iter().zip(zt.as_slice()) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }
    let zero = ComplexImage::zeros(1, 1);
    assert_eq!(prox_z_pagm(&zero, &[4.0], 1.0).unwrap().get(0, 0), C64::new(1.0, 0.0));
    let pipm = prox_z_pipm(&ComplexImage::from_elem(1, 1, C64::new(3.0, 4.0)), &[0.0], 1.5).unwrap();
    assert!((pipm.get(0, 0).norm() - 1.5 * 5.0 / 2.5).abs() < 1e-14);
}

// minimizes ½‖x - v‖² + τ‖x‖ along the ray x = s·v, by bisection on s
fn shrink_oracle(v: [C64; 3], tau: f64) -> [C64; 3] {
    let m = (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr()).sqrt();
    let deriv = |s: f64| -(1.0 - s) * m * m + tau * m;
    let (mut lo, mut hi) = (0.0, 1.0);
    if deriv(0.0) >= 0.0 {
        return [C64::new(0.0, 0.0); 3];
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    [v[0] * s, v[1] * s, v[2] * s]
}

#[test]
fn shrink_matches_per_voxel_oracle() {
    let mut r = rng(17);
    let p = field(&mut r, 6);
    for tau in [0.0, 0.3, 0.9, 2.0] {
        let s = shrink_p(&p, tau);
        for i in 0..p.x.as_slice().len() {
            let v = [p.x.as_slice()[i], p.y.as_slice()[i], p.z.as_slice()[i]];
            let o = shrink_oracle(v, tau);
            let got = [s.x.as_slice()[i], s.y.as_slice()[i], s.z.as_slice()[i]];
            for (a, b) in got.iter().zip(o) {
                assert!((a - b).norm() < 1e-8);
            }
        }
    }
}

fn c64s(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b)| C64::new(a, b)), len)
}

fn field_from(v: &[C64], n: usize) -> Field3 {
    let m = n * n * n;
    let vol = |k: usize| aptomo::ComplexVolume::from_vec(n, v[k * m..(k + 1) * m].to_vec()).unwrap();
    Field3::new(vol(0), vol(1), vol(2)).unwrap()
}

proptest! {
    #[test]
    fn shrink_is_non_expansive(a in c64s(81), b in c64s(81), tau in 0.0f64..3.0) {
        let (pa, pb) = (field_from(&a, 3), field_from(&b, 3));
        let d_out = shrink_p(&pa, tau).sub(&shrink_p(&pb, tau)).norm_sqr();
        let d_in = pa.sub(&pb).norm_sqr();
        prop_assert!(d_out <= d_in * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn proxes_keep_the_phase(z in c64s(16), fs in prop::collection::vec(0.0f64..50.0, 16), r2 in 0.01f64..100.0) {
        let zt = ComplexImage::from_vec(4, 4, z).unwrap();
        for out in [prox_z_pagm(&zt, &fs, r2).unwrap(), prox_z_pipm(&zt, &fs, r2).unwrap()] {
            for (o, t) in out.as_slice().iter().zip(zt.as_slice()) {
                if t.norm() > 0.0 {
                    let w = o * csign(*t).conj();
                    prop_assert!(w.re >= 0.0);
                    prop_assert!(w.im.abs() <= 1e-12 * o.norm().max(1.0));
                }
            }
        }
    }
}

#[test]
fn random_pipm_triples_from_a_second_stream() {
    // a different seed and wider data range than the main suite
    let mut r = rng(123);
    for _ in 0..1000 {
        let a: f64 = r.random_range(0.0..100.0);
        let f: f64 = r.random_range(0.0..1e4);
        let r2 = r.random_range(0.001..1000.0);
        let got = aptomo::solver::pipm_magnitude(a, f, r2);
        let want = aptomo::verify::pipm_oracle(a, f, r2);
        assert!((got - want).abs() <= 1e-8 * want.max(1.0));
    }
}
