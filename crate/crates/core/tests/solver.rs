mod common;

use aptomo::forward::d_apply;
use aptomo::metrics::{r_factor, relative_change};
use aptomo::phantom::{make_angles, make_probe, make_scan_grid, shepp_logan_pure_phase, EXPERIMENT_ALPHA};
use aptomo::solver::{apt_step, objective_value, AptSolver};
use aptomo::{Angle, ComplexVolume, ForwardModel, MeasurementSet, Probe, SolverConfig, C64};
use common::{rng, volume};
use proptest::prelude::*;

fn smoke() -> (ForwardModel, MeasurementSet, ComplexVolume) {
    let u = shepp_logan_pure_phase(32, EXPERIMENT_ALPHA).unwrap();
    let model = ForwardModel::new(
        make_probe(16, 6.0).unwrap(),
        make_scan_grid(32, 16, 8).unwrap(),
        make_angles(8).unwrap(),
    )
    .unwrap();
    let data = model.intensities(&u).unwrap();
    (model, data, u)
}

#[test]
fn r_factor_drops_over_ten_steps() {
    let (model, data, _) = smoke();
    for config in [SolverConfig::default().without_tv(), SolverConfig::default()] {
        let mut solver = AptSolver::new(model.clone(), data.clone(), config).unwrap();
        let mut state = solver.initial_state().unwrap();
        for _ in 0..10 {
            apt_step(&mut solver, &mut state).unwrap();
        }
        let r = state.history.r_factors();
        assert!(r[9] < r[0], "R-factor {} after 10 steps vs {} after 1", r[9], r[0]);
        assert!(state.history.rel_changes().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn perfect_fit_has_zero_objective_and_r_factor() {
    let (model, data, u) = smoke();
    let cfg = SolverConfig {
        lambda: 0.0,
        ..Default::default()
    };
    assert!(objective_value(&u, &model, &data, &cfg).unwrap() < 1e-20);
    assert!(r_factor(&u, &model, &data).unwrap() < 1e-10);
    assert_eq!(r_factor(&ComplexVolume::zeros(32), &model, &data).unwrap(), 1.0);
    let flat = ComplexVolume::from_elem(32, C64::new(1.0, 0.0));
    let tv_only = SolverConfig::default();
    let with = objective_value(&flat, &model, &data, &tv_only).unwrap();
    let without = objective_value(&flat, &model, &data, &cfg).unwrap();
    assert_eq!(with, without);
}

#[test]
fn metrics_match_direct_sums() {
    let (model, data, _) = smoke();
    let mut r = rng(77);
    let v = volume(&mut r, 32);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..data.frame_count() {
        let a = k / model.geometry().len();
        let j = k % model.geometry().len();
        let d = d_apply(model.probe(), &v, j, model.angles().angles()[a], model.geometry()).unwrap();
        for (z, &f) in d.as_slice().iter().zip(data.frame(k)) {
            num += (z.norm() - f.sqrt()).abs();
            den += f.sqrt();
        }
    }
    let got = r_factor(&v, &model, &data).unwrap();
    assert!((got - num / den).abs() <= 1e-12 * got);

    let w = volume(&mut r, 32);
    let mut diff = 0.0;
    for (a, b) in v.as_slice().iter().zip(w.as_slice()) {
        diff += (a - b).norm_sqr();
    }
    let direct = diff.sqrt() / w.norm();
    assert!((relative_change(&v, &w).unwrap() - direct).abs() <= 1e-14 * direct);
}

fn vol(data: Vec<(f64, f64)>) -> ComplexVolume {
    ComplexVolume::from_vec(4, data.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap()
}

fn pairs(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d_apply_is_bilinear(
        u in pairs(64), v in pairs(64), w1 in pairs(4), w2 in pairs(4),
        a in (-2.0f64..2.0, -2.0f64..2.0), theta in 0.0f64..3.0, j in 0usize..4,
    ) {
        let geom = make_scan_grid(4, 2, 2).unwrap();
        let theta = Angle::new(theta).unwrap();
        let a = C64::new(a.0, a.1);
        let (u, v) = (vol(u), vol(v));
        let probe = |p: &[(f64, f64)]| {
            Probe::new(aptomo::ComplexImage::from_vec(2, 2, p.iter().map(|&(x, y)| C64::new(x, y + 2.0)).collect()).unwrap()).unwrap()
        };
        let (p1, p2) = (probe(&w1), probe(&w2));

        // linear in u
        let mut comb = u.clone();
        comb.scale(a);
        comb.axpy(C64::new(1.0, 0.0), &v);
        let lhs = d_apply(&p1, &comb, j, theta, &geom).unwrap();
        let du = d_apply(&p1, &u, j, theta, &geom).unwrap();
        let dv = d_apply(&p1, &v, j, theta, &geom).unwrap();
        for ((l, x), y) in lhs.as_slice().iter().zip(du.as_slice()).zip(dv.as_slice()) {
            prop_assert!((l - (a * x + y)).norm() <= 1e-12 * (1.0 + l.norm()));
        }

        // linear in ω
        let pc = Probe::new(aptomo::ComplexImage::from_vec(
            2, 2,
            p1.as_slice().iter().zip(p2.as_slice()).map(|(x, y)| a * x + y).collect(),
        ).unwrap());
        if let Ok(pc) = pc {
            let lhs = d_apply(&pc, &u, j, theta, &geom).unwrap();
            let d2 = d_apply(&p2, &u, j, theta, &geom).unwrap();
            for ((l, x), y) in lhs.as_slice().iter().zip(du.as_slice()).zip(d2.as_slice()) {
                prop_assert!((l - (a * x + y)).norm() <= 1e-12 * (1.0 + l.norm()));
            }
        }
    }
}
