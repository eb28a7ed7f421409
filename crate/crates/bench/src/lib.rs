//! Fixtures shared by the benchmarks.

use aptomo::phantom::{make_angles, make_probe, make_scan_grid, Background};
use aptomo::{ComplexVolume, ForwardModel, MeasurementSet};

/// Pure-phase phantom, its forward model and noise-free data.
pub struct Fixture {
    pub truth: ComplexVolume,
    pub model: ForwardModel,
    pub data: MeasurementSet,
}

/// An `n³` grid with a probe of side `n/2`, fwhm `n/5` and `stepsize`.
pub fn fixture(n: usize, stepsize: usize, angles: usize) -> Fixture {
    let truth = Background::Unit.phantom(n, 1.0).expect("phantom");
    let model = ForwardModel::new(
        make_probe(n / 2, n as f64 / 5.0).expect("probe"),
        make_scan_grid(n, n / 2, stepsize).expect("scan grid"),
        make_angles(angles).expect("angles"),
    )
    .expect("model");
    let data = model.intensities(&truth).expect("intensities");
    Fixture { truth, model, data }
}
