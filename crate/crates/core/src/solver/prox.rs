//! Closed-form proximal maps of the data-fidelity terms and the isotropic
//! soft-thresholding of the TV splitting variable.

use rayon::prelude::*;

use super::Metric;
use crate::error::{dim_err, Result};
use crate::grid::{ComplexImage, Field3, C64};

/// Complex sign `z/|z|`, with `sign(0) = 1`.
#[inline]
pub fn csign(z: C64) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        C64::new(1.0, 0.0)
    } else {
        z / r
    }
}

/// Minimizer magnitude of `½(ρ - √f)² + (r₂/2)(ρ - a)²`.
#[inline]
pub fn pagm_magnitude(a: f64, f: f64, r2: f64) -> f64 {
    (f.sqrt() + r2 * a) / (1.0 + r2)
}

/// Positive root of `(1 + r₂)ρ² - r₂aρ - f = 0`.
#[inline]
pub fn pipm_magnitude(a: f64, f: f64, r2: f64) -> f64 {
    (r2 * a + (r2 * r2 * a * a + 4.0 * (1.0 + r2) * f).sqrt()) / (2.0 * (1.0 + r2))
}

#[inline]
pub fn prox_pixel(metric: Metric, zt: C64, f: f64, r2: f64) -> C64 {
    let a = zt.norm();
    let rho = match metric {
        Metric::Pagm => pagm_magnitude(a, f, r2),
        Metric::Pipm => pipm_magnitude(a, f, r2),
    };
    csign(zt) * rho
}

fn prox_frame(metric: Metric, zt: &ComplexImage, f: &[f64], r2: f64) -> Result<ComplexImage> {
    if zt.as_slice().len() != f.len() {
        return dim_err(format!("{} model pixels for {} intensities", zt.as_slice().len(), f.len()));
    }
    let data = zt
        .as_slice()
        .iter()
        .zip(f)
        .map(|(&z, &fv)| prox_pixel(metric, z, fv, r2))
        .collect();
    ComplexImage::from_vec(zt.rows(), zt.cols(), data)
}

/// Amplitude-Gaussian proximal map: magnitude `(√f + r₂|z̃|)/(1 + r₂)`, phase
/// of `z̃` kept.
pub fn prox_z_pagm(zt: &ComplexImage, f: &[f64], r2: f64) -> Result<ComplexImage> {
    prox_frame(Metric::Pagm, zt, f, r2)
}

/// Intensity-Poisson proximal map.
pub fn prox_z_pipm(zt: &ComplexImage, f: &[f64], r2: f64) -> Result<ComplexImage> {
    prox_frame(Metric::Pipm, zt, f, r2)
}

/// Isotropic shrinkage: each voxel's 3-channel vector is scaled by
/// `max(0, 1 - τ/|v|)`, where `|v|` is the Euclidean norm over channels.
pub fn shrink_p(p: &Field3, tau: f64) -> Field3 {
    let mut out = p.clone();
    let [x, y, z] = out.channels_mut();
    x.as_mut_slice()
        .par_iter_mut()
        .zip(y.as_mut_slice().par_iter_mut())
        .zip(z.as_mut_slice().par_iter_mut())
        .for_each(|((a, b), c)| {
            let mag = (a.norm_sqr() + b.norm_sqr() + c.norm_sqr()).sqrt();
            let s = if mag > 0.0 { (1.0 - tau / mag).max(0.0) } else { 0.0 };
            *a *= s;
            *b *= s;
            *c *= s;
        });
    out
}
