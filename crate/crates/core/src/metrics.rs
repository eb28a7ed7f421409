//! Reconstruction quality measures: alignment-invariant SNR, R-factor,
//! intensity SNR and relative change.

use rayon::prelude::*;

use crate::error::{dim_err, param_err, Result};
use crate::forward::{ForwardModel, MeasurementSet};
use crate::grid::{ComplexImage, ComplexVolume, C64};

/// dB values at or beyond this magnitude are written as ±`DB_CAP`.
pub const DB_CAP: f64 = 300.0;

/// Default half-width of the integer translation search.
pub const DEFAULT_SHIFT_WINDOW: usize = 4;

/// Outcome of [`aligned_snr`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignedSnr {
    /// `+∞` for an exact match, `-∞` when `u` is identically zero.
    pub db: f64,
    /// Best translation `T*` as (x, y, z).
    pub shift: [i64; 3],
    /// Best complex scale `ζ*`.
    pub scale: C64,
}

/// Clamps a dB value for serialization and reports how it was produced.
pub fn serialize_db(db: f64) -> (f64, &'static str) {
    if db == f64::INFINITY {
        (DB_CAP, "exact")
    } else if db == f64::NEG_INFINITY || db.is_nan() {
        (-DB_CAP, "undefined")
    } else if db >= DB_CAP {
        (DB_CAP, "capped")
    } else if db <= -DB_CAP {
        (-DB_CAP, "capped")
    } else {
        (db, "")
    }
}

/// `v(t + T)` with zero fill; `shift` is (x, y, z).
pub fn translate(v: &ComplexVolume, shift: [i64; 3]) -> ComplexVolume {
    let n = v.n() as i64;
    ComplexVolume::from_fn(v.n(), |x, y, z| {
        let (sx, sy, sz) = (x as i64 + shift[0], y as i64 + shift[1], z as i64 + shift[2]);
        if (0..n).contains(&sx) && (0..n).contains(&sy) && (0..n).contains(&sz) {
            v.get(sx as usize, sy as usize, sz as usize)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// `(Σ conj(u(t+T))·g(t), Σ |u(t+T)|²)` over the overlap.
fn shifted_moments(u: &ComplexVolume, g: &ComplexVolume, shift: [i64; 3]) -> (C64, f64) {
    let n = u.n() as i64;
    let range = |s: i64| (0.max(-s), n.min(n - s));
    let (x0, x1) = range(shift[0]);
    let (y0, y1) = range(shift[1]);
    let (z0, z1) = range(shift[2]);
    let mut cross = C64::new(0.0, 0.0);
    let mut energy = 0.0;
    let us = u.as_slice();
    let gs = g.as_slice();
    for z in z0..z1 {
        for y in y0..y1 {
            let gi = ((z * n + y) * n) as usize;
            let ui = ((z + shift[2]) * n + y + shift[1]) * n + shift[0];
            for x in x0 as usize..x1 as usize {
                let a = us[(ui + x as i64) as usize];
                cross += a.conj() * gs[gi + x];
                energy += a.norm_sqr();
            }
        }
    }
    (cross, energy)
}

/// SNR of `u` against `truth`, optimized over a complex scale and an integer
/// translation in `[-window, window]³` (zero fill at the borders).
pub fn aligned_snr(u: &ComplexVolume, truth: &ComplexVolume, window: usize) -> Result<AlignedSnr> {
    if !u.same_shape(truth) {
        return dim_err(format!("{}³ reconstruction against {}³ truth", u.n(), truth.n()));
    }
    let w = window as i64;
    let shifts: Vec<[i64; 3]> = (-w..=w)
        .flat_map(|z| (-w..=w).flat_map(move |y| (-w..=w).map(move |x| [x, y, z])))
        .collect();
    let g2 = truth.norm_sqr();
    let candidates: Vec<(f64, [i64; 3], C64)> = shifts
        .par_iter()
        .map(|&s| {
            let (cross, energy) = shifted_moments(u, truth, s);
            if energy == 0.0 {
                (g2, s, C64::new(0.0, 0.0))
            } else {
                (g2 - cross.norm_sqr() / energy, s, cross / energy)
            }
        })
        .collect();
    // first minimum in scan order; ties resolve deterministically
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.0 < best.0 {
            best = *c;
        }
    }
    let (_, shift, scale) = best;
    let scaled_norm = scale.norm_sqr() * u.norm_sqr();
    if scaled_norm == 0.0 {
        return Ok(AlignedSnr {
            db: f64::NEG_INFINITY,
            shift,
            scale,
        });
    }
    let shifted = translate(u, shift);
    let residual: f64 = shifted
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, g)| (scale * a - g).norm_sqr())
        .sum();
    let db = if residual == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * (residual / scaled_norm).log10()
    };
    Ok(AlignedSnr { db, shift, scale })
}

/// `Σ ‖|D| - √f‖₁ / Σ ‖√f‖₁` for precomputed far fields.
pub fn r_factor_from_frames(frames: &[ComplexImage], data: &MeasurementSet) -> Result<f64> {
    if frames.len() != data.frame_count() {
        return dim_err(format!("{} model frames for {} measurements", frames.len(), data.frame_count()));
    }
    let parts: Vec<(f64, f64)> = frames
        .par_iter()
        .enumerate()
        .map(|(k, d)| {
            let f = data.frame(k);
            d.as_slice().iter().zip(f).fold((0.0, 0.0), |(num, den), (z, &fv)| {
                let s = fv.sqrt();
                (num + (z.norm() - s).abs(), den + s)
            })
        })
        .collect();
    let (num, den) = parts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    if den == 0.0 {
        return param_err("R-factor undefined for all-zero data");
    }
    Ok(num / den)
}

/// R-factor (fitting error) of `u` under `model` against `data`.
pub fn r_factor(u: &ComplexVolume, model: &ForwardModel, data: &MeasurementSet) -> Result<f64> {
    r_factor_from_frames(&model.frames(u)?, data)
}

/// `-10 log₁₀(Σ‖f - f^η‖² / Σ‖f^η‖²)`; `+∞` when the two agree exactly.
pub fn snr_intensity(noisy: &[f64], clean_scaled: &[f64]) -> Result<f64> {
    if noisy.len() != clean_scaled.len() {
        return dim_err(format!("{} vs {} intensity values", noisy.len(), clean_scaled.len()));
    }
    let den: f64 = clean_scaled.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return param_err("intensity SNR undefined for zero clean intensity");
    }
    let num: f64 = noisy
        .iter()
        .zip(clean_scaled)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if num == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * (num / den).log10())
}

/// `‖prev - next‖ / ‖next‖`.
pub fn relative_change(prev: &ComplexVolume, next: &ComplexVolume) -> Result<f64> {
    if !prev.same_shape(next) {
        return dim_err("volumes differ in shape");
    }
    let den = next.norm_sqr();
    if den == 0.0 {
        return param_err("relative change undefined for a zero iterate");
    }
    let num = crate::grid::norm_sqr(
        &prev
            .as_slice()
            .par_iter()
            .zip(next.as_slice())
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    Ok((num / den).sqrt())
}
