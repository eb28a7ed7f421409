//! Deterministic generators for the synthetic experiment: the 3D Shepp-Logan
//! pure-phase sample, a Gaussian probe, grid scans and uniform angle sets.

use std::f64::consts::PI;

use crate::error::{param_err, Error, Result};
use crate::forward::{AngleSet, Probe, ScanGeometry};
use crate::grid::{Angle, ComplexImage, ComplexVolume, C64};

/// The pinned ellipsoid table shipped with the crate.
pub const SHEPP_LOGAN_TABLE: &str = include_str!("../data/shepp_logan_3d.txt");

/// Default peak phase of the pure-phase sample, in radians.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Peak phase used by the experiment runner. At this contrast the simulated
/// measurements reach an intensity SNR near 48 dB (η = 1) and 38 dB (η = 0.1).
pub const EXPERIMENT_ALPHA: f64 = PI;

/// One ellipsoid in unit-cube coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    /// Rotation about the ellipsoid's z-axis, degrees.
    pub angle_deg: f64,
    pub intensity: f64,
}

impl Ellipsoid {
    /// Whether the unit-cube point `p` lies inside (boundary included).
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let phi = self.angle_deg * PI / 180.0;
        let (s, c) = phi.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let dz = p[2] - self.center[2];
        let xr = c * dx + s * dy;
        let yr = -s * dx + c * dy;
        let [a, b, cz] = self.semi_axes;
        (xr / a).powi(2) + (yr / b).powi(2) + (dz / cz).powi(2) <= 1.0
    }
}

/// Parses a whitespace table of `cx cy cz a b c angle intensity` rows; `#`
/// starts a comment.
pub fn parse_ellipsoids(text: &str) -> Result<Vec<Ellipsoid>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let body = line.split('#').next().unwrap_or("").trim();
        if !body.is_empty() {
            let vals: Vec<f64> = body
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    offset,
                    message: format!("bad ellipsoid value: {e}"),
                })?;
            if vals.len() != 8 {
                return Err(Error::Parse {
                    offset,
                    message: format!("ellipsoid row has {} columns, expected 8", vals.len()),
                });
            }
            if vals[3..6].iter().any(|&v| v <= 0.0) {
                return Err(Error::Parse {
                    offset,
                    message: "semi-axes must be positive".into(),
                });
            }
            out.push(Ellipsoid {
                center: [vals[0], vals[1], vals[2]],
                semi_axes: [vals[3], vals[4], vals[5]],
                angle_deg: vals[6],
                intensity: vals[7],
            });
        }
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

pub fn default_ellipsoids() -> Vec<Ellipsoid> {
    parse_ellipsoids(SHEPP_LOGAN_TABLE).expect("shipped phantom table is valid")
}

/// Unit-cube coordinate of voxel index `i` on an n-point axis (cell centers).
/// Mirrored indices map to exactly negated coordinates.
#[inline]
pub fn unit_coord(i: usize, n: usize) -> f64 {
    (2.0 * i as f64 - (n as f64 - 1.0)) / n as f64
}

/// Summed ellipsoid intensity `s(t)` per voxel, clamped at zero.
pub fn intensity_map(ellipsoids: &[Ellipsoid], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let p = [unit_coord(x, n), unit_coord(y, n), unit_coord(z, n)];
                let mut s = 0.0;
                for e in ellipsoids {
                    if e.contains(p) {
                        s += e.intensity;
                    }
                }
                // 1 - 0.8 - 0.2 leaves rounding residue
                out.push(if s.abs() < 1e-12 { 0.0 } else { s.max(0.0) });
            }
        }
    }
    out
}

/// Pure-phase sample `exp(i·α·s/s_max) - 1` from an arbitrary ellipsoid table.
pub fn phase_volume(ellipsoids: &[Ellipsoid], n: usize, alpha: f64) -> Result<ComplexVolume> {
    if n < 8 {
        return param_err(format!("phantom side {n} < 8"));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return param_err(format!("phase contrast α = {alpha} must be positive"));
    }
    let s = intensity_map(ellipsoids, n);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let data = s
        .iter()
        .map(|&v| {
            if smax == 0.0 || v == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let phi = alpha * v / smax;
            // exp(iφ) - 1 without cancellation
            let half = (phi / 2.0).sin();
            C64::new(-2.0 * half * half, phi.sin())
        })
        .collect();
    ComplexVolume::from_vec(n, data)
}

/// The 3D Shepp-Logan pure-phase phantom from the shipped table.
pub fn shepp_logan_3d(n: usize, alpha: f64) -> Result<ComplexVolume> {
    phase_volume(&default_ellipsoids(), n, alpha)
}

/// The same sample with unit background: `exp(i·α·s/s_max)`, so every voxel
/// has modulus exactly 1.
pub fn shepp_logan_pure_phase(n: usize, alpha: f64) -> Result<ComplexVolume> {
    let mut u = shepp_logan_3d(n, alpha)?;
    for v in u.as_mut_slice() {
        *v += 1.0;
    }
    Ok(u)
}

/// Value of voxels outside every ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Background {
    /// `exp(iαs) - 1`: empty space is 0.
    Zero,
    /// `exp(iαs)`: empty space is 1.
    Unit,
}

impl Background {
    pub fn phantom(self, n: usize, alpha: f64) -> Result<ComplexVolume> {
        match self {
            Background::Zero => shepp_logan_3d(n, alpha),
            Background::Unit => shepp_logan_pure_phase(n, alpha),
        }
    }
}

impl std::fmt::Display for Background {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Background::Zero => "0",
            Background::Unit => "1",
        })
    }
}

impl std::str::FromStr for Background {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" | "zero" => Ok(Background::Zero),
            "1" | "unit" => Ok(Background::Unit),
            other => Err(Error::Config(format!("background '{other}' must be 0 or 1"))),
        }
    }
}

/// Gaussian-amplitude probe with peak 1 and flat phase, centered at
/// `((m-1)/2, (m-1)/2)`; `fwhm` is the full width at half maximum of the
/// amplitude, in pixels.
pub fn make_probe(side: usize, fwhm: f64) -> Result<Probe> {
    if side == 0 || !(fwhm > 0.0 && fwhm < side as f64) {
        return param_err(format!("probe FWHM {fwhm} must lie in (0, {side})"));
    }
    let sigma = fwhm_to_sigma(fwhm);
    let c = (side as f64 - 1.0) / 2.0;
    let img = ComplexImage::from_fn(side, side, |r, col| {
        let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
        C64::new((-d2 / (2.0 * sigma * sigma)).exp(), 0.0)
    });
    Probe::new(img)
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * 2f64.ln()).sqrt())
}

/// Per-axis offsets `0, s, 2s, …` up to `n - m`, with `n - m` appended when
/// missing.
pub fn scan_offsets(n: usize, side: usize, step: usize) -> Vec<usize> {
    let last = n - side;
    let mut offs: Vec<usize> = (0..=last).step_by(step).collect();
    if offs.last() != Some(&last) {
        offs.push(last);
    }
    offs
}

/// Row-major Cartesian grid scan over the n×n plane.
pub fn make_scan_grid(n: usize, side: usize, step: usize) -> Result<ScanGeometry> {
    if step == 0 {
        return param_err("scan stepsize must be positive");
    }
    if side == 0 || side > n {
        return param_err(format!("window side {side} must be in 1..={n}"));
    }
    let offs = scan_offsets(n, side, step);
    let positions = offs
        .iter()
        .flat_map(|&r| offs.iter().map(move |&c| (r, c)))
        .collect();
    ScanGeometry::new(n, side, positions, Some(step))
}

/// `θ_k = kπ/K`, k = 0..K.
pub fn make_angles(count: usize) -> Result<AngleSet> {
    if count < 1 {
        return param_err("need at least one angle");
    }
    let angles = (0..count)
        .map(|k| Angle::new(k as f64 * PI / count as f64))
        .collect::<Result<Vec<_>>>()?;
    AngleSet::new(angles)
}
