//! Rotation about the z-axis with bilinear interpolation, the axis-sum X-ray
//! projection along y, and their exact adjoints.

use rayon::prelude::*;

use super::{Angle, ComplexImage, ComplexVolume, C64};
use crate::error::{dim_err, Result};

/// Source coordinates closer than this to a lattice point are snapped onto it,
/// so rotations by multiples of π/2 are exact permutations.
const SNAP: f64 = 1e-9;

/// Bilinear interpolation weights of one in-plane rotation, shared by every
/// z-slice. Row `p = y * n + x` of the sparse matrix lists the source pixels
/// (and weights) that output pixel `p` reads.
#[derive(Clone, Debug)]
pub struct RotationTable {
    n: usize,
    starts: Vec<u32>,
    src: Vec<u32>,
    weight: Vec<f64>,
}

impl RotationTable {
    pub fn new(n: usize, angle: Angle) -> Self {
        let theta = angle.radians();
        let (sin, cos) = theta.sin_cos();
        let c = (n as f64 - 1.0) / 2.0;
        let mut starts = Vec::with_capacity(n * n + 1);
        let mut src = Vec::with_capacity(4 * n * n);
        let mut weight = Vec::with_capacity(4 * n * n);
        starts.push(0);
        for y in 0..n {
            for x in 0..n {
                let dx = x as f64 - c;
                let dy = y as f64 - c;
                let xs = snap(c + cos * dx + sin * dy);
                let ys = snap(c - sin * dx + cos * dy);
                let x0 = xs.floor();
                let y0 = ys.floor();
                let fx = xs - x0;
                let fy = ys - y0;
                let taps = [
                    (x0, y0, (1.0 - fx) * (1.0 - fy)),
                    (x0 + 1.0, y0, fx * (1.0 - fy)),
                    (x0, y0 + 1.0, (1.0 - fx) * fy),
                    (x0 + 1.0, y0 + 1.0, fx * fy),
                ];
                for (tx, ty, w) in taps {
                    if w == 0.0 || tx < 0.0 || ty < 0.0 || tx >= n as f64 || ty >= n as f64 {
                        continue;
                    }
                    src.push((ty as usize * n + tx as usize) as u32);
                    weight.push(w);
                }
                starts.push(src.len() as u32);
            }
        }
        Self {
            n,
            starts,
            src,
            weight,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn taps(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.starts[p] as usize, self.starts[p + 1] as usize);
        self.src[a..b]
            .iter()
            .zip(&self.weight[a..b])
            .map(|(&s, &w)| (s as usize, w))
    }

    /// Interpolated value of output pixel `p` read from `plane`.
    #[inline]
    fn sample(&self, plane: &[C64], p: usize) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (s, w) in self.taps(p) {
            acc += plane[s] * w;
        }
        acc
    }

    /// Scatters `value` into `plane` with the weights of output pixel `p`.
    #[inline]
    fn scatter(&self, plane: &mut [C64], p: usize, value: C64) {
        for (s, w) in self.taps(p) {
            plane[s] += value * w;
        }
    }
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

fn check_table(u: &ComplexVolume, table: &RotationTable) -> Result<()> {
    if u.n() != table.n() {
        return dim_err(format!("{}³ volume with a rotation table for side {}", u.n(), table.n()));
    }
    Ok(())
}

/// Rotates every z-slice of `u` by `theta` about the slice center
/// `((n-1)/2, (n-1)/2)`. Samples falling outside the grid read as zero.
pub fn rotate_volume(u: &ComplexVolume, theta: Angle) -> ComplexVolume {
    let table = RotationTable::new(u.n(), theta);
    rotate_with(u, &table)
}

fn rotate_with(u: &ComplexVolume, table: &RotationTable) -> ComplexVolume {
    let n = u.n();
    let plane = n * n;
    let mut out = ComplexVolume::zeros(n);
    out.as_mut_slice()
        .par_chunks_mut(plane)
        .zip(u.as_slice().par_chunks(plane))
        .for_each(|(dst, src)| {
            for (p, d) in dst.iter_mut().enumerate() {
                *d = table.sample(src, p);
            }
        });
    out
}

/// Transpose of [`rotate_volume`]: scatters with the same bilinear weights.
/// This is not the rotation by `-theta`.
pub fn rotate_adjoint(u: &ComplexVolume, theta: Angle) -> ComplexVolume {
    let table = RotationTable::new(u.n(), theta);
    let n = u.n();
    let plane = n * n;
    let mut out = ComplexVolume::zeros(n);
    out.as_mut_slice()
        .par_chunks_mut(plane)
        .zip(u.as_slice().par_chunks(plane))
        .for_each(|(dst, src)| {
            for (p, v) in src.iter().enumerate() {
                table.scatter(dst, p, *v);
            }
        });
    out
}

/// Sums `u` along the beam (y) axis onto the n×n `(z, x)` detector image.
pub fn xray_project(u: &ComplexVolume) -> ComplexImage {
    let n = u.n();
    let mut out = ComplexImage::zeros(n, n);
    out.as_mut_slice()
        .par_chunks_mut(n)
        .zip(u.as_slice().par_chunks(n * n))
        .for_each(|(row, plane)| {
            for line in plane.chunks(n) {
                for (r, v) in row.iter_mut().zip(line) {
                    *r += *v;
                }
            }
        });
    out
}

/// Adjoint of [`xray_project`]: replicates the image along the beam axis.
pub fn backproject(img: &ComplexImage, n: usize) -> Result<ComplexVolume> {
    if img.rows() != n || img.cols() != n {
        return dim_err(format!("{}×{} image cannot back-project into a {n}³ volume", img.rows(), img.cols()));
    }
    let mut out = ComplexVolume::zeros(n);
    out.as_mut_slice()
        .par_chunks_mut(n * n)
        .zip(img.as_slice().par_chunks(n))
        .for_each(|(plane, row)| {
            for line in plane.chunks_mut(n) {
                line.copy_from_slice(row);
            }
        });
    Ok(out)
}

/// `Q R_θ u` without materializing the rotated volume. Bit-identical to
/// `xray_project(&rotate_volume(u, θ))`.
pub fn project_rotated(u: &ComplexVolume, table: &RotationTable) -> Result<ComplexImage> {
    check_table(u, table)?;
    let n = u.n();
    let mut out = ComplexImage::zeros(n, n);
    out.as_mut_slice()
        .par_chunks_mut(n)
        .zip(u.as_slice().par_chunks(n * n))
        .for_each(|(row, plane)| project_plane(table, plane, row));
    Ok(out)
}

#[inline]
pub(crate) fn project_plane(table: &RotationTable, plane: &[C64], row: &mut [C64]) {
    let n = row.len();
    for y in 0..n {
        for (x, r) in row.iter_mut().enumerate() {
            *r += table.sample(plane, y * n + x);
        }
    }
}

#[inline]
pub(crate) fn backproject_plane(table: &RotationTable, row: &[C64], plane: &mut [C64]) {
    let n = row.len();
    for y in 0..n {
        for (x, v) in row.iter().enumerate() {
            table.scatter(plane, y * n + x, *v);
        }
    }
}

/// Accumulates `(Q R_θ)ᵀ img` into `out`.
pub fn backproject_rotated_add(img: &ComplexImage, table: &RotationTable, out: &mut ComplexVolume) -> Result<()> {
    check_table(out, table)?;
    let n = out.n();
    if img.rows() != n || img.cols() != n {
        return dim_err(format!("{}×{} image for a {n}³ volume", img.rows(), img.cols()));
    }
    out.as_mut_slice()
        .par_chunks_mut(n * n)
        .zip(img.as_slice().par_chunks(n))
        .for_each(|(plane, row)| backproject_plane(table, row, plane));
    Ok(())
}
