//! Discrete grids and the linear operators acting on them.
//!
//! Volumes are stored z-major (`x` fastest): voxel `(x, y, z)` lives at
//! `(z * n + y) * n + x`. Tomographic rotation is about the z-axis, the beam
//! travels along y, and projected images live on the `(x, z)` detector plane
//! with rows indexed by z and columns by x.

mod diff;
mod fft;
mod rotate;
mod window;

pub use diff::{divergence3, gradient3, laplacian3};
pub use fft::{dft2_normalized, idft2_normalized, Dft2};
pub use rotate::{
    backproject, backproject_rotated_add, project_rotated, rotate_adjoint, rotate_volume,
    xray_project, RotationTable,
};
pub use window::{embed_window, embed_window_add, extract_window};
pub(crate) use rotate::{backproject_plane, project_plane};

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{dim_err, param_err, Result};

pub type C64 = Complex64;

/// Block length for the chunked reductions; fixed so results do not depend on
/// the thread count.
const REDUCE_CHUNK: usize = 1 << 14;

/// `Σ a·conj(b)` with a reduction order independent of the rayon pool size.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    assert_eq!(a.len(), b.len());
    let partial: Vec<C64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(ca, cb)| {
            ca.iter()
                .zip(cb)
                .fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x * y.conj())
        })
        .collect();
    partial.into_iter().sum()
}

/// `Σ |a|²`, deterministically reduced.
pub fn norm_sqr(a: &[C64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
        .collect();
    partial.into_iter().sum()
}

/// Complex n×n×n sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVolume {
    n: usize,
    data: Vec<C64>,
}

impl ComplexVolume {
    pub fn zeros(n: usize) -> Self {
        Self::from_elem(n, C64::new(0.0, 0.0))
    }

    pub fn from_elem(n: usize, value: C64) -> Self {
        assert!(n >= 2, "volume side must be at least 2");
        Self {
            n,
            data: vec![value; n * n * n],
        }
    }

    pub fn from_vec(n: usize, data: Vec<C64>) -> Result<Self> {
        if n < 2 {
            return param_err(format!("volume side {n} < 2"));
        }
        if data.len() != n * n * n {
            return dim_err(format!("{} values for a {n}³ volume", data.len()));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return param_err("volume contains non-finite values");
        }
        Ok(Self { n, data })
    }

    /// Builds a volume from `f(x, y, z)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> C64) -> Self {
        assert!(n >= 2, "volume side must be at least 2");
        let mut data = Vec::with_capacity(n * n * n);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.n + y) * self.n + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> C64 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: C64) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    /// The n×n plane at height `z`, indexed `y * n + x`.
    pub fn slice_z(&self, z: usize) -> &[C64] {
        let s = self.n * self.n;
        &self.data[z * s..(z + 1) * s]
    }

    pub fn dot(&self, other: &Self) -> C64 {
        dot(&self.data, &other.data)
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: C64, x: &Self) {
        assert_eq!(self.n, x.n);
        self.data
            .par_iter_mut()
            .zip(x.data.par_iter())
            .for_each(|(s, v)| *s += a * v);
    }

    pub fn scale(&mut self, a: C64) {
        self.data.par_iter_mut().for_each(|s| *s *= a);
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

/// Complex h×w image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexImage {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_elem(rows: usize, cols: usize, value: C64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return dim_err(format!("{} values for a {rows}×{cols} image", data.len()));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return param_err("image contains non-finite values");
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn dot(&self, other: &Self) -> C64 {
        dot(&self.data, &other.data)
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Three stacked finite-difference channels of a volume (x, y, z order).
#[derive(Clone, Debug, PartialEq)]
pub struct Field3 {
    pub x: ComplexVolume,
    pub y: ComplexVolume,
    pub z: ComplexVolume,
}

impl Field3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: ComplexVolume::zeros(n),
            y: ComplexVolume::zeros(n),
            z: ComplexVolume::zeros(n),
        }
    }

    pub fn new(x: ComplexVolume, y: ComplexVolume, z: ComplexVolume) -> Result<Self> {
        if !(x.same_shape(&y) && y.same_shape(&z)) {
            return dim_err("field channels differ in shape");
        }
        Ok(Self { x, y, z })
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn channels(&self) -> [&ComplexVolume; 3] {
        [&self.x, &self.y, &self.z]
    }

    pub fn channels_mut(&mut self) -> [&mut ComplexVolume; 3] {
        [&mut self.x, &mut self.y, &mut self.z]
    }

    pub fn dot(&self, other: &Self) -> C64 {
        self.x.dot(&other.x) + self.y.dot(&other.y) + self.z.dot(&other.z)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x.norm_sqr() + self.y.norm_sqr() + self.z.norm_sqr()
    }

    pub fn axpy(&mut self, a: C64, other: &Self) {
        self.x.axpy(a, &other.x);
        self.y.axpy(a, &other.y);
        self.z.axpy(a, &other.z);
    }

    /// Pointwise `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other);
        out
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }
}

/// Tomographic rotation angle in `[0, π)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Angle(f64);

impl Angle {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..PI).contains(&theta) {
            return param_err(format!("angle {theta} outside [0, π)"));
        }
        Ok(Self(theta))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}
