//! Two-step baseline: independent 2D ptychographic phase retrieval per angle,
//! global-phase alignment, then linear tomographic inversion by CG.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{dim_err, Error, Result};
use crate::forward::{AngleSet, MeasurementSet, Probe, ScanGeometry};
use crate::grid::{backproject_plane, project_plane};
use crate::grid::{embed_window_add, extract_window, ComplexImage, ComplexVolume, Dft2, RotationTable, C64};
use crate::solver::{cg_solve, csign, prox_pixel, Metric};

/// A 2D reconstruction whose final R-factor exceeds this is marked failed.
pub const DEFAULT_FAILURE_R_FACTOR: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct TwoStepConfig {
    /// Outer iterations of each 2D phase retrieval.
    pub ptycho_iters: usize,
    pub r2: f64,
    pub metric: Metric,
    pub tomo_cg_iters: usize,
    pub failure_r_factor: f64,
}

impl Default for TwoStepConfig {
    fn default() -> Self {
        Self {
            ptycho_iters: 100,
            r2: 1.0,
            metric: Metric::Pagm,
            tomo_cg_iters: 10,
            failure_r_factor: DEFAULT_FAILURE_R_FACTOR,
        }
    }
}

/// Far-field operator of a single projected plane.
struct Plane2d<'a> {
    probe: &'a Probe,
    geometry: &'a ScanGeometry,
    dft: Dft2,
}

impl Plane2d<'_> {
    fn frames(&self, v: &ComplexImage) -> Result<Vec<ComplexImage>> {
        self.geometry
            .positions()
            .par_iter()
            .map(|&pos| {
                let mut w = extract_window(v, pos, self.geometry.side())?;
                for (x, p) in w.as_mut_slice().iter_mut().zip(self.probe.as_slice()) {
                    *x *= p;
                }
                self.dft.forward_in_place(w.as_mut_slice());
                Ok(w)
            })
            .collect()
    }

    fn adjoint(&self, frames: &[ComplexImage]) -> Result<ComplexImage> {
        let parts: Vec<ComplexImage> = frames
            .par_iter()
            .map(|w| {
                let mut x = w.clone();
                self.dft.inverse_in_place(x.as_mut_slice());
                for (v, p) in x.as_mut_slice().iter_mut().zip(self.probe.as_slice()) {
                    *v *= p.conj();
                }
                x
            })
            .collect();
        let n = self.geometry.n();
        let mut acc = ComplexImage::zeros(n, n);
        for (w, &pos) in parts.iter().zip(self.geometry.positions()) {
            embed_window_add(w, pos, &mut acc)?;
        }
        Ok(acc)
    }
}

fn r_factor_2d(frames: &[ComplexImage], data: &MeasurementSet) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, d) in frames.iter().enumerate() {
        for (z, &f) in d.as_slice().iter().zip(data.frame(k)) {
            let s = f.sqrt();
            num += (z.norm() - s).abs();
            den += s;
        }
    }
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

/// Output of one 2D reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct Ptycho2d {
    pub image: ComplexImage,
    pub r_factor: f64,
    pub iters: usize,
}

/// ADMM phase retrieval of one projected plane `v` from the frames of a single
/// angle with a known probe. The v-step is exact because its normal operator
/// is the diagonal probe weight. Starts from `init` (all ones if `None`) and
/// runs exactly `iters` iterations.
pub fn ptycho_solve_2d(
    data: &MeasurementSet,
    probe: &Probe,
    iters: usize,
    r2: f64,
    metric: Metric,
    init: Option<&ComplexImage>,
) -> Result<Ptycho2d> {
    if data.angles().len() != 1 {
        return dim_err(format!("expected one angle, got {}", data.angles().len()));
    }
    let geometry = data.geometry();
    let n = geometry.n();
    if probe.side() != geometry.side() {
        return dim_err("probe side differs from window side");
    }
    if !(r2 > 0.0) {
        return Err(Error::Config(format!("r2 = {r2} must be positive")));
    }
    let weight = crate::forward::probe_weight(probe, geometry);
    if let Some(i) = weight.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::Precondition(format!(
            "probe weight vanishes at pixel ({}, {})",
            i / n,
            i % n
        )));
    }
    let op = Plane2d {
        probe,
        geometry,
        dft: Dft2::new(geometry.side()),
    };
    let mut v = match init {
        Some(v0) if v0.rows() == n && v0.cols() == n => v0.clone(),
        Some(_) => return dim_err("initial image does not match the scan plane"),
        None => ComplexImage::from_elem(n, n, C64::new(1.0, 0.0)),
    };
    let mut z = op.frames(&v)?;
    let mut lambda: Vec<ComplexImage> = z.iter().map(|f| ComplexImage::zeros(f.rows(), f.cols())).collect();
    let mut d = z.clone();
    for _ in 0..iters {
        let sums: Vec<ComplexImage> = z
            .iter()
            .zip(&lambda)
            .map(|(a, b)| {
                let mut s = a.clone();
                for (x, y) in s.as_mut_slice().iter_mut().zip(b.as_slice()) {
                    *x += *y;
                }
                s
            })
            .collect();
        v = op.adjoint(&sums)?;
        for (x, w) in v.as_mut_slice().iter_mut().zip(&weight) {
            *x /= *w;
        }
        d = op.frames(&v)?;
        z = d
            .par_iter()
            .zip(lambda.par_iter())
            .enumerate()
            .map(|(k, (dk, lk))| {
                let f = data.frame(k);
                let mut out = dk.clone();
                for ((o, l), &fv) in out.as_mut_slice().iter_mut().zip(lk.as_slice()).zip(f) {
                    *o = prox_pixel(metric, *o - *l, fv, r2);
                }
                out
            })
            .collect();
        for ((l, zk), dk) in lambda.iter_mut().zip(&z).zip(&d) {
            for ((a, b), c) in l.as_mut_slice().iter_mut().zip(zk.as_slice()).zip(dk.as_slice()) {
                *a += *b - *c;
            }
        }
    }
    if iters == 0 {
        d = op.frames(&v)?;
    }
    Ok(Ptycho2d {
        r_factor: r_factor_2d(&d, data),
        image: v,
        iters,
    })
}

/// Multiplies `v` by a unit scalar so that the mean over its one-pixel border
/// has zero phase. Returns the image and `true` when that mean is zero (image
/// left unchanged).
pub fn align_global_phase(v: &ComplexImage) -> (ComplexImage, bool) {
    let (rows, cols) = (v.rows(), v.cols());
    let mut sum = C64::new(0.0, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                sum += v.get(r, c);
            }
        }
    }
    if sum == C64::new(0.0, 0.0) {
        return (v.clone(), true);
    }
    let rot = csign(sum).conj();
    let data = v.as_slice().iter().map(|x| x * rot).collect();
    (ComplexImage::from_vec(rows, cols, data).expect("same shape"), false)
}

/// One projected image per angle with a convergence flag.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionStack {
    pub images: Vec<ComplexImage>,
    pub converged: Vec<bool>,
}

impl ProjectionStack {
    pub fn new(images: Vec<ComplexImage>, converged: Vec<bool>) -> Result<Self> {
        if images.len() != converged.len() {
            return dim_err("one flag per projection is required");
        }
        Ok(Self { images, converged })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// CG on `Σ_θ (QR_θ)ᵀQR_θ u = Σ_θ (QR_θ)ᵀ v_θ` over the converged angles,
/// starting from zero.
pub fn tomo_solve_cg(stack: &ProjectionStack, angles: &AngleSet, cg_iters: usize) -> Result<ComplexVolume> {
    if stack.len() != angles.len() {
        return dim_err(format!("{} projections for {} angles", stack.len(), angles.len()));
    }
    let used: Vec<usize> = (0..stack.len()).filter(|&a| stack.converged[a]).collect();
    if used.is_empty() {
        return Err(Error::Precondition("no converged projection to invert".into()));
    }
    let n = stack.images[used[0]].rows();
    if stack.images.iter().any(|v| v.rows() != n || v.cols() != n) {
        return dim_err("projections must all be n×n");
    }
    let tables: Vec<RotationTable> = used
        .iter()
        .map(|&a| RotationTable::new(n, angles.angles()[a]))
        .collect();
    let images: Vec<&ComplexImage> = used.iter().map(|&a| &stack.images[a]).collect();

    let mut rhs = ComplexVolume::zeros(n);
    rhs.as_mut_slice()
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(z, dst)| {
            for (t, img) in tables.iter().zip(&images) {
                backproject_plane(t, &img.as_slice()[z * n..(z + 1) * n], dst);
            }
        });
    let normal = |u: &ComplexVolume| {
        let mut out = ComplexVolume::zeros(n);
        out.as_mut_slice()
            .par_chunks_mut(n * n)
            .zip(u.as_slice().par_chunks(n * n))
            .for_each(|(dst, src)| {
                let mut row = vec![C64::new(0.0, 0.0); n];
                for t in &tables {
                    row.fill(C64::new(0.0, 0.0));
                    project_plane(t, src, &mut row);
                    backproject_plane(t, &row, dst);
                }
            });
        out
    };
    let (u, _) = cg_solve(normal, &rhs, &ComplexVolume::zeros(n), cg_iters, 0.0);
    Ok(u)
}

/// Per-angle outcome of the 2D stage.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleReport {
    pub theta: f64,
    pub converged: bool,
    pub r_factor_2d: f64,
    pub iters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoStepOutput {
    /// `None` when every angle failed.
    pub volume: Option<ComplexVolume>,
    pub report: Vec<AngleReport>,
    pub stack: ProjectionStack,
}

impl TwoStepOutput {
    pub fn failed(&self) -> bool {
        self.volume.is_none()
    }

    /// CSV with header `theta,converged,r_factor_2d,iters`.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("theta,converged,r_factor_2d,iters\n");
        for r in &self.report {
            let _ = writeln!(out, "{:e},{},{:e},{}", r.theta, r.converged, r.r_factor_2d, r.iters);
        }
        out
    }
}

/// Runs the 2D stage on each angle's frames alone, aligns phases, and
/// inverts the stack. Angles whose 2D R-factor exceeds the threshold (or
/// whose phase could not be aligned) are excluded from the tomography; if
/// none remain the output carries no volume.
pub fn two_step_run(data: &MeasurementSet, probe: &Probe, config: &TwoStepConfig) -> Result<TwoStepOutput> {
    let count = data.angles().len();
    let results: Vec<(Ptycho2d, ComplexImage, bool)> = (0..count)
        .map(|a| {
            let single = data.single_angle(a)?;
            let rec = ptycho_solve_2d(&single, probe, config.ptycho_iters, config.r2, config.metric, None)?;
            let (aligned, degenerate) = align_global_phase(&rec.image);
            let ok = rec.r_factor.is_finite() && rec.r_factor <= config.failure_r_factor && !degenerate;
            Ok((rec, aligned, ok))
        })
        .collect::<Result<_>>()?;
    let report = results
        .iter()
        .zip(data.angles().angles())
        .map(|((rec, _, ok), theta)| AngleReport {
            theta: theta.radians(),
            converged: *ok,
            r_factor_2d: rec.r_factor,
            iters: rec.iters,
        })
        .collect();
    let (images, converged): (Vec<_>, Vec<_>) = results.into_iter().map(|(_, img, ok)| (img, ok)).unzip();
    let stack = ProjectionStack::new(images, converged)?;
    let volume = if stack.converged.iter().any(|&c| c) {
        Some(tomo_solve_cg(&stack, data.angles(), config.tomo_cg_iters)?)
    } else {
        None
    };
    Ok(TwoStepOutput { volume, report, stack })
}
