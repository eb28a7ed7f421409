//! The joint forward model `D_{j,θ}(ω, u) = F(ω ∘ S_j Q R_θ u)` and data
//! simulation.
//!
//! Frames are always ordered θ-major, j-minor: frame `a * J + j` belongs to
//! angle `a` and scan position `j`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{dim_err, param_err, Error, Result};
use crate::grid::{
    backproject_rotated_add, embed_window, extract_window, project_rotated, Angle, ComplexImage,
    ComplexVolume, Dft2, RotationTable, C64,
};

/// Complex illumination on an m̄×m̄ grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    data: ComplexImage,
}

impl Probe {
    pub fn new(data: ComplexImage) -> Result<Self> {
        if !data.is_square() || data.rows() == 0 {
            return dim_err(format!("probe must be square, got {}×{}", data.rows(), data.cols()));
        }
        if data.as_slice().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return param_err("probe contains non-finite values");
        }
        if data.as_slice().iter().all(|v| v.norm_sqr() == 0.0) {
            return param_err("probe is identically zero");
        }
        Ok(Self { data })
    }

    pub fn side(&self) -> usize {
        self.data.rows()
    }

    pub fn image(&self) -> &ComplexImage {
        &self.data
    }

    pub fn as_slice(&self) -> &[C64] {
        self.data.as_slice()
    }

    /// `|ω|²` per pixel.
    pub fn power(&self) -> Vec<f64> {
        self.data.as_slice().iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Grid-scan window offsets over the n×n projected image.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanGeometry {
    n: usize,
    side: usize,
    stepsize: Option<usize>,
    positions: Vec<(usize, usize)>,
}

impl ScanGeometry {
    /// Validates bounds, distinctness and full coverage of the n×n plane.
    pub fn new(n: usize, side: usize, positions: Vec<(usize, usize)>, stepsize: Option<usize>) -> Result<Self> {
        let geom = Self::unchecked(n, side, positions, stepsize)?;
        if let Some((r, c)) = geom.first_uncovered() {
            return Err(Error::Precondition(format!(
                "scan windows leave pixel ({r}, {c}) uncovered"
            )));
        }
        Ok(geom)
    }

    /// Like [`ScanGeometry::new`] but without the coverage requirement.
    pub fn unchecked(n: usize, side: usize, positions: Vec<(usize, usize)>, stepsize: Option<usize>) -> Result<Self> {
        if side == 0 || side > n {
            return param_err(format!("window side {side} must be in 1..={n}"));
        }
        if positions.is_empty() {
            return param_err("scan has no positions");
        }
        for &(r, c) in &positions {
            if r + side > n || c + side > n {
                return Err(Error::OutOfRange(format!(
                    "window at ({r}, {c}) exceeds the {n}×{n} plane"
                )));
            }
        }
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return param_err("scan positions are not distinct");
        }
        Ok(Self {
            n,
            side,
            stepsize,
            positions,
        })
    }

    fn first_uncovered(&self) -> Option<(usize, usize)> {
        let mut covered = vec![false; self.n * self.n];
        for &(r0, c0) in &self.positions {
            for r in r0..r0 + self.side {
                covered[r * self.n + c0..r * self.n + c0 + self.side].fill(true);
            }
        }
        covered
            .iter()
            .position(|c| !c)
            .map(|i| (i / self.n, i % self.n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn stepsize(&self) -> Option<usize> {
        self.stepsize
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Strictly increasing tomographic angles in `[0, π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleSet {
    angles: Vec<Angle>,
}

impl AngleSet {
    pub fn new(angles: Vec<Angle>) -> Result<Self> {
        if angles.is_empty() {
            return param_err("angle set is empty");
        }
        if angles.windows(2).any(|w| w[1].radians() <= w[0].radians()) {
            return param_err("angles must be strictly increasing");
        }
        Ok(Self { angles })
    }

    pub fn from_radians(thetas: &[f64]) -> Result<Self> {
        Self::new(thetas.iter().map(|&t| Angle::new(t)).collect::<Result<_>>()?)
    }

    pub fn angles(&self) -> &[Angle] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// Nonnegative far-field intensity frames for every (angle, position) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    geometry: ScanGeometry,
    angles: AngleSet,
    frames: Vec<f64>,
    eta: Option<f64>,
    seed: Option<u64>,
}

impl MeasurementSet {
    /// `frames` is flat, θ-major then j-minor then row-major within a frame.
    pub fn new(
        geometry: ScanGeometry,
        angles: AngleSet,
        frames: Vec<f64>,
        eta: Option<f64>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let expect = geometry.len() * angles.len() * geometry.side() * geometry.side();
        if frames.len() != expect {
            return dim_err(format!(
                "{} intensity values, expected {expect} ({} frames of {}×{})",
                frames.len(),
                geometry.len() * angles.len(),
                geometry.side(),
                geometry.side()
            ));
        }
        if frames.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return param_err("intensities must be finite and nonnegative");
        }
        if let Some(e) = eta {
            if !(e > 0.0 && e.is_finite()) {
                return param_err(format!("peak factor η = {e} must be positive"));
            }
        }
        Ok(Self {
            geometry,
            angles,
            frames,
            eta,
            seed,
        })
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn angles(&self) -> &AngleSet {
        &self.angles
    }

    pub fn eta(&self) -> Option<f64> {
        self.eta
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn frame_len(&self) -> usize {
        self.geometry.side() * self.geometry.side()
    }

    pub fn frame_count(&self) -> usize {
        self.geometry.len() * self.angles.len()
    }

    /// Frame at flat index `k = a * J + j`.
    pub fn frame(&self, k: usize) -> &[f64] {
        let m = self.frame_len();
        &self.frames[k * m..(k + 1) * m]
    }

    pub fn frame_at(&self, angle: usize, position: usize) -> &[f64] {
        self.frame(angle * self.geometry.len() + position)
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    /// Subset holding only the frames of angle index `a`.
    pub fn single_angle(&self, a: usize) -> Result<Self> {
        let j = self.geometry.len();
        let m = self.frame_len();
        let angles = AngleSet::new(vec![self.angles.angles()[a]])?;
        let frames = self.frames[a * j * m..(a + 1) * j * m].to_vec();
        Self::new(self.geometry.clone(), angles, frames, self.eta, self.seed)
    }
}

/// Precomputed pieces of `D_{j,θ}`: rotation tables per angle and a planned DFT.
/// Simulation and reconstruction share this single code path.
#[derive(Clone, Debug)]
pub struct ForwardModel {
    n: usize,
    probe: Probe,
    geometry: ScanGeometry,
    angles: AngleSet,
    tables: Vec<RotationTable>,
    dft: Dft2,
}

impl ForwardModel {
    pub fn new(probe: Probe, geometry: ScanGeometry, angles: AngleSet) -> Result<Self> {
        if probe.side() != geometry.side() {
            return dim_err(format!(
                "probe side {} differs from window side {}",
                probe.side(),
                geometry.side()
            ));
        }
        let n = geometry.n();
        if n < 2 {
            return param_err("projected image side must be at least 2");
        }
        let tables = angles
            .angles()
            .iter()
            .map(|&a| RotationTable::new(n, a))
            .collect();
        let dft = Dft2::new(geometry.side());
        Ok(Self {
            n,
            probe,
            geometry,
            angles,
            tables,
            dft,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probe(&self) -> &Probe {
        &self.probe
    }

    pub fn set_probe(&mut self, probe: Probe) -> Result<()> {
        if probe.side() != self.geometry.side() {
            return dim_err("probe side changed");
        }
        self.probe = probe;
        Ok(())
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geometry
    }

    pub fn angles(&self) -> &AngleSet {
        &self.angles
    }

    pub fn dft(&self) -> &Dft2 {
        &self.dft
    }

    pub fn table(&self, a: usize) -> &RotationTable {
        &self.tables[a]
    }

    pub fn frame_count(&self) -> usize {
        self.geometry.len() * self.angles.len()
    }

    pub fn frame_len(&self) -> usize {
        self.geometry.side() * self.geometry.side()
    }

    fn check_volume(&self, u: &ComplexVolume) -> Result<()> {
        if u.n() != self.n {
            return dim_err(format!("{}³ volume for a model of side {}", u.n(), self.n));
        }
        Ok(())
    }

    /// `P_θ u = Q R_θ u` for angle index `a`.
    pub fn project(&self, u: &ComplexVolume, a: usize) -> Result<ComplexImage> {
        self.check_volume(u)?;
        project_rotated(u, &self.tables[a])
    }

    /// Projections for every angle.
    pub fn project_all(&self, u: &ComplexVolume) -> Result<Vec<ComplexImage>> {
        (0..self.angles.len()).map(|a| self.project(u, a)).collect()
    }

    /// Accumulates `P_θᵀ img` into `out`.
    pub fn backproject_add(&self, img: &ComplexImage, a: usize, out: &mut ComplexVolume) -> Result<()> {
        self.check_volume(out)?;
        backproject_rotated_add(img, &self.tables[a], out)
    }

    /// `S_j v` for position `j` of an n×n projection.
    pub fn window(&self, proj: &ComplexImage, j: usize) -> Result<ComplexImage> {
        extract_window(proj, self.geometry.positions()[j], self.geometry.side())
    }

    /// `F(ω ∘ S_j v)`.
    pub fn far_field(&self, proj: &ComplexImage, j: usize) -> Result<ComplexImage> {
        let mut w = self.window(proj, j)?;
        for (x, p) in w.as_mut_slice().iter_mut().zip(self.probe.as_slice()) {
            *x *= p;
        }
        self.dft.forward_in_place(w.as_mut_slice());
        Ok(w)
    }

    /// Every `D_{j,θ}(ω, u)`, θ-major.
    pub fn frames(&self, u: &ComplexVolume) -> Result<Vec<ComplexImage>> {
        let projs = self.project_all(u)?;
        self.frames_from_projections(&projs)
    }

    pub fn frames_from_projections(&self, projs: &[ComplexImage]) -> Result<Vec<ComplexImage>> {
        let j = self.geometry.len();
        (0..self.frame_count())
            .into_par_iter()
            .map(|k| self.far_field(&projs[k / j], k % j))
            .collect()
    }

    /// `Σ_j S_jᵀ(ω* ∘ F*(w_j))` for the `J` frames of one angle.
    pub fn frames_adjoint_plane(&self, frames: &[ComplexImage]) -> Result<ComplexImage> {
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
        let mut acc = ComplexImage::zeros(self.n, self.n);
        for (w, &pos) in parts.iter().zip(self.geometry.positions()) {
            crate::grid::embed_window_add(w, pos, &mut acc)?;
        }
        Ok(acc)
    }

    /// Noise-free intensities `|D_{j,θ}(ω, u)|²`.
    pub fn intensities(&self, u: &ComplexVolume) -> Result<MeasurementSet> {
        let frames = self.frames(u)?;
        let flat: Vec<f64> = frames
            .iter()
            .flat_map(|f| f.as_slice().iter().map(|v| v.norm_sqr()))
            .collect();
        MeasurementSet::new(self.geometry.clone(), self.angles.clone(), flat, None, None)
    }

    /// `W = Σ_j S_jᵀ |ω|²` over the n×n plane, row-major.
    pub fn probe_weight(&self) -> Vec<f64> {
        probe_weight(&self.probe, &self.geometry)
    }
}

/// `T_{j,θ} u = S_j Q R_θ u`.
pub fn t_apply(u: &ComplexVolume, j: usize, theta: Angle, geom: &ScanGeometry) -> Result<ComplexImage> {
    if u.n() != geom.n() {
        return dim_err(format!("{}³ volume with a scan over a {}² plane", u.n(), geom.n()));
    }
    let pos = *geom
        .positions()
        .get(j)
        .ok_or_else(|| Error::OutOfRange(format!("scan position {j}")))?;
    let proj = project_rotated(u, &RotationTable::new(u.n(), theta))?;
    extract_window(&proj, pos, geom.side())
}

/// `T_{j,θ}ᵀ w = R_θᵀ Qᵀ S_jᵀ w`.
pub fn t_adjoint(w: &ComplexImage, j: usize, theta: Angle, geom: &ScanGeometry, n: usize) -> Result<ComplexVolume> {
    if n != geom.n() {
        return dim_err(format!("volume side {n} with a scan over a {}² plane", geom.n()));
    }
    let pos = *geom
        .positions()
        .get(j)
        .ok_or_else(|| Error::OutOfRange(format!("scan position {j}")))?;
    let plane = embed_window(w, pos, n)?;
    let mut out = ComplexVolume::zeros(n);
    backproject_rotated_add(&plane, &RotationTable::new(n, theta), &mut out)?;
    Ok(out)
}

/// `D_{j,θ}(ω, u) = F(ω ∘ T_{j,θ} u)`.
pub fn d_apply(probe: &Probe, u: &ComplexVolume, j: usize, theta: Angle, geom: &ScanGeometry) -> Result<ComplexImage> {
    if probe.side() != geom.side() {
        return dim_err("probe side differs from window side");
    }
    let mut w = t_apply(u, j, theta, geom)?;
    for (x, p) in w.as_mut_slice().iter_mut().zip(probe.as_slice()) {
        *x *= p;
    }
    Dft2::new(geom.side()).forward(&w)
}

/// Noise-free frames `f_{j,θ} = |D_{j,θ}(ω, u)|²`.
pub fn simulate_intensities(
    probe: &Probe,
    u: &ComplexVolume,
    geom: &ScanGeometry,
    angles: &AngleSet,
) -> Result<MeasurementSet> {
    ForwardModel::new(probe.clone(), geom.clone(), angles.clone())?.intensities(u)
}

/// Replaces every pixel by a Poisson draw with mean `eta * f`.
///
/// Each frame gets its own ChaCha8 stream (stream id = flat frame index) from
/// `seed`, so the result is independent of scheduling. Sampling is done by
/// `rand_distr::Poisson`, which multiplies uniforms for small means and uses
/// rejection sampling for large ones.
pub fn add_poisson_noise(m: &MeasurementSet, eta: f64, seed: u64) -> Result<MeasurementSet> {
    if !(eta > 0.0 && eta.is_finite()) {
        return param_err(format!("peak factor η = {eta} must be positive"));
    }
    let len = m.frame_len();
    let noisy: Vec<Vec<f64>> = (0..m.frame_count())
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            m.frame(k)
                .iter()
                .map(|&f| poisson_sample(eta * f, &mut rng))
                .collect()
        })
        .collect();
    let mut flat = Vec::with_capacity(len * m.frame_count());
    for f in noisy {
        flat.extend(f);
    }
    MeasurementSet::new(m.geometry.clone(), m.angles.clone(), flat, Some(eta), Some(seed))
}

pub(crate) fn poisson_sample(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng)
}

/// `W = Σ_j S_jᵀ|ω|²`, row-major over the n×n plane.
pub fn probe_weight(probe: &Probe, geom: &ScanGeometry) -> Vec<f64> {
    let n = geom.n();
    let m = geom.side();
    let power = probe.power();
    let mut w = vec![0.0; n * n];
    for &(r0, c0) in geom.positions() {
        for r in 0..m {
            let dst = &mut w[(r0 + r) * n + c0..(r0 + r) * n + c0 + m];
            for (d, p) in dst.iter_mut().zip(&power[r * m..(r + 1) * m]) {
                *d += p;
            }
        }
    }
    w
}
