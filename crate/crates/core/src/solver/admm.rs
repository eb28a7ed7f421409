//! The ADMM outer loop: u-step by CG on `L`, z-step by proximal maps, p-step
//! by shrinkage, then the multiplier updates.

use std::time::Instant;

use rayon::prelude::*;

use super::cg::cg_solve;
use super::prox::{prox_pixel, shrink_p};
use super::{ConvergenceRecord, IterationRow, Metric, SolverConfig};
use crate::error::{dim_err, Error, Result};
use crate::forward::{ForwardModel, MeasurementSet, Probe};
use crate::grid::{backproject_plane, project_plane};
use crate::grid::{divergence3, gradient3, laplacian3, ComplexImage, ComplexVolume, Field3, C64};
use crate::metrics::{r_factor_from_frames, relative_change};

/// Floor applied to the model intensity inside the Poisson log when the
/// objective is evaluated for monitoring.
const PIPM_LOG_FLOOR: f64 = 1e-12;

/// Relative floor on the blind-probe update denominator.
const PROBE_FLOOR: f64 = 1e-12;

/// Splitting variable `p ≈ ∇u` and its multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct TvState {
    pub p: Field3,
    pub lambda1: Field3,
}

/// ADMM iterates. `tv` is `None` for the TV-free variant.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub u: ComplexVolume,
    pub z: Vec<ComplexImage>,
    pub lambda2: Vec<ComplexImage>,
    pub tv: Option<TvState>,
    pub k: usize,
    pub history: ConvergenceRecord,
}

impl SolverState {
    /// `u⁰ = 1`, `z⁰ = D(ω, u⁰)`, zero multipliers and `p⁰ = 0`.
    pub fn initial(model: &ForwardModel, with_tv: bool) -> Result<Self> {
        let n = model.n();
        let u = ComplexVolume::from_elem(n, C64::new(1.0, 0.0));
        let z = model.frames(&u)?;
        let lambda2 = z.iter().map(|f| ComplexImage::zeros(f.rows(), f.cols())).collect();
        let tv = with_tv.then(|| TvState {
            p: Field3::zeros(n),
            lambda1: Field3::zeros(n),
        });
        Ok(Self {
            u,
            z,
            lambda2,
            tv,
            k: 0,
            history: ConvergenceRecord::new(),
        })
    }
}

/// A configured solver bound to one data set.
#[derive(Clone, Debug)]
pub struct AptSolver {
    model: ForwardModel,
    data: MeasurementSet,
    weight: Vec<f64>,
    config: SolverConfig,
}

/// Result of a full run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub u: ComplexVolume,
    pub history: ConvergenceRecord,
    /// Final probe (changed only in blind mode).
    pub probe: Probe,
}

impl AptSolver {
    pub fn new(model: ForwardModel, data: MeasurementSet, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        if data.geometry() != model.geometry() || data.angles() != model.angles() {
            return dim_err("measurement geometry or angles differ from the forward model");
        }
        let weight = model.probe_weight();
        if !config.uses_tv() {
            if let Some(i) = weight.iter().position(|&w| !(w > 0.0)) {
                let n = model.n();
                return Err(Error::Precondition(format!(
                    "probe weight vanishes at pixel ({}, {}); the TV-free solver needs full coverage",
                    i / n,
                    i % n
                )));
            }
        }
        Ok(Self {
            model,
            data,
            weight,
            config,
        })
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn data(&self) -> &MeasurementSet {
        &self.data
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn initial_state(&self) -> Result<SolverState> {
        SolverState::initial(&self.model, self.config.uses_tv())
    }

    pub fn apply_l(&self, u: &ComplexVolume) -> Result<ComplexVolume> {
        apply_l(u, &self.model, &self.weight, self.config.r1, self.config.r2)
    }

    /// Runs from the standard initialization until the relative change drops
    /// to `stop_tol` or `max_outer` iterations have been taken.
    pub fn run(mut self) -> Result<RunOutput> {
        let mut state = self.initial_state()?;
        while state.k < self.config.max_outer {
            apt_step(&mut self, &mut state)?;
            let rel = state.history.last().map(|r| r.rel_change).unwrap_or(f64::INFINITY);
            // From u⁰ = 1 and z⁰ = D(u⁰) the first u-step returns u⁰ unchanged.
            if state.k > 1 && rel <= self.config.stop_tol {
                break;
            }
        }
        Ok(RunOutput {
            u: state.u,
            history: state.history,
            probe: self.model.probe().clone(),
        })
    }
}

/// `Σ_θ P_θᵀ(W ∘ P_θ u)`, fused per z-slice.
fn normal_term(u: &ComplexVolume, model: &ForwardModel, weight: &[f64]) -> ComplexVolume {
    let n = u.n();
    let mut out = ComplexVolume::zeros(n);
    let angles = model.angles().len();
    out.as_mut_slice()
        .par_chunks_mut(n * n)
        .zip(u.as_slice().par_chunks(n * n))
        .enumerate()
        .for_each(|(z, (dst, src))| {
            let w = &weight[z * n..(z + 1) * n];
            let mut row = vec![C64::new(0.0, 0.0); n];
            for a in 0..angles {
                row.fill(C64::new(0.0, 0.0));
                let table = model.table(a);
                project_plane(table, src, &mut row);
                for (r, wv) in row.iter_mut().zip(w) {
                    *r *= *wv;
                }
                backproject_plane(table, &row, dst);
            }
        });
    out
}

/// `L u = -r₁Δu + r₂ Σ_θ P_θᵀ(W ∘ P_θ u)`.
pub fn apply_l(u: &ComplexVolume, model: &ForwardModel, weight: &[f64], r1: f64, r2: f64) -> Result<ComplexVolume> {
    if u.n() != model.n() {
        return dim_err(format!("{}³ volume for a model of side {}", u.n(), model.n()));
    }
    if weight.len() != u.n() * u.n() {
        return dim_err("probe weight does not match the projected plane");
    }
    let mut out = normal_term(u, model, weight);
    out.scale(C64::new(r2, 0.0));
    if r1 != 0.0 {
        out.axpy(C64::new(-r1, 0.0), &laplacian3(u));
    }
    Ok(out)
}

/// `-r₁∇·(Λ₁ + p) + r₂ Σ_{j,θ} T_{j,θ}ᵀ(ω* ∘ F*(Λ₂ + z))`.
pub fn build_rhs(state: &SolverState, model: &ForwardModel, r1: f64, r2: f64) -> Result<ComplexVolume> {
    let count = model.frame_count();
    if state.z.len() != count || state.lambda2.len() != count {
        return dim_err(format!(
            "{} z frames and {} multiplier frames for {count} measurements",
            state.z.len(),
            state.lambda2.len()
        ));
    }
    let n = model.n();
    let per_angle = model.geometry().len();
    let sums: Vec<ComplexImage> = state
        .z
        .par_iter()
        .zip(state.lambda2.par_iter())
        .map(|(z, l)| {
            let mut s = z.clone();
            for (a, b) in s.as_mut_slice().iter_mut().zip(l.as_slice()) {
                *a += *b;
            }
            s
        })
        .collect();
    let planes: Vec<ComplexImage> = sums
        .chunks(per_angle)
        .map(|frames| model.frames_adjoint_plane(frames))
        .collect::<Result<_>>()?;
    let mut out = ComplexVolume::zeros(n);
    out.as_mut_slice()
        .par_chunks_mut(n * n)
        .enumerate()
        .for_each(|(z, dst)| {
            for (a, plane) in planes.iter().enumerate() {
                let row = &plane.as_slice()[z * n..(z + 1) * n];
                backproject_plane(model.table(a), row, dst);
            }
        });
    out.scale(C64::new(r2, 0.0));
    if let Some(tv) = &state.tv {
        if r1 != 0.0 {
            let div = divergence3(&tv.lambda1.add(&tv.p))?;
            out.axpy(C64::new(-r1, 0.0), &div);
        }
    }
    Ok(out)
}

/// `z = Prox(D - Λ₂)` frame by frame.
pub fn z_update(
    frames: &[ComplexImage],
    lambda2: &[ComplexImage],
    data: &MeasurementSet,
    metric: Metric,
    r2: f64,
) -> Result<Vec<ComplexImage>> {
    if frames.len() != data.frame_count() || lambda2.len() != frames.len() {
        return dim_err("frame counts differ between model, multipliers and data");
    }
    Ok(frames
        .par_iter()
        .zip(lambda2.par_iter())
        .enumerate()
        .map(|(k, (d, l))| {
            let f = data.frame(k);
            let mut out = d.clone();
            for ((o, lv), &fv) in out.as_mut_slice().iter_mut().zip(l.as_slice()).zip(f) {
                *o = prox_pixel(metric, *o - *lv, fv, r2);
            }
            out
        })
        .collect())
}

/// `p = shrink(∇u - Λ₁, τ)`.
pub fn p_update(grad: &Field3, lambda1: &Field3, tau: f64) -> Field3 {
    shrink_p(&grad.sub(lambda1), tau)
}

/// `Λ₁ += p - ∇u` and `Λ₂ += z - D`.
pub fn update_multipliers(state: &mut SolverState, grad: Option<&Field3>, frames: &[ComplexImage]) -> Result<()> {
    if frames.len() != state.lambda2.len() {
        return dim_err("frame count differs from multiplier count");
    }
    if let Some(tv) = state.tv.as_mut() {
        let grad = grad.ok_or_else(|| Error::Dimension("TV state needs ∇u".into()))?;
        let step = tv.p.sub(grad);
        tv.lambda1.axpy(C64::new(1.0, 0.0), &step);
    }
    state
        .lambda2
        .par_iter_mut()
        .zip(state.z.par_iter())
        .zip(frames.par_iter())
        .for_each(|((l, z), d)| {
            for ((lv, zv), dv) in l.as_mut_slice().iter_mut().zip(z.as_slice()).zip(d.as_slice()) {
                *lv += *zv - *dv;
            }
        });
    Ok(())
}

/// Blind-probe step output.
#[derive(Clone, Debug)]
pub struct ProbeUpdate {
    pub probe: Probe,
    /// Pixels whose denominator fell below the floor.
    pub floored: usize,
}

/// `ω ← Σ (T u)* ∘ F*(z + Λ₂) / Σ |T u|²` over all frames. Denominators below
/// `1e-12 · max` are replaced by that floor; if every denominator is zero the
/// current probe is returned unchanged.
pub fn update_probe(state: &SolverState, model: &ForwardModel) -> Result<ProbeUpdate> {
    let projs = model.project_all(&state.u)?;
    let per_angle = model.geometry().len();
    let m = model.geometry().side();
    let parts: Vec<(Vec<C64>, Vec<f64>)> = (0..model.frame_count())
        .into_par_iter()
        .map(|k| {
            let tu = model.window(&projs[k / per_angle], k % per_angle)?;
            let mut y = state.z[k].clone();
            for (a, b) in y.as_mut_slice().iter_mut().zip(state.lambda2[k].as_slice()) {
                *a += *b;
            }
            model.dft().inverse_in_place(y.as_mut_slice());
            let num = tu.as_slice().iter().zip(y.as_slice()).map(|(t, v)| t.conj() * v).collect();
            let den = tu.as_slice().iter().map(|t| t.norm_sqr()).collect();
            Ok((num, den))
        })
        .collect::<Result<_>>()?;
    let mut num = vec![C64::new(0.0, 0.0); m * m];
    let mut den = vec![0.0; m * m];
    for (pn, pd) in &parts {
        for (a, b) in num.iter_mut().zip(pn) {
            *a += *b;
        }
        for (a, b) in den.iter_mut().zip(pd) {
            *a += *b;
        }
    }
    let max = den.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(ProbeUpdate {
            probe: model.probe().clone(),
            floored: m * m,
        });
    }
    let floor = PROBE_FLOOR * max;
    let mut floored = 0;
    let data: Vec<C64> = num
        .iter()
        .zip(&den)
        .map(|(nv, &dv)| {
            if dv < floor {
                floored += 1;
                nv / floor
            } else {
                nv / dv
            }
        })
        .collect();
    let probe = Probe::new(ComplexImage::from_vec(m, m, data)?)?;
    Ok(ProbeUpdate { probe, floored })
}

fn fidelity(frames: &[ComplexImage], data: &MeasurementSet, metric: Metric) -> f64 {
    let parts: Vec<f64> = frames
        .par_iter()
        .enumerate()
        .map(|(k, d)| {
            let f = data.frame(k);
            d.as_slice()
                .iter()
                .zip(f)
                .map(|(z, &fv)| match metric {
                    Metric::Pagm => 0.5 * (z.norm() - fv.sqrt()).powi(2),
                    Metric::Pipm => {
                        let g = z.norm_sqr();
                        0.5 * (g - fv * g.max(PIPM_LOG_FLOOR).ln())
                    }
                })
                .sum()
        })
        .collect();
    parts.iter().sum()
}

/// `Σ √(|∇ₓu|² + |∇ᵧu|² + |∇_zu|²)`.
pub(crate) fn total_variation(grad: &Field3) -> f64 {
    let parts: Vec<f64> = grad
        .x
        .as_slice()
        .par_chunks(1 << 14)
        .zip(grad.y.as_slice().par_chunks(1 << 14))
        .zip(grad.z.as_slice().par_chunks(1 << 14))
        .map(|((a, b), c)| {
            a.iter()
                .zip(b)
                .zip(c)
                .map(|((x, y), z)| (x.norm_sqr() + y.norm_sqr() + z.norm_sqr()).sqrt())
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum()
}

fn objective_from_parts(
    frames: &[ComplexImage],
    grad: Option<&Field3>,
    data: &MeasurementSet,
    config: &SolverConfig,
) -> f64 {
    let mut value = fidelity(frames, data, config.metric);
    if config.lambda > 0.0 {
        if let Some(g) = grad {
            value += config.lambda * total_variation(g);
        }
    }
    value
}

/// `Σ_{j,θ} G_{j,θ}(D_{j,θ}(ω, u)) + λ TV(u)` under the configured metric.
pub fn objective_value(u: &ComplexVolume, model: &ForwardModel, data: &MeasurementSet, config: &SolverConfig) -> Result<f64> {
    let frames = model.frames(u)?;
    if frames.len() != data.frame_count() {
        return dim_err("model and data frame counts differ");
    }
    let grad = (config.lambda > 0.0).then(|| gradient3(u));
    Ok(objective_from_parts(&frames, grad.as_ref(), data, config))
}

/// One outer iteration: u by CG, optional probe refinement, then z and p from
/// the same `u^{k+1}`, then the multipliers. Appends a history row.
pub fn apt_step(solver: &mut AptSolver, state: &mut SolverState) -> Result<()> {
    let start = Instant::now();
    let cfg = solver.config.clone();
    if state.tv.is_some() != cfg.uses_tv() {
        return Err(Error::Config("solver state and configuration disagree on TV".into()));
    }

    // Step 1
    let rhs = build_rhs(state, &solver.model, cfg.r1, cfg.r2)?;
    let (u_next, cg) = {
        let model = &solver.model;
        let weight = &solver.weight;
        cg_solve(
            |v| apply_l(v, model, weight, cfg.r1, cfg.r2).expect("shapes checked above"),
            &rhs,
            &state.u,
            cfg.cg_iters,
            cfg.cg_tol,
        )
    };
    let rel_change = match relative_change(&state.u, &u_next) {
        Ok(r) => r,
        Err(_) if state.u.norm_sqr() == 0.0 => 0.0,
        Err(_) => f64::INFINITY,
    };
    state.u = u_next;

    let mut floored = 0;
    if cfg.blind_probe {
        let upd = update_probe(state, &solver.model)?;
        floored = upd.floored;
        solver.model.set_probe(upd.probe)?;
        solver.weight = solver.model.probe_weight();
    }

    // Step 2: z and p both read only u^{k+1} and the old multipliers
    let frames = solver.model.frames(&state.u)?;
    let z_next = z_update(&frames, &state.lambda2, &solver.data, cfg.metric, cfg.r2)?;
    let grad = state.tv.as_ref().map(|_| gradient3(&state.u));
    if let (Some(tv), Some(g)) = (state.tv.as_mut(), grad.as_ref()) {
        tv.p = p_update(g, &tv.lambda1, cfg.lambda / cfg.r1);
    }
    state.z = z_next;

    // Step 3
    update_multipliers(state, grad.as_ref(), &frames)?;

    state.k += 1;
    let r_factor = r_factor_from_frames(&frames, &solver.data).unwrap_or(f64::NAN);
    let objective = objective_from_parts(&frames, grad.as_ref(), &solver.data, &cfg);
    state.history.push(IterationRow {
        k: state.k,
        rel_change,
        r_factor,
        objective,
        wall_time: if cfg.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        },
        cg_iterations: cg.iterations,
        cg_status: cg.status,
        floored_pixels: floored,
    });
    Ok(())
}

/// APT: ADMM with TV regularization (or without, when `r1 = λ = 0`).
pub fn apt_run(model: ForwardModel, data: MeasurementSet, config: &SolverConfig) -> Result<RunOutput> {
    AptSolver::new(model, data, config.clone())?.run()
}

/// APTs: the same loop with `λ = r₁ = 0`, so the p and Λ₁ updates vanish.
pub fn apts_run(model: ForwardModel, data: MeasurementSet, config: &SolverConfig) -> Result<RunOutput> {
    AptSolver::new(model, data, config.without_tv())?.run()
}
