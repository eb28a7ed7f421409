//! ADMM reconstruction of the joint problem (APT), its TV-free variant (APTs),
//! and their building blocks.

mod admm;
mod cg;
mod prox;

pub use admm::{
    apply_l, apt_run, apt_step, apts_run, build_rhs, objective_value, p_update, update_multipliers,
    update_probe, z_update, AptSolver, ProbeUpdate, RunOutput, SolverState, TvState,
};
pub use cg::{cg_solve, CgReport, CgStatus};
pub use prox::{csign, pagm_magnitude, pipm_magnitude, prox_pixel, prox_z_pagm, prox_z_pipm, shrink_p};

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Data-fidelity metric of the z-subproblem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// Amplitude-based Gaussian.
    Pagm,
    /// Intensity-based Poisson.
    Pipm,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Pagm => "pagm",
            Metric::Pipm => "pipm",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pagm" => Ok(Metric::Pagm),
            "pipm" => Ok(Metric::Pipm),
            other => Err(Error::Config(format!("unknown metric '{other}' (expected pagm or pipm)"))),
        }
    }
}

/// Penalties and loop controls of the ADMM solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Penalty on `p = ∇u`.
    pub r1: f64,
    /// Penalty on `z = D(ω, u)`.
    pub r2: f64,
    /// TV weight.
    pub lambda: f64,
    pub metric: Metric,
    /// Smoothing of the fidelity term; only 0 is supported.
    pub epsilon: f64,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub max_outer: usize,
    /// Stop once `‖u^k - u^{k+1}‖ / ‖u^{k+1}‖` drops to this value.
    pub stop_tol: f64,
    pub blind_probe: bool,
    /// Record elapsed seconds per iteration. Off by default so histories are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let r2 = 1.0;
        let r1 = 0.1 * r2;
        Self {
            r1,
            r2,
            lambda: 0.1 * r1,
            metric: Metric::Pagm,
            epsilon: 0.0,
            cg_iters: 10,
            cg_tol: 1e-6,
            max_outer: 100,
            stop_tol: 1e-4,
            blind_probe: false,
            record_wall_time: false,
        }
    }
}

impl SolverConfig {
    /// The TV-free variant: `λ = r₁ = 0`.
    pub fn without_tv(&self) -> Self {
        Self {
            r1: 0.0,
            lambda: 0.0,
            ..self.clone()
        }
    }

    pub fn uses_tv(&self) -> bool {
        self.r1 > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.r2 > 0.0 && self.r2.is_finite()) {
            return bad(format!("r2 = {} must be positive", self.r2));
        }
        if !(self.r1 >= 0.0 && self.r1.is_finite()) {
            return bad(format!("r1 = {} must be nonnegative", self.r1));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda = {} must be nonnegative", self.lambda));
        }
        if self.lambda > 0.0 && self.r1 == 0.0 {
            return bad("lambda > 0 requires r1 > 0".into());
        }
        if self.epsilon != 0.0 {
            return bad(format!("epsilon = {} is unsupported; only 0 is implemented", self.epsilon));
        }
        if !(self.cg_tol >= 0.0) || !(self.stop_tol >= 0.0) {
            return bad("tolerances must be nonnegative".into());
        }
        Ok(())
    }
}

/// One outer iteration of the solver history.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRow {
    pub k: usize,
    pub rel_change: f64,
    pub r_factor: f64,
    pub objective: f64,
    pub wall_time: f64,
    pub cg_iterations: usize,
    pub cg_status: CgStatus,
    /// Probe pixels whose update denominator was floored (blind mode only).
    pub floored_pixels: usize,
}

/// Per-iteration convergence history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceRecord {
    rows: Vec<IterationRow>,
}

impl ConvergenceRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; `k` must exceed the previous row's.
    pub fn push(&mut self, row: IterationRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.k > last.k, "history rows must be strictly increasing in k");
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[IterationRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRow> {
        self.rows.last()
    }

    pub fn rel_changes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rel_change).collect()
    }

    pub fn r_factors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.r_factor).collect()
    }

    /// CSV with header `k,rel_change,r_factor,objective,wall_time_s`; floats
    /// are printed in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,rel_change,r_factor,objective,wall_time_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                r.k, r.rel_change, r.r_factor, r.objective, r.wall_time
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let c = SolverConfig { r2: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SolverConfig { r1: 0.0, lambda: 0.1, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SolverConfig { epsilon: 1e-3, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(SolverConfig::default().without_tv().validate().is_ok());
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("pAGM".parse::<Metric>().unwrap(), Metric::Pagm);
        assert_eq!("pipm".parse::<Metric>().unwrap(), Metric::Pipm);
        assert!("l2".parse::<Metric>().is_err());
    }

    #[test]
    fn csv_layout() {
        let mut h = ConvergenceRecord::new();
        h.push(IterationRow {
            k: 1,
            rel_change: 0.5,
            r_factor: 0.25,
            objective: 3.0,
            wall_time: 0.0,
            cg_iterations: 10,
            cg_status: CgStatus::MaxIterations,
            floored_pixels: 0,
        });
        assert_eq!(
            h.to_csv(),
            "k,rel_change,r_factor,objective,wall_time_s\n1,5e-1,2.5e-1,3e0,0e0\n"
        );
    }
}
