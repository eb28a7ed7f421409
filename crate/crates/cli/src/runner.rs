//! Simulation and reconstruction of one configured experiment, writing every
//! artifact into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use aptomo::forward::add_poisson_noise;
use aptomo::io::{save_measurements, save_volume};
use aptomo::metrics::{aligned_snr, r_factor, serialize_db, snr_intensity, AlignedSnr};
use aptomo::phantom::{make_angles, make_probe, make_scan_grid};
use aptomo::solver::{apt_run, apts_run, RunOutput};
use aptomo::twostep::{two_step_run, TwoStepOutput};
use aptomo::{ComplexVolume, ConvergenceRecord, ForwardModel, MeasurementSet, C64};
use log::info;

use crate::config::ExperimentConfig;
use crate::image::write_slice;

/// Ground truth, forward model and (possibly noisy) data of an experiment.
pub struct Simulation {
    pub truth: ComplexVolume,
    pub model: ForwardModel,
    pub clean: MeasurementSet,
    pub data: MeasurementSet,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let truth = cfg.background.phantom(cfg.n, cfg.alpha)?;
        let model = ForwardModel::new(
            make_probe(cfg.mbar, cfg.fwhm)?,
            make_scan_grid(cfg.n, cfg.mbar, cfg.stepsize)?,
            make_angles(cfg.angles)?,
        )?;
        let clean = model.intensities(&truth)?;
        let data = match cfg.eta {
            Some(eta) => add_poisson_noise(&clean, eta, cfg.seed)?,
            None => clean.clone(),
        };
        Ok(Self {
            truth,
            model,
            clean,
            data,
        })
    }

    /// Intensity SNR of the noisy counts against `η·f`; `None` without noise.
    pub fn snr_intensity(&self) -> Result<Option<f64>> {
        let Some(eta) = self.data.eta() else {
            return Ok(None);
        };
        let scaled: Vec<f64> = self.clean.frames().iter().map(|f| eta * f).collect();
        Ok(Some(snr_intensity(self.data.frames(), &scaled)?))
    }
}

/// Quality of one reconstructed volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    pub snr: AlignedSnr,
    pub r_factor: f64,
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub score: Score,
    pub history: ConvergenceRecord,
}

#[derive(Clone, Debug)]
pub struct TwoStepResult {
    pub output: TwoStepOutput,
    /// `None` when the baseline failed.
    pub score: Option<Score>,
}

impl TwoStepResult {
    pub fn failed(&self) -> bool {
        self.output.failed()
    }

    pub fn failed_angles(&self) -> usize {
        self.output.report.iter().filter(|r| !r.converged).count()
    }
}

/// What an experiment produced, in memory.
#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub snr_intensity: Option<f64>,
    pub apt: Option<SolverResult>,
    pub apts: Option<SolverResult>,
    pub two_step: Option<TwoStepResult>,
}

impl Summary {
    /// Rows `metric,value,flags`.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("metric,value,flags\n");
        let mut row = |m: &str, v: f64, flag: &str| {
            let _ = writeln!(out, "{m},{v:e},{flag}");
        };
        if let Some(s) = self.snr_intensity {
            let (v, flag) = serialize_db(s);
            row("data.snr_intensity_db", v, flag);
        }
        let mut score = |name: &str, s: &Score| {
            let (v, flag) = serialize_db(s.snr.db);
            row(&format!("{name}.snr_db"), v, flag);
            row(&format!("{name}.r_factor"), s.r_factor, "");
            for (axis, t) in ["x", "y", "z"].iter().zip(s.snr.shift) {
                row(&format!("{name}.shift_{axis}"), t as f64, "");
            }
        };
        for (name, res) in [("apt", &self.apt), ("apts", &self.apts)] {
            if let Some(r) = res {
                score(name, &r.score);
            }
        }
        if let Some(t) = &self.two_step {
            if let Some(s) = &t.score {
                score("twostep", s);
            }
        }
        for (name, res) in [("apt", &self.apt), ("apts", &self.apts)] {
            if let Some(r) = res {
                row(&format!("{name}.iterations"), r.history.len() as f64, "");
            }
        }
        if let Some(t) = &self.two_step {
            row("twostep.failed", if t.failed() { 1.0 } else { 0.0 }, "");
            row("twostep.failed_angles", t.failed_angles() as f64, "");
        }
        out
    }
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// `ζ* u` so that the slices share the ground truth's phase and scale.
fn aligned(u: &ComplexVolume, scale: C64) -> ComplexVolume {
    let mut out = u.clone();
    out.scale(scale);
    out
}

pub fn score(u: &ComplexVolume, sim: &Simulation, window: usize) -> Result<Score> {
    Ok(Score {
        snr: aligned_snr(u, &sim.truth, window)?,
        r_factor: r_factor(u, &sim.model, &sim.data)?,
    })
}

fn save_solver(dir: &Path, name: &str, cfg: &ExperimentConfig, sim: &Simulation, out: &RunOutput) -> Result<SolverResult> {
    let score = score(&out.u, sim, cfg.snr_window)?;
    save_volume(&out.u, dir.join(format!("{name}.vol")))?;
    write(dir, &format!("{name}_convergence.csv"), out.history.to_csv())?;
    let shown = aligned(&out.u, score.snr.scale);
    for z in cfg.slice_indices() {
        write_slice(dir, name, &shown, z)?;
    }
    info!(
        "{name}: {} iterations, SNR {:.2} dB, R-factor {:.4}",
        out.history.len(),
        score.snr.db,
        score.r_factor
    );
    Ok(SolverResult {
        score,
        history: out.history.clone(),
    })
}

/// Writes the config echo, the measurement archive and the ground-truth
/// slices. Returns the simulation for reuse.
pub fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<Simulation> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(dir, "config.txt", cfg.to_text())?;
    let sim = Simulation::new(cfg)?;
    save_measurements(&sim.data, dir.join("measurements.bin"))?;
    for z in cfg.slice_indices() {
        write_slice(dir, "truth", &sim.truth, z)?;
    }
    info!(
        "simulated {} frames of {}² pixels ({} angles)",
        sim.data.frame_count(),
        cfg.mbar,
        cfg.angles
    );
    Ok(sim)
}

/// Simulates, reconstructs with every configured method, and writes all
/// artifacts to `dir`. Output is byte-identical for identical configs.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Summary> {
    let sim = simulate(cfg, dir)?;
    let mut summary = Summary {
        snr_intensity: sim.snr_intensity()?,
        ..Default::default()
    };
    if cfg.method.runs_apts() {
        info!("running APTs");
        let out = apts_run(sim.model.clone(), sim.data.clone(), &cfg.solver)?;
        summary.apts = Some(save_solver(dir, "apts", cfg, &sim, &out)?);
    }
    if cfg.method.runs_apt() {
        info!("running APT");
        let out = apt_run(sim.model.clone(), sim.data.clone(), &cfg.solver)?;
        summary.apt = Some(save_solver(dir, "apt", cfg, &sim, &out)?);
    }
    if cfg.method.runs_two_step() {
        info!("running the two-step baseline");
        let output = two_step_run(&sim.data, sim.model.probe(), &cfg.two_step)?;
        write(dir, "twostep_report.csv", output.report_csv())?;
        let score = match &output.volume {
            Some(u) => {
                save_volume(u, dir.join("twostep.vol"))?;
                let s = score(u, &sim, cfg.snr_window)?;
                let shown = aligned(u, s.snr.scale);
                for z in cfg.slice_indices() {
                    write_slice(dir, "twostep", &shown, z)?;
                }
                Some(s)
            }
            None => {
                info!("two-step baseline failed on every angle");
                None
            }
        };
        summary.two_step = Some(TwoStepResult { output, score });
    }
    write(dir, "metrics.csv", summary.metrics_csv())?;
    Ok(summary)
}
