//! Flat `section.key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use aptomo::phantom::{Background, EXPERIMENT_ALPHA};
use aptomo::twostep::TwoStepConfig;
use aptomo::{Metric, SolverConfig};

/// Which reconstructions to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Apt,
    Apts,
    TwoStep,
    All,
}

impl Method {
    pub fn runs_apt(self) -> bool {
        matches!(self, Method::Apt | Method::All)
    }

    pub fn runs_apts(self) -> bool {
        matches!(self, Method::Apts | Method::All)
    }

    pub fn runs_two_step(self) -> bool {
        matches!(self, Method::TwoStep | Method::All)
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "apt" => Method::Apt,
            "apts" => Method::Apts,
            "twostep" => Method::TwoStep,
            "all" => Method::All,
            other => bail!("unknown solver '{other}' (expected apt, apts, twostep or all)"),
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Apt => "apt",
            Method::Apts => "apts",
            Method::TwoStep => "twostep",
            Method::All => "all",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub alpha: f64,
    pub background: Background,
    pub mbar: usize,
    pub fwhm: f64,
    pub stepsize: usize,
    pub angles: usize,
    pub eta: Option<f64>,
    pub seed: u64,
    pub method: Method,
    pub solver: SolverConfig,
    pub two_step: TwoStepConfig,
    /// Translation search half-width of the aligned SNR.
    pub snr_window: usize,
    pub directory: PathBuf,
    /// z indices of the slice images; empty means the central slice.
    pub slices: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 128,
            alpha: EXPERIMENT_ALPHA,
            background: Background::Unit,
            mbar: 64,
            fwhm: 14.0,
            stepsize: 32,
            angles: 12,
            eta: None,
            seed: 7,
            method: Method::All,
            solver: SolverConfig::default(),
            two_step: TwoStepConfig::default(),
            snr_window: 4,
            directory: PathBuf::from("out"),
            slices: Vec::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("{key}: cannot parse '{value}': {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("{key}: expected true or false, got '{value}'"),
    }
}

impl ExperimentConfig {
    /// The 32³ desk-scale configuration.
    pub fn smoke() -> Self {
        Self {
            n: 32,
            mbar: 16,
            fwhm: 6.0,
            stepsize: 8,
            angles: 8,
            solver: SolverConfig {
                max_outer: 20,
                ..SolverConfig::default()
            },
            snr_window: 2,
            ..Self::default()
        }
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (k, v) = (key.trim(), value.trim());
        match k {
            "phantom.n" => self.n = parse(k, v)?,
            "phantom.alpha" => self.alpha = parse(k, v)?,
            "phantom.background" => self.background = parse(k, v)?,
            "probe.mbar" => self.mbar = parse(k, v)?,
            "probe.fwhm" => self.fwhm = parse(k, v)?,
            "scan.stepsize" => self.stepsize = parse(k, v)?,
            "angles.count" => self.angles = parse(k, v)?,
            "noise.eta" => {
                self.eta = match v {
                    "none" => None,
                    _ => Some(parse(k, v)?),
                }
            }
            "noise.seed" => self.seed = parse(k, v)?,
            "solver.method" => self.method = parse(k, v)?,
            "solver.r1" => self.solver.r1 = parse(k, v)?,
            "solver.r2" => self.solver.r2 = parse(k, v)?,
            "solver.lambda" => self.solver.lambda = parse(k, v)?,
            "solver.metric" => self.solver.metric = parse::<Metric>(k, v)?,
            "solver.epsilon" => self.solver.epsilon = parse(k, v)?,
            "solver.cg_iters" => self.solver.cg_iters = parse(k, v)?,
            "solver.cg_tol" => self.solver.cg_tol = parse(k, v)?,
            "solver.max_outer" => self.solver.max_outer = parse(k, v)?,
            "solver.stop_tol" => self.solver.stop_tol = parse(k, v)?,
            "solver.blind_probe" => self.solver.blind_probe = parse_bool(k, v)?,
            "solver.record_wall_time" => self.solver.record_wall_time = parse_bool(k, v)?,
            "twostep.ptycho_iters" => self.two_step.ptycho_iters = parse(k, v)?,
            "twostep.r2" => self.two_step.r2 = parse(k, v)?,
            "twostep.metric" => self.two_step.metric = parse::<Metric>(k, v)?,
            "twostep.tomo_cg_iters" => self.two_step.tomo_cg_iters = parse(k, v)?,
            "twostep.failure_r_factor" => self.two_step.failure_r_factor = parse(k, v)?,
            "metrics.snr_window" => self.snr_window = parse(k, v)?,
            "output.directory" => self.directory = PathBuf::from(v),
            "output.slices" => {
                self.slices = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|s| parse(k, s.trim())).collect::<Result<_>>()?
                }
            }
            _ => bail!("unknown key '{k}'"),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults. Blank lines and `#`
    /// comments are ignored.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            self.set(k, v).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse_text(&text)
    }

    /// Checks ranges that the generators and solvers would otherwise reject
    /// late, after the expensive simulation.
    pub fn validate(&self) -> Result<()> {
        if self.mbar > self.n {
            bail!("probe.mbar = {} exceeds phantom.n = {}", self.mbar, self.n);
        }
        if self.stepsize == 0 {
            bail!("scan.stepsize must be positive");
        }
        if self.angles == 0 {
            bail!("angles.count must be positive");
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                bail!("noise.eta = {eta} must be positive");
            }
        }
        if let Some(&z) = self.slices.iter().find(|&&z| z >= self.n) {
            bail!("output.slices: index {z} outside 0..{}", self.n);
        }
        self.solver.validate()?;
        if !(self.two_step.r2 > 0.0) {
            bail!("twostep.r2 must be positive");
        }
        Ok(())
    }

    /// Slice indices to render, with the default filled in.
    pub fn slice_indices(&self) -> Vec<usize> {
        if self.slices.is_empty() {
            vec![self.n / 2]
        } else {
            self.slices.clone()
        }
    }

    /// Every key with its resolved value, in a fixed order. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn to_text(&self) -> String {
        let s = &self.solver;
        let t = &self.two_step;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("phantom.n", self.n.to_string());
        kv("phantom.alpha", format!("{:?}", self.alpha));
        kv("phantom.background", self.background.to_string());
        kv("probe.mbar", self.mbar.to_string());
        kv("probe.fwhm", format!("{:?}", self.fwhm));
        kv("scan.stepsize", self.stepsize.to_string());
        kv("angles.count", self.angles.to_string());
        kv("noise.eta", self.eta.map_or("none".into(), |e| format!("{e:?}")));
        kv("noise.seed", self.seed.to_string());
        kv("solver.method", self.method.to_string());
        kv("solver.r1", format!("{:?}", s.r1));
        kv("solver.r2", format!("{:?}", s.r2));
        kv("solver.lambda", format!("{:?}", s.lambda));
        kv("solver.metric", s.metric.to_string());
        kv("solver.epsilon", format!("{:?}", s.epsilon));
        kv("solver.cg_iters", s.cg_iters.to_string());
        kv("solver.cg_tol", format!("{:?}", s.cg_tol));
        kv("solver.max_outer", s.max_outer.to_string());
        kv("solver.stop_tol", format!("{:?}", s.stop_tol));
        kv("solver.blind_probe", s.blind_probe.to_string());
        kv("solver.record_wall_time", s.record_wall_time.to_string());
        kv("twostep.ptycho_iters", t.ptycho_iters.to_string());
        kv("twostep.r2", format!("{:?}", t.r2));
        kv("twostep.metric", t.metric.to_string());
        kv("twostep.tomo_cg_iters", t.tomo_cg_iters.to_string());
        kv("twostep.failure_r_factor", format!("{:?}", t.failure_r_factor));
        kv("metrics.snr_window", self.snr_window.to_string());
        kv("output.directory", self.directory.display().to_string());
        kv(
            "output.slices",
            self.slice_indices().iter().map(|z| z.to_string()).collect::<Vec<_>>().join(","),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::smoke();
        cfg.eta = Some(0.1);
        cfg.solver.lambda = 0.1 * 0.1;
        cfg.slices = vec![3, 16];
        let back = ExperimentConfig::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_blank_lines_and_errors() {
        let cfg = ExperimentConfig::parse_text("# a comment\n\nphantom.n = 64 # trailing\nsolver.method=apts\n").unwrap();
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.method, Method::Apts);
        let err = ExperimentConfig::parse_text("phantom.n = 64\nprobe.size = 3\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 2"));
        assert!(ExperimentConfig::parse_text("noise.eta = -1\n").unwrap().validate().is_err());
        assert!(ExperimentConfig::parse_text("phantom.n\n").is_err());
    }

    #[test]
    fn defaults_are_the_full_scale_grid() {
        let cfg = ExperimentConfig::default();
        assert_eq!((cfg.n, cfg.mbar, cfg.fwhm, cfg.stepsize, cfg.angles), (128, 64, 14.0, 32, 12));
        assert_eq!(cfg.slice_indices(), vec![64]);
        assert!(cfg.validate().is_ok());
    }
}
