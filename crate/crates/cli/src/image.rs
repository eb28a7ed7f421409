//! 16-bit portable graymap slices with a linear-map sidecar.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use aptomo::{ComplexVolume, C64};

/// Linear map of `[min, max]` onto `0..=65535`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrayMap {
    pub min: f64,
    pub max: f64,
}

impl GrayMap {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max }
    }

    pub fn level(&self, v: f64) -> u16 {
        if !(self.max > self.min) {
            return 0;
        }
        let t = ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0);
        (t * 65535.0).round() as u16
    }
}

/// Binary `P5` graymap, big-endian 16-bit samples.
pub fn encode_pgm(width: usize, height: usize, values: &[f64], map: GrayMap) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(values.len() * 2);
    for &v in values {
        out.extend_from_slice(&map.level(v).to_be_bytes());
    }
    out
}

fn slice_values(u: &ComplexVolume, z: usize, f: impl Fn(C64) -> f64) -> Vec<f64> {
    u.slice_z(z).iter().map(|&v| f(v)).collect()
}

/// Writes `<stem>_z<z>_mag.pgm`, `<stem>_z<z>_phase.pgm` and the sidecar
/// `<stem>_z<z>.map` recording both value ranges.
pub fn write_slice(dir: &Path, stem: &str, u: &ComplexVolume, z: usize) -> Result<()> {
    let n = u.n();
    let mut sidecar = String::new();
    for (kind, f) in [("mag", C64::norm as fn(C64) -> f64), ("phase", C64::arg as fn(C64) -> f64)] {
        let values = slice_values(u, z, f);
        let map = GrayMap::fit(&values);
        let path = dir.join(format!("{stem}_z{z}_{kind}.pgm"));
        std::fs::write(&path, encode_pgm(n, n, &values, map)).with_context(|| format!("writing {}", path.display()))?;
        let _ = writeln!(sidecar, "{kind}: 0 -> {:e}, 65535 -> {:e}", map.min, map.max);
    }
    let path = dir.join(format!("{stem}_z{z}.map"));
    std::fs::write(&path, sidecar).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
