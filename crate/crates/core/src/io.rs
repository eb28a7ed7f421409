//! Binary archives for measurement sets and volumes.
//!
//! A measurement archive is a text header terminated by a line `end`, then
//! the frames as little-endian f64 (θ-major, j-minor, row-major):
//!
//! ```text
//! aptomo-measurements 1
//! n=128
//! mbar=64
//! stepsize=32
//! positions=0,0;0,32;...
//! angles=0.0,0.2617993877991494,...
//! eta=none
//! seed=none
//! frames=108
//! end
//! ```
//!
//! A volume file is a single line `n=<n> layout=zyx-ri` followed by
//! interleaved (re, im) little-endian f64 pairs with x fastest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forward::{AngleSet, MeasurementSet, ScanGeometry};
use crate::grid::{ComplexVolume, C64};

const MAGIC: &str = "aptomo-measurements 1";
const KEYS: [&str; 8] = ["n", "mbar", "stepsize", "positions", "angles", "eta", "seed", "frames"];

fn parse_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        offset: offset as u64,
        message: message.into(),
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

/// Serializes `m` into the archive layout.
pub fn encode_measurements(m: &MeasurementSet) -> Vec<u8> {
    let g = m.geometry();
    let mut head = String::new();
    let _ = writeln!(head, "{MAGIC}");
    let _ = writeln!(head, "n={}", g.n());
    let _ = writeln!(head, "mbar={}", g.side());
    let _ = writeln!(head, "stepsize={}", opt(g.stepsize()));
    let positions: Vec<String> = g.positions().iter().map(|(r, c)| format!("{r},{c}")).collect();
    let _ = writeln!(head, "positions={}", positions.join(";"));
    let angles: Vec<String> = m.angles().angles().iter().map(|a| format!("{:?}", a.radians())).collect();
    let _ = writeln!(head, "angles={}", angles.join(","));
    let _ = writeln!(head, "eta={}", m.eta().map(|e| format!("{e:?}")).unwrap_or_else(|| "none".into()));
    let _ = writeln!(head, "seed={}", opt(m.seed()));
    let _ = writeln!(head, "frames={}", m.frame_count());
    let _ = writeln!(head, "end");
    let mut out = head.into_bytes();
    out.reserve(m.frames().len() * 8);
    for v in m.frames() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_measurements(m: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_measurements(m))?;
    Ok(())
}

/// Reads one header line starting at `pos`; returns (line, offset of line,
/// offset after the newline).
fn next_line(bytes: &[u8], pos: usize) -> Result<(&str, usize, usize)> {
    let rest = &bytes[pos.min(bytes.len())..];
    let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
        return parse_err(bytes.len(), "header ends before its terminating 'end' line");
    };
    let line = std::str::from_utf8(&rest[..nl]).or_else(|e| parse_err(pos + e.valid_up_to(), "header is not UTF-8"))?;
    Ok((line, pos, pos + nl + 1))
}

fn parse_num<T: std::str::FromStr>(s: &str, offset: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .or_else(|_| parse_err(offset, format!("invalid {what} '{s}'")))
}

fn parse_opt<T: std::str::FromStr>(s: &str, offset: usize, what: &str) -> Result<Option<T>> {
    if s == "none" {
        Ok(None)
    } else {
        parse_num(s, offset, what).map(Some)
    }
}

/// Parses an archive. Every malformed or truncated input is a
/// [`Error::Parse`] carrying the byte offset of the problem.
pub fn decode_measurements(bytes: &[u8]) -> Result<MeasurementSet> {
    let (magic, _, mut pos) = next_line(bytes, 0)?;
    if magic != MAGIC {
        return parse_err(0, format!("expected '{MAGIC}', found '{magic}'"));
    }
    let mut values: Vec<(&str, usize)> = Vec::with_capacity(KEYS.len());
    for key in KEYS {
        let (line, at, next) = next_line(bytes, pos)?;
        let Some(v) = line.strip_prefix(key).and_then(|r| r.strip_prefix('=')) else {
            return parse_err(at, format!("expected key '{key}', found '{line}'"));
        };
        values.push((v, at + key.len() + 1));
        pos = next;
    }
    let (end, at, payload_start) = next_line(bytes, pos)?;
    if end != "end" {
        return parse_err(at, format!("expected 'end', found '{end}'"));
    }

    let (v, o) = values[0];
    let n: usize = parse_num(v, o, "n")?;
    let (v, o) = values[1];
    let side: usize = parse_num(v, o, "mbar")?;
    let (v, o) = values[2];
    let stepsize: Option<usize> = parse_opt(v, o, "stepsize")?;
    let (v, o) = values[3];
    let mut positions = Vec::new();
    let mut off = o;
    for item in v.split(';') {
        let Some((r, c)) = item.split_once(',') else {
            return parse_err(off, format!("invalid position '{item}'"));
        };
        positions.push((parse_num(r, off, "row")?, parse_num(c, off, "column")?));
        off += item.len() + 1;
    }
    let (v, o) = values[4];
    let mut thetas = Vec::new();
    let mut off = o;
    for item in v.split(',') {
        thetas.push(parse_num::<f64>(item, off, "angle")?);
        off += item.len() + 1;
    }
    let (v, o) = values[5];
    let eta: Option<f64> = parse_opt(v, o, "eta")?;
    let (v, o) = values[6];
    let seed: Option<u64> = parse_opt(v, o, "seed")?;
    let (v, o) = values[7];
    let declared: usize = parse_num(v, o, "frame count")?;

    let geometry = ScanGeometry::unchecked(n, side, positions, stepsize)
        .or_else(|e| parse_err(values[3].1, format!("invalid geometry: {e}")))?;
    let angles = AngleSet::from_radians(&thetas).or_else(|e| parse_err(values[4].1, format!("invalid angles: {e}")))?;
    let expected = geometry.len() * angles.len();
    if declared != expected {
        return parse_err(
            values[7].1,
            format!("header declares {declared} frames but geometry and angles imply {expected}"),
        );
    }
    let payload = &bytes[payload_start..];
    let want = expected * side * side * 8;
    if payload.len() != want {
        let whole = payload.len() / (side * side * 8).max(1);
        return parse_err(
            payload_start + payload.len().min(want),
            format!(
                "payload holds {} bytes ({whole} whole frames), expected {want} bytes for {expected} frames",
                payload.len()
            ),
        );
    }
    let frames: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if let Some(i) = frames.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return parse_err(payload_start + 8 * i, "intensity is negative or not finite");
    }
    MeasurementSet::new(geometry, angles, frames, eta, seed).or_else(|e| parse_err(payload_start, e.to_string()))
}

/// Loads an archive written by [`save_measurements`].
pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    decode_measurements(&fs::read(path)?)
}

pub fn encode_volume(u: &ComplexVolume) -> Vec<u8> {
    let mut out = format!("n={} layout=zyx-ri\n", u.n()).into_bytes();
    out.reserve(u.as_slice().len() * 16);
    for v in u.as_slice() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<ComplexVolume> {
    let (line, _, start) = next_line(bytes, 0)?;
    let Some(rest) = line.strip_prefix("n=") else {
        return parse_err(0, format!("expected 'n=<n> layout=zyx-ri', found '{line}'"));
    };
    let Some((n, layout)) = rest.split_once(' ') else {
        return parse_err(2, "missing layout field");
    };
    if layout != "layout=zyx-ri" {
        return parse_err(3 + n.len(), format!("unsupported layout '{layout}'"));
    }
    let n: usize = parse_num(n, 2, "n")?;
    let want = n * n * n * 16;
    let payload = &bytes[start..];
    if payload.len() != want {
        return parse_err(
            start + payload.len().min(want),
            format!("payload holds {} bytes, expected {want}", payload.len()),
        );
    }
    let data: Vec<C64> = payload
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            )
        })
        .collect();
    ComplexVolume::from_vec(n, data).or_else(|e| parse_err(start, e.to_string()))
}

pub fn save_volume(u: &ComplexVolume, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_volume(u))?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<ComplexVolume> {
    decode_volume(&fs::read(path)?)
}
