use super::ComplexImage;
use crate::error::{Error, Result};

fn check_fits(pos: (usize, usize), side: usize, rows: usize, cols: usize) -> Result<()> {
    if pos.0 + side > rows || pos.1 + side > cols {
        return Err(Error::OutOfRange(format!(
            "{side}×{side} window at ({}, {}) exceeds {rows}×{cols} image",
            pos.0, pos.1
        )));
    }
    Ok(())
}

/// Selects the `side×side` sub-image whose top-left corner is `pos` (row, col).
/// Windows never wrap around the image boundary.
pub fn extract_window(img: &ComplexImage, pos: (usize, usize), side: usize) -> Result<ComplexImage> {
    check_fits(pos, side, img.rows(), img.cols())?;
    let mut out = Vec::with_capacity(side * side);
    for r in 0..side {
        let start = (pos.0 + r) * img.cols() + pos.1;
        out.extend_from_slice(&img.as_slice()[start..start + side]);
    }
    ComplexImage::from_vec(side, side, out)
}

/// Adjoint of [`extract_window`]: a zero `n×n` image with `win` placed at `pos`.
pub fn embed_window(win: &ComplexImage, pos: (usize, usize), n: usize) -> Result<ComplexImage> {
    let mut out = ComplexImage::zeros(n, n);
    embed_window_add(win, pos, &mut out)?;
    Ok(out)
}

/// Accumulates `win` into `target` at `pos`.
pub fn embed_window_add(win: &ComplexImage, pos: (usize, usize), target: &mut ComplexImage) -> Result<()> {
    if !win.is_square() {
        return Err(Error::Dimension(format!(
            "window must be square, got {}×{}",
            win.rows(),
            win.cols()
        )));
    }
    let side = win.rows();
    check_fits(pos, side, target.rows(), target.cols())?;
    let cols = target.cols();
    let dst = target.as_mut_slice();
    for r in 0..side {
        let start = (pos.0 + r) * cols + pos.1;
        let row = &win.as_slice()[r * side..(r + 1) * side];
        for (d, s) in dst[start..start + side].iter_mut().zip(row) {
            *d += *s;
        }
    }
    Ok(())
}
