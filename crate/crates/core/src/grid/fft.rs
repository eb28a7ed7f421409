use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use super::{ComplexImage, C64};
use crate::error::{dim_err, Result};

/// Planned unitary 2D DFT on square `side×side` frames.
///
/// Both directions are scaled by `1/side` (that is, `1/√N` with `N = side²`),
/// so the forward transform is unitary and its inverse is its adjoint.
#[derive(Clone)]
pub struct Dft2 {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft2").field("side", &self.side).finish()
    }
}

impl Dft2 {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// In-place forward transform of a row-major `side×side` buffer.
    pub fn forward_in_place(&self, data: &mut [C64]) {
        self.transform(data, &*self.forward);
    }

    /// In-place inverse transform of a row-major `side×side` buffer.
    pub fn inverse_in_place(&self, data: &mut [C64]) {
        self.transform(data, &*self.inverse);
    }

    fn transform(&self, data: &mut [C64], plan: &dyn Fft<f64>) {
        let s = self.side;
        assert_eq!(data.len(), s * s, "buffer is not {s}×{s}");
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // rows, then columns through a transpose
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, s);
        plan.process_with_scratch(data, &mut scratch);
        transpose_square(data, s);
        let scale = 1.0 / s as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward(&self, img: &ComplexImage) -> Result<ComplexImage> {
        self.check(img)?;
        let mut out = img.clone();
        self.forward_in_place(out.as_mut_slice());
        Ok(out)
    }

    pub fn inverse(&self, img: &ComplexImage) -> Result<ComplexImage> {
        self.check(img)?;
        let mut out = img.clone();
        self.inverse_in_place(out.as_mut_slice());
        Ok(out)
    }

    fn check(&self, img: &ComplexImage) -> Result<()> {
        if img.rows() != self.side || img.cols() != self.side {
            return dim_err(format!(
                "{}×{} image for a {}×{} transform",
                img.rows(),
                img.cols(),
                self.side,
                self.side
            ));
        }
        Ok(())
    }
}

fn transpose_square(data: &mut [C64], s: usize) {
    for r in 0..s {
        for c in r + 1..s {
            data.swap(r * s + c, c * s + r);
        }
    }
}

fn check_square(img: &ComplexImage) -> Result<()> {
    if img.rows() == 0 || !img.is_square() {
        return dim_err(format!(
            "DFT needs a non-empty square image, got {}×{}",
            img.rows(),
            img.cols()
        ));
    }
    Ok(())
}

/// Unitary 2D DFT of a square image.
pub fn dft2_normalized(img: &ComplexImage) -> Result<ComplexImage> {
    check_square(img)?;
    Dft2::new(img.rows()).forward(img)
}

/// Inverse (and adjoint) of [`dft2_normalized`].
pub fn idft2_normalized(img: &ComplexImage) -> Result<ComplexImage> {
    check_square(img)?;
    Dft2::new(img.rows()).inverse(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_image, rng};
    use std::f64::consts::PI;

    fn naive_dft(img: &ComplexImage) -> ComplexImage {
        let s = img.rows();
        let scale = 1.0 / (s as f64);
        ComplexImage::from_fn(s, s, |k, l| {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..s {
                for c in 0..s {
                    let phase = -2.0 * PI * ((k * r) as f64 + (l * c) as f64) / s as f64;
                    acc += img.get(r, c) * C64::from_polar(1.0, phase);
                }
            }
            acc * scale
        })
    }

    #[test]
    fn constant_input_concentrates_at_dc() {
        let img = ComplexImage::from_elem(2, 2, C64::new(1.0, 0.0));
        let out = dft2_normalized(&img).unwrap();
        let expect = [2.0, 0.0, 0.0, 0.0];
        for (v, e) in out.as_slice().iter().zip(expect) {
            assert!((v - C64::new(e, 0.0)).norm() < 1e-15);
        }
        let back = idft2_normalized(&out).unwrap();
        for v in back.as_slice() {
            assert!((v - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut img = ComplexImage::zeros(2, 2);
        img.set(0, 0, C64::new(1.0, 0.0));
        let out = dft2_normalized(&img).unwrap();
        for v in out.as_slice() {
            assert!((v - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = rng(11);
        let img = random_image(&mut rng, 8, 8);
        let fast = dft2_normalized(&img).unwrap();
        let slow = naive_dft(&img);
        let err = fast
            .as_slice()
            .iter()
            .zip(slow.as_slice())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "max abs error {err}");
    }

    #[test]
    fn inverse_and_adjoint() {
        let mut rng = rng(12);
        let x = random_image(&mut rng, 16, 16);
        let y = random_image(&mut rng, 16, 16);
        let fx = dft2_normalized(&x).unwrap();
        let back = idft2_normalized(&fx).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
        let lhs = fx.dot(&y);
        let rhs = x.dot(&idft2_normalized(&y).unwrap());
        assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        assert!((fx.norm() - x.norm()).abs() <= 1e-12 * x.norm());
    }

    #[test]
    fn rejects_non_square() {
        let img = ComplexImage::zeros(2, 3);
        assert!(dft2_normalized(&img).is_err());
        assert!(idft2_normalized(&ComplexImage::zeros(0, 0)).is_err());
    }
}
