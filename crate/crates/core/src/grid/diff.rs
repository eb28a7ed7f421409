//! Forward differences with a Neumann boundary, and the divergence `-∇ᵀ`.

use rayon::prelude::*;

use super::{ComplexVolume, Field3, C64};
use crate::error::{dim_err, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Element stride of each axis in the z-major layout.
fn strides(n: usize) -> [usize; 3] {
    [1, n, n * n]
}

/// Coordinate of flat index `i` along `axis`.
#[inline]
fn coord(i: usize, n: usize, axis: usize) -> usize {
    match axis {
        0 => i % n,
        1 => (i / n) % n,
        _ => i / (n * n),
    }
}

fn forward_diff(u: &ComplexVolume, axis: usize) -> ComplexVolume {
    let n = u.n();
    let s = strides(n)[axis];
    let src = u.as_slice();
    let mut out = ComplexVolume::zeros(n);
    out.as_mut_slice()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, o)| {
            *o = if coord(i, n, axis) + 1 < n {
                src[i + s] - src[i]
            } else {
                ZERO
            };
        });
    out
}

/// `(∇ₓu, ∇ᵧu, ∇_zu)`; the last difference along each axis is zero.
pub fn gradient3(u: &ComplexVolume) -> Field3 {
    Field3 {
        x: forward_diff(u, 0),
        y: forward_diff(u, 1),
        z: forward_diff(u, 2),
    }
}

/// Adds the divergence contribution of one channel: `p_i - p_{i-1}` in the
/// interior, `p_0` at the first plane and `-p_{n-2}` at the last.
fn add_backward_diff(p: &ComplexVolume, axis: usize, out: &mut [C64]) {
    let n = p.n();
    let s = strides(n)[axis];
    let src = p.as_slice();
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let k = coord(i, n, axis);
        let v = if k == 0 {
            src[i]
        } else if k + 1 == n {
            -src[i - s]
        } else {
            src[i] - src[i - s]
        };
        *o += v;
    });
}

/// `∇·p = -∇ᵀp`, the negative adjoint of [`gradient3`].
pub fn divergence3(p: &Field3) -> Result<ComplexVolume> {
    if !(p.x.same_shape(&p.y) && p.y.same_shape(&p.z)) {
        return dim_err("field channels differ in shape");
    }
    let n = p.n();
    let mut out = ComplexVolume::zeros(n);
    for (axis, ch) in p.channels().into_iter().enumerate() {
        add_backward_diff(ch, axis, out.as_mut_slice());
    }
    Ok(out)
}

/// `Δu = ∇·∇u` with the Neumann boundary, evaluated as one stencil pass.
pub fn laplacian3(u: &ComplexVolume) -> ComplexVolume {
    let n = u.n();
    let st = strides(n);
    let src = u.as_slice();
    let mut out = ComplexVolume::zeros(n);
    out.as_mut_slice()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, o)| {
            let mut acc = ZERO;
            for (axis, &s) in st.iter().enumerate() {
                let k = coord(i, n, axis);
                if k + 1 < n {
                    acc += src[i + s] - src[i];
                }
                if k > 0 {
                    acc -= src[i] - src[i - s];
                }
            }
            *o = acc;
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_field, random_volume, rel_err, rng};

    #[test]
    fn constant_has_zero_gradient() {
        let g = gradient3(&ComplexVolume::from_elem(4, C64::new(3.0, 1.0)));
        assert_eq!(g.norm_sqr(), 0.0);
    }

    #[test]
    fn ramp_along_x() {
        let n = 5;
        let u = ComplexVolume::from_fn(n, |x, _, _| C64::new(x as f64, 0.0));
        let g = gradient3(&u);
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let expect = if x + 1 < n { 1.0 } else { 0.0 };
                    assert_eq!(g.x.get(x, y, z), C64::new(expect, 0.0));
                }
            }
        }
        assert_eq!(g.y.norm_sqr() + g.z.norm_sqr(), 0.0);
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        let mut rng = rng(21);
        let u = random_volume(&mut rng, 6);
        let p = random_field(&mut rng, 6);
        let lhs = gradient3(&u).dot(&p);
        let rhs = -u.dot(&divergence3(&p).unwrap());
        assert!(rel_err(lhs, rhs) < 1e-12);
        assert_eq!(divergence3(&Field3::zeros(3)).unwrap().norm_sqr(), 0.0);
    }

    #[test]
    fn laplacian_matches_explicit_matrix() {
        // Build -∇ᵀ∇ column by column from unit vectors on 4³ and compare
        // against the stencil.
        let n = 4;
        let m = n * n * n;
        let mut mat = vec![vec![0.0; m]; m];
        for j in 0..m {
            let mut e = ComplexVolume::zeros(n);
            e.as_mut_slice()[j] = C64::new(1.0, 0.0);
            let g = gradient3(&e);
            let d = divergence3(&g).unwrap();
            for i in 0..m {
                mat[i][j] = d.as_slice()[i].re;
            }
        }
        let mut rng = rng(22);
        let u = random_volume(&mut rng, n);
        let lap = laplacian3(&u);
        for i in 0..m {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..m {
                acc += u.as_slice()[j] * mat[i][j];
            }
            assert!((acc - lap.as_slice()[i]).norm() < 1e-12);
        }
        // symmetric, negative semidefinite, kernel = constants
        for i in 0..m {
            for j in 0..m {
                assert_eq!(mat[i][j], mat[j][i]);
            }
            let row_sum: f64 = mat[i].iter().sum();
            assert!(row_sum.abs() < 1e-14);
        }
    }
}
