use crate::grid::{ComplexVolume, C64};

/// How a conjugate-gradient solve ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgStatus {
    Converged,
    MaxIterations,
    /// Curvature `⟨p, Ap⟩` vanished or went non-finite; the last good iterate
    /// is returned.
    Breakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// `‖r_k‖ / ‖b‖` for k = 0..=iterations.
    pub residuals: Vec<f64>,
    pub status: CgStatus,
}

/// Conjugate gradient for a Hermitian positive definite `op`, warm-started at
/// `x0`. Stops after `max_iters` steps or once `‖r‖ ≤ tol·‖b‖`.
pub fn cg_solve(
    op: impl Fn(&ComplexVolume) -> ComplexVolume,
    b: &ComplexVolume,
    x0: &ComplexVolume,
    max_iters: usize,
    tol: f64,
) -> (ComplexVolume, CgReport) {
    let mut x = x0.clone();
    let mut r = b.clone();
    r.axpy(C64::new(-1.0, 0.0), &op(&x));
    let b_norm = b.norm();
    let scale = if b_norm > 0.0 { b_norm } else { 1.0 };
    let mut rr = r.norm_sqr();
    let mut residuals = vec![rr.sqrt() / scale];
    if rr.sqrt() <= tol * b_norm || rr == 0.0 {
        return (
            x,
            CgReport {
                iterations: 0,
                residuals,
                status: CgStatus::Converged,
            },
        );
    }
    let mut p = r.clone();
    let mut status = CgStatus::MaxIterations;
    let mut iterations = 0;
    for _ in 0..max_iters {
        let ap = op(&p);
        let curvature = p.dot(&ap).re;
        if !(curvature.is_finite() && curvature > f64::MIN_POSITIVE * rr.max(1.0)) {
            status = CgStatus::Breakdown;
            break;
        }
        let alpha = rr / curvature;
        x.axpy(C64::new(alpha, 0.0), &p);
        r.axpy(C64::new(-alpha, 0.0), &ap);
        iterations += 1;
        let rr_next = r.norm_sqr();
        residuals.push(rr_next.sqrt() / scale);
        if rr_next.sqrt() <= tol * b_norm {
            status = CgStatus::Converged;
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        // p = r + beta p
        p.scale(C64::new(beta, 0.0));
        p.axpy(C64::new(1.0, 0.0), &r);
    }
    (
        x,
        CgReport {
            iterations,
            residuals,
            status,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_volume, rng};

    #[test]
    fn identity_solves_in_one_step() {
        let mut r = rng(51);
        let b = random_volume(&mut r, 4);
        let (x, rep) = cg_solve(|v| v.clone(), &b, &ComplexVolume::zeros(4), 10, 1e-12);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.status, CgStatus::Converged);
        for (a, e) in x.as_slice().iter().zip(b.as_slice()) {
            assert!((a - e).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_operator_breaks_down() {
        let mut r = rng(52);
        let b = random_volume(&mut r, 3);
        let (x, rep) = cg_solve(|v| ComplexVolume::zeros(v.n()), &b, &ComplexVolume::zeros(3), 5, 1e-8);
        assert_eq!(rep.status, CgStatus::Breakdown);
        assert_eq!(rep.iterations, 0);
        assert_eq!(x.norm_sqr(), 0.0);
    }

    #[test]
    fn zero_rhs_from_zero_start() {
        let (x, rep) = cg_solve(|v| v.clone(), &ComplexVolume::zeros(3), &ComplexVolume::zeros(3), 5, 1e-8);
        assert_eq!(rep.status, CgStatus::Converged);
        assert_eq!(x.norm_sqr(), 0.0);
    }
}
