use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

const VALUE_ITER_MAX: usize = 100_000;
const NEWTON_STEPS: usize = 4;
/// Relative residual accepted for the Riccati solution.
pub const RICCATI_TOL: f64 = 1e-9;

/// Infinite-horizon LQR gain `u = Kx` and the stabilizing DARE solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Lqr {
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

fn gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let bt_p = b.transpose() * p;
    let lhs = r + &bt_p * b;
    lhs.cholesky().map(|c| -c.solve(&(bt_p * a)))
}

/// Spectral radius via the real Schur form.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `P = AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q` for the stabilizing root.
pub fn synthesize_prestabilizer(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Lqr> {
    let n = a.nrows();
    let m = b.ncols();
    if a.shape() != (n, n) || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Dimension("LQR data dimensions are inconsistent".into()));
    }
    linalg::check_psd(q, "Q")?;
    linalg::check_psd(r, "R")?;
    if r.clone().cholesky().is_none() {
        return Err(Error::InvalidInput("R must be positive definite".into()));
    }

    let scale = linalg::max_abs(q).max(1.0);
    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..VALUE_ITER_MAX {
        let k = gain(a, b, r, &p).ok_or_else(|| Error::Solver("R + BᵀPB lost definiteness".into()))?;
        let acl = a + b * &k;
        let next = acl.transpose() * &p * &acl + q + k.transpose() * r * &k;
        let next = (&next + next.transpose()) * 0.5;
        let change = linalg::max_abs(&(&next - &p));
        p = next;
        if !p.iter().all(|v| v.is_finite()) || linalg::max_abs(&p) > 1e14 * scale {
            return Err(Error::Unstabilizable("Riccati iteration diverged".into()));
        }
        if change <= 1e-13 * linalg::max_abs(&p).max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Unstabilizable("Riccati iteration did not converge".into()));
    }
    let mut k = gain(a, b, r, &p).expect("definite");

    // Newton refinement: solve the closed-loop Lyapunov equation exactly.
    for _ in 0..NEWTON_STEPS {
        let acl = a + b * &k;
        if spectral_radius(&acl) >= 1.0 {
            break;
        }
        let rhs = q + k.transpose() * r * &k;
        let Some(p_new) = discrete_lyapunov(&acl, &rhs) else {
            break;
        };
        let Some(k_new) = gain(a, b, r, &p_new) else { break };
        p = (&p_new + p_new.transpose()) * 0.5;
        k = k_new;
    }

    let acl = a + b * &k;
    let rho = spectral_radius(&acl);
    if rho >= 1.0 {
        return Err(Error::Unstabilizable(format!(
            "closed-loop spectral radius {rho:.6} ≥ 1"
        )));
    }
    let res = riccati_residual(a, b, q, r, &k, &p);
    if res > RICCATI_TOL * linalg::max_abs(&p).max(1.0) {
        return Err(Error::Solver(format!("Riccati residual {res:.3e} above tolerance")));
    }
    Ok(Lqr { k, p })
}

/// `max |P − (A+BK)ᵀP(A+BK) − Q − KᵀRK|`.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let acl = a + b * k;
    linalg::max_abs(&(p - acl.transpose() * p * &acl - q - k.transpose() * r * k))
}

/// `X = AᵀXA + W` through the Kronecker system.
pub fn discrete_lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let lhs = DMatrix::identity(n * n, n * n) - at.kronecker(&at);
    let rhs = nalgebra::DVector::from_column_slice(w.as_slice());
    let x = lhs.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scalar_dare_closed_form() {
        let a = dmatrix![0.5];
        let b = dmatrix![1.0];
        let one = dmatrix![1.0];
        let l = synthesize_prestabilizer(&a, &b, &one, &one).unwrap();
        // P = 1 + a²P/(1+P)  ⇔  P² − a²P − 1 = 0 with b = q = r = 1.
        let root = (0.25 + (0.0625_f64 + 4.0).sqrt()) / 2.0;
        assert!((l.p[(0, 0)] - root).abs() < 1e-12);
        assert!((0.5 + l.k[(0, 0)]).abs() < 1.0);
    }

    #[test]
    fn unstabilizable_pair() {
        let r = synthesize_prestabilizer(&dmatrix![2.0], &dmatrix![0.0], &dmatrix![1.0], &dmatrix![1.0]);
        assert!(matches!(r, Err(Error::Unstabilizable(_))));
    }

    #[test]
    fn double_integrator_residual() {
        let a = dmatrix![1.0, 1.0; 0.0, 1.0];
        let b = dmatrix![0.5; 1.0];
        let q = DMatrix::identity(2, 2);
        let r = dmatrix![1.0];
        let l = synthesize_prestabilizer(&a, &b, &q, &r).unwrap();
        assert!(riccati_residual(&a, &b, &q, &r, &l.k, &l.p) < 1e-8);
        assert!(spectral_radius(&(&a + &b * &l.k)) < 1.0);
    }
}
