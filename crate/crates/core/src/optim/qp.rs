//! Convex QP: Mehrotra predictor-corrector interior point on
//! `min ½xᵀHx + fᵀx s.t. Ax + s = b, s ≥ 0`, then an equality-constrained
//! polish on the identified active set.

use nalgebra::{DMatrix, DVector};

use super::lp::{feasibility_status, solve_max_free};
use super::{QuadraticProgram, SolveResult, Status, Tolerances};

const MAX_IPM_ITER: usize = 120;
const STEP_FRACTION: f64 = 0.995;

/// Components of the KKT residual for `(x, z)` in the original row scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn kkt_residual(qp: &QuadraticProgram, x: &DVector<f64>, z: &DVector<f64>) -> KktResidual {
    let grad = &qp.h * x + &qp.f + qp.a.transpose() * z;
    let slack = &qp.b - &qp.a * x;
    KktResidual {
        stationarity: grad.amax(),
        primal: slack.iter().fold(0.0_f64, |acc, s| acc.max(-s)),
        dual: z.iter().fold(0.0_f64, |acc, v| acc.max(-v)),
        complementarity: z
            .iter()
            .zip(slack.iter())
            .fold(0.0_f64, |acc, (zi, si)| acc.max((zi * si).abs())),
    }
}

struct Rows {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    norm: Vec<f64>,
    source: Vec<usize>,
}

impl Rows {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
        }
    }

    fn mul_t(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(i)) {
                    *o += a * yi;
                }
            }
        }
    }
}

pub fn solve_qp(qp: &QuadraticProgram) -> SolveResult {
    let n = qp.num_vars();
    let mut rows = Rows {
        n,
        a: Vec::with_capacity(qp.a.nrows() * n),
        b: Vec::with_capacity(qp.a.nrows()),
        norm: Vec::new(),
        source: Vec::new(),
    };
    for i in 0..qp.a.nrows() {
        let nrm = qp.a.row(i).norm();
        if nrm <= 1e-300 {
            if qp.b[i] < -qp.tol.feas * (1.0 + qp.b[i].abs()) {
                return SolveResult::failed(Status::Infeasible, 0);
            }
            continue;
        }
        rows.a.extend(qp.a.row(i).iter().map(|v| v / nrm));
        rows.b.push(qp.b[i] / nrm);
        rows.norm.push(nrm);
        rows.source.push(i);
    }
    if rows.m() == 0 {
        return solve_unconstrained(qp);
    }

    let ipm = interior_point(qp, &rows);
    let (x, zs, iterations) = match ipm {
        IpmOutcome::Converged { x, z, iterations } => (x, z, iterations),
        IpmOutcome::Stalled { iterations } => {
            return SolveResult::failed(settle_status(qp), iterations);
        }
    };

    let mut z = DVector::zeros(qp.a.nrows());
    for (k, &src) in rows.source.iter().enumerate() {
        z[src] = zs[k] / rows.norm[k];
    }
    let mut x = DVector::from_vec(x);
    if let Some((xp, zp)) = polish(qp, &rows, &x, &z) {
        if kkt_residual(qp, &xp, &zp).max() <= kkt_residual(qp, &x, &z).max() {
            x = xp;
            z = zp;
        }
    }
    let objective = qp.objective(&x);
    SolveResult {
        status: Status::Optimal,
        x: Some(x),
        objective,
        dual: Some(z),
        iterations,
    }
}

fn solve_unconstrained(qp: &QuadraticProgram) -> SolveResult {
    let rhs = -&qp.f;
    if let Some(ch) = qp.h.clone().cholesky() {
        let x = ch.solve(&rhs);
        let objective = qp.objective(&x);
        return SolveResult {
            status: Status::Optimal,
            x: Some(x),
            objective,
            dual: Some(DVector::zeros(qp.a.nrows())),
            iterations: 0,
        };
    }
    let scale = qp.h.amax().max(1.0);
    let svd = qp.h.clone().svd(true, true);
    match svd.solve(&rhs, 1e-12 * scale) {
        Ok(x) if (&qp.h * &x - &rhs).amax() <= 1e-9 * (1.0 + qp.f.amax()) => {
            let objective = qp.objective(&x);
            SolveResult {
                status: Status::Optimal,
                x: Some(x),
                objective,
                dual: Some(DVector::zeros(qp.a.nrows())),
                iterations: 0,
            }
        }
        _ => SolveResult::failed(Status::Unbounded, 0),
    }
}

enum IpmOutcome {
    Converged {
        x: Vec<f64>,
        z: Vec<f64>,
        iterations: usize,
    },
    Stalled {
        iterations: usize,
    },
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha = 1.0_f64;
    for (vi, di) in v.iter().zip(dv) {
        if *di < 0.0 {
            alpha = alpha.min(-vi / di);
        }
    }
    alpha
}

fn interior_point(qp: &QuadraticProgram, rows: &Rows) -> IpmOutcome {
    let n = rows.n;
    let m = rows.m();
    let h = &qp.h;
    let f: Vec<f64> = qp.f.iter().copied().collect();
    let bscale = rows.b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let dscale = 1.0 + qp.f.amax() + h.amax();
    let tol_p = 1e-11 * bscale;
    let tol_d = 1e-11 * dscale;

    let mut x = vec![0.0; n];
    let mut s: Vec<f64> = rows.b.iter().map(|bi| bi.max(1.0)).collect();
    let mut z = vec![1.0; m];

    let mut ax = vec![0.0; m];
    let mut atz = vec![0.0; n];
    let mut rd = vec![0.0; n];
    let mut rp = vec![0.0; m];
    let mut tmp_m = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;

    for it in 0..MAX_IPM_ITER {
        rows.mul(&x, &mut ax);
        rows.mul_t(&z, &mut atz);
        for i in 0..n {
            let hx: f64 = (0..n).map(|j| h[(i, j)] * x[j]).sum();
            rd[i] = hx + f[i] + atz[i];
        }
        for i in 0..m {
            rp[i] = ax[i] + s[i] - rows.b[i];
        }
        let mu = s.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / m as f64;
        let rp_norm = rp.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let rd_norm = rd.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let obj: f64 = 0.5
            * (0..n)
                .map(|i| x[i] * (0..n).map(|j| h[(i, j)] * x[j]).sum::<f64>())
                .sum::<f64>()
            + f.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let tol_mu = 1e-12 * (1.0 + obj.abs());

        let merit = (rp_norm / bscale).max(rd_norm / dscale).max(mu / (1.0 + obj.abs()));
        if best.as_ref().is_none_or(|(bm, _, _)| merit < *bm) {
            best = Some((merit, x.clone(), z.clone()));
        }
        if rp_norm <= tol_p && rd_norm <= tol_d && mu <= tol_mu {
            return IpmOutcome::Converged { x, z, iterations: it };
        }
        let xnorm = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let znorm = z.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if xnorm > 1e13 || znorm > 1e13 {
            break;
        }

        // Normal matrix H + Aᵀ W A.
        let w: Vec<f64> = z.iter().zip(&s).map(|(zi, si)| zi / si).collect();
        let mut acc = vec![0.0; n * n];
        for i in 0..m {
            let r = rows.row(i);
            let wi = w[i];
            for p in 0..n {
                let wp = wi * r[p];
                if wp == 0.0 {
                    continue;
                }
                let dst = &mut acc[p * n + p..(p + 1) * n];
                for (d, rq) in dst.iter_mut().zip(&r[p..]) {
                    *d += wp * rq;
                }
            }
        }
        let mut mat = h.clone();
        for p in 0..n {
            for q in p..n {
                mat[(p, q)] += acc[p * n + q];
                mat[(q, p)] = mat[(p, q)];
            }
        }
        let diag_scale = (0..n).fold(1.0_f64, |a, i| a.max(mat[(i, i)].abs()));
        let mut reg = 1e-14 * diag_scale;
        let chol = loop {
            let mut reg_mat = mat.clone();
            for i in 0..n {
                reg_mat[(i, i)] += reg;
            }
            if let Some(c) = reg_mat.cholesky() {
                break Some(c);
            }
            reg *= 100.0;
            if reg > 1e-4 * diag_scale {
                break None;
            }
        };
        let Some(chol) = chol else { break };

        let solve_dir = |rc: &[f64], tmp_m: &mut Vec<f64>, tmp_n: &mut Vec<f64>| {
            // tmp_m = rc/s + W r_p
            for i in 0..m {
                tmp_m[i] = rc[i] / s[i] + w[i] * rp[i];
            }
            rows.mul_t(tmp_m, tmp_n);
            let rhs = DVector::from_iterator(n, (0..n).map(|i| -rd[i] - tmp_n[i]));
            let dx = chol.solve(&rhs);
            let dxv: Vec<f64> = dx.iter().copied().collect();
            let mut adx = vec![0.0; m];
            rows.mul(&dxv, &mut adx);
            let ds: Vec<f64> = (0..m).map(|i| -rp[i] - adx[i]).collect();
            let dz: Vec<f64> = (0..m).map(|i| (rc[i] - z[i] * ds[i]) / s[i]).collect();
            (dxv, ds, dz)
        };

        let rc_aff: Vec<f64> = s.iter().zip(&z).map(|(a, b)| -a * b).collect();
        let (_, ds_a, dz_a) = solve_dir(&rc_aff, &mut tmp_m, &mut tmp_n);
        let alpha_p = max_step(&s, &ds_a);
        let alpha_d = max_step(&z, &dz_a);
        let alpha = alpha_p.min(alpha_d);
        let mu_aff = (0..m)
            .map(|i| (s[i] + alpha * ds_a[i]) * (z[i] + alpha * dz_a[i]))
            .sum::<f64>()
            / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc: Vec<f64> = (0..m).map(|i| -s[i] * z[i] - ds_a[i] * dz_a[i] + sigma * mu).collect();
        let (dx, ds, dz) = solve_dir(&rc, &mut tmp_m, &mut tmp_n);
        let alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for i in 0..m {
            s[i] = (s[i] + alpha * ds[i]).max(1e-300);
            z[i] = (z[i] + alpha * dz[i]).max(1e-300);
        }
    }
    // Accept a near-converged best iterate; the polish usually restores
    // full accuracy.
    match best {
        Some((merit, x, z)) if merit <= 1e-9 => IpmOutcome::Converged {
            x,
            z,
            iterations: MAX_IPM_ITER,
        },
        _ => IpmOutcome::Stalled {
            iterations: MAX_IPM_ITER,
        },
    }
}

/// Solves the equality-constrained KKT system on the rows the interior point
/// identified as active; rejected unless multipliers and slacks check out.
fn polish(
    qp: &QuadraticProgram,
    rows: &Rows,
    x: &DVector<f64>,
    z: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = rows.n;
    let active: Vec<usize> = (0..rows.m())
        .filter(|&k| {
            let src = rows.source[k];
            let slack = rows.b[k] - rows.row(k).iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>();
            z[src] * rows.norm[k] > slack
        })
        .collect();
    if active.len() > n {
        return None;
    }
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    let mut rhs = DVector::zeros(n + k);
    for i in 0..n {
        rhs[i] = -qp.f[i];
    }
    for (c, &r) in active.iter().enumerate() {
        for j in 0..n {
            let v = rows.row(r)[j];
            kkt[(n + c, j)] = v;
            kkt[(j, n + c)] = v;
        }
        rhs[n + c] = rows.b[r];
    }
    let lu = kkt.lu();
    let sol = lu.solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let xp = sol.rows(0, n).into_owned();
    let mut zp = DVector::zeros(qp.a.nrows());
    let lam_scale = 1.0 + z.amax();
    for (c, &r) in active.iter().enumerate() {
        let lam = sol[n + c];
        if lam < -1e-9 * lam_scale {
            return None;
        }
        zp[rows.source[r]] = lam.max(0.0) / rows.norm[r];
    }
    let bscale = rows.b.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for r in 0..rows.m() {
        let ax: f64 = rows.row(r).iter().zip(xp.iter()).map(|(a, v)| a * v).sum();
        if ax - rows.b[r] > 1e-10 * bscale {
            return None;
        }
    }
    Some((xp, zp))
}

/// Status when the interior point fails: feasibility first, then a recession
/// direction `d` with `Ad ≤ 0`, `Hd = 0`, `fᵀd < 0`.
fn settle_status(qp: &QuadraticProgram) -> Status {
    let tol = Tolerances::default();
    match feasibility_status(&qp.a, &qp.b, &tol) {
        Status::Infeasible => return Status::Infeasible,
        Status::NumericalFailure => return Status::NumericalFailure,
        _ => {}
    }
    let n = qp.num_vars();
    let m = qp.a.nrows();
    let hs = qp.h.amax().max(1.0);
    let mut a = DMatrix::zeros(m + 2 * n + 2 * n, n);
    let mut b = DVector::zeros(m + 4 * n);
    for i in 0..m {
        let nrm = qp.a.row(i).norm().max(1e-300);
        for j in 0..n {
            a[(i, j)] = qp.a[(i, j)] / nrm;
        }
    }
    for i in 0..n {
        for j in 0..n {
            a[(m + i, j)] = qp.h[(i, j)] / hs;
            a[(m + n + i, j)] = -qp.h[(i, j)] / hs;
        }
        b[m + i] = 1e-9;
        b[m + n + i] = 1e-9;
        a[(m + 2 * n + i, i)] = 1.0;
        b[m + 2 * n + i] = 1.0;
        a[(m + 3 * n + i, i)] = -1.0;
        b[m + 3 * n + i] = 1.0;
    }
    let c = -&qp.f;
    let res = solve_max_free(&a, &b, &c, &tol, false);
    if res.status == Status::Optimal && res.objective > 1e-7 * (1.0 + qp.f.amax()) {
        Status::Unbounded
    } else {
        Status::NumericalFailure
    }
}
