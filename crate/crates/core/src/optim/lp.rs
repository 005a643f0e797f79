//! Revised simplex on the dual of `max cᵀx s.t. A x ≤ b` (x free).
//!
//! The dual `min bᵀy s.t. Aᵀy = c, y ≥ 0` has one equality per primal
//! variable, so the basis stays `n × n` while pricing sweeps the `m` rows.
//! At an optimal basis the simplex multipliers are a primal optimum and the
//! basic `y` a dual certificate.

use nalgebra::{DMatrix, DVector};

use super::{LinearProgram, Sense, SolveResult, Status, Tolerances};

const REFACTOR_EVERY: usize = 64;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_SWITCH: usize = 40;

pub fn solve_lp(lp: &LinearProgram) -> SolveResult {
    let (a, b) = lp.expanded_rows();
    let sign = match lp.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let c = &lp.objective * sign;
    let mut res = solve_max_free(&a, &b, &c, &lp.tol, true);
    if res.status == Status::Optimal {
        res.objective = lp.objective.dot(res.x.as_ref().expect("optimal has x"));
    } else if res.status == Status::Unbounded {
        res.objective = sign * f64::INFINITY;
    }
    res
}

enum Outcome {
    Optimal,
    DualUnbounded,
    Failure,
}

/// Normalized rows `a_i/‖a_i‖∞ · x ≤ b_i/‖a_i‖∞`; zero rows dropped.
struct ScaledRows {
    n: usize,
    data: Vec<f64>,
    rhs: Vec<f64>,
    scale: Vec<f64>,
    source: Vec<usize>,
}

impl ScaledRows {
    fn new(a: &DMatrix<f64>, b: &DVector<f64>, feas_tol: f64) -> Option<Self> {
        let n = a.ncols();
        let mut rows = ScaledRows {
            n,
            data: Vec::with_capacity(a.nrows() * n),
            rhs: Vec::with_capacity(a.nrows()),
            scale: Vec::with_capacity(a.nrows()),
            source: Vec::with_capacity(a.nrows()),
        };
        for i in 0..a.nrows() {
            let norm = (0..n).fold(0.0_f64, |acc, j| acc.max(a[(i, j)].abs()));
            if norm <= 1e-300 {
                if b[i] < -feas_tol * (1.0 + b[i].abs()) {
                    return None;
                }
                continue;
            }
            rows.data.extend((0..n).map(|j| a[(i, j)] / norm));
            rows.rhs.push(b[i] / norm);
            rows.scale.push(norm);
            rows.source.push(i);
        }
        Some(rows)
    }

    fn len(&self) -> usize {
        self.rhs.len()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }
}

struct DualSimplex<'a> {
    n: usize,
    m: usize,
    rows: &'a ScaledRows,
    sigma: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    basic_pos: Vec<Option<usize>>,
    binv: DMatrix<f64>,
    xb: Vec<f64>,
    locked: Vec<bool>,
    iterations: usize,
    max_iter: usize,
    dtol: f64,
    ftol: f64,
}

impl<'a> DualSimplex<'a> {
    fn new(rows: &'a ScaledRows, c: &DVector<f64>, max_iter: usize) -> Self {
        let n = rows.n;
        let m = rows.len();
        let sigma: Vec<f64> = c.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = c.iter().map(|v| v.abs()).collect();
        let mut basic_pos = vec![None; m + n];
        let basis: Vec<usize> = (0..n).map(|k| m + k).collect();
        for (k, &col) in basis.iter().enumerate() {
            basic_pos[col] = Some(k);
        }
        let bscale = rows.rhs.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let cscale = rhs.iter().fold(0.0_f64, |acc, v| acc.max(*v));
        DualSimplex {
            n,
            m,
            rows,
            sigma,
            xb: rhs.clone(),
            rhs,
            basis,
            basic_pos,
            binv: DMatrix::identity(n, n),
            locked: vec![false; n],
            iterations: 0,
            max_iter,
            dtol: 1e-10 * (1.0 + bscale),
            ftol: 1e-10 * (1.0 + cscale),
        }
    }

    fn column(&self, j: usize) -> DVector<f64> {
        if j < self.m {
            let r = self.rows.row(j);
            DVector::from_iterator(self.n, (0..self.n).map(|k| self.sigma[k] * r[k]))
        } else {
            let mut e = DVector::zeros(self.n);
            e[j - self.m] = 1.0;
            e
        }
    }

    fn cost(&self, j: usize, phase1: bool) -> f64 {
        match (j < self.m, phase1) {
            (true, true) => 0.0,
            (true, false) => self.rows.rhs[j],
            (false, true) => 1.0,
            (false, false) => 0.0,
        }
    }

    /// Simplex multipliers `π = B⁻ᵀ c_B`, pre-multiplied by the row signs.
    fn signed_multipliers(&self, phase1: bool) -> Vec<f64> {
        let mut pi = vec![0.0; self.n];
        for (i, &col) in self.basis.iter().enumerate() {
            let cb = self.cost(col, phase1);
            if cb != 0.0 {
                for (k, p) in pi.iter_mut().enumerate() {
                    *p += self.binv[(i, k)] * cb;
                }
            }
        }
        for (p, s) in pi.iter_mut().zip(&self.sigma) {
            *p *= s;
        }
        pi
    }

    fn reduced_cost(&self, j: usize, spi: &[f64], phase1: bool) -> f64 {
        let r = self.rows.row(j);
        let dot: f64 = r.iter().zip(spi).map(|(a, p)| a * p).sum();
        self.cost(j, phase1) - dot
    }

    fn refactor(&mut self) -> bool {
        let n = self.n;
        let mut bmat = DMatrix::zeros(n, n);
        for (i, &col) in self.basis.iter().enumerate() {
            bmat.set_column(i, &self.column(col));
        }
        match bmat.try_inverse() {
            Some(inv) => {
                self.binv = inv;
                let xb = &self.binv * DVector::from_column_slice(&self.rhs);
                self.xb = xb.iter().map(|v| v.max(0.0)).collect();
                true
            }
            None => false,
        }
    }

    fn pivot(&mut self, r: usize, entering: usize, u: &DVector<f64>, theta: f64) {
        let n = self.n;
        for i in 0..n {
            if i != r {
                self.xb[i] = (self.xb[i] - theta * u[i]).max(0.0);
            }
        }
        self.xb[r] = theta.max(0.0);
        let ur = u[r];
        for k in 0..n {
            self.binv[(r, k)] /= ur;
        }
        for i in 0..n {
            if i == r || u[i] == 0.0 {
                continue;
            }
            let f = u[i];
            for k in 0..n {
                let v = self.binv[(r, k)];
                self.binv[(i, k)] -= f * v;
            }
        }
        let leaving = self.basis[r];
        self.basic_pos[leaving] = None;
        self.basis[r] = entering;
        self.basic_pos[entering] = Some(r);
        self.iterations += 1;
    }

    fn run(&mut self, phase1: bool) -> Outcome {
        let mut degenerate_run = 0usize;
        let mut since_refactor = 0usize;
        loop {
            if self.iterations >= self.max_iter {
                return Outcome::Failure;
            }
            if since_refactor >= REFACTOR_EVERY {
                if !self.refactor() {
                    return Outcome::Failure;
                }
                since_refactor = 0;
            }
            let bland = degenerate_run > DEGENERATE_SWITCH;
            let spi = self.signed_multipliers(phase1);
            let mut entering = None;
            let mut best = -self.dtol;
            for j in 0..self.m {
                if self.basic_pos[j].is_some() {
                    continue;
                }
                let d = self.reduced_cost(j, &spi, phase1);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Outcome::Optimal;
            };
            let u = &self.binv * self.column(q);

            // Harris two-pass ratio test.
            let mut theta_max = f64::INFINITY;
            for i in 0..self.n {
                if u[i] > PIVOT_TOL {
                    theta_max = theta_max.min((self.xb[i] + self.ftol) / u[i]);
                }
            }
            if !theta_max.is_finite() {
                if phase1 {
                    return Outcome::Failure;
                }
                return Outcome::DualUnbounded;
            }
            let mut leave: Option<usize> = None;
            for i in 0..self.n {
                if u[i] <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.xb[i] / u[i];
                if ratio > theta_max {
                    continue;
                }
                leave = match leave {
                    None => Some(i),
                    Some(l) => {
                        let better = if bland {
                            ratio < self.xb[l] / u[l] - 1e-15
                                || (ratio <= self.xb[l] / u[l] + 1e-15 && self.basis[i] < self.basis[l])
                        } else {
                            let art_i = self.basis[i] >= self.m;
                            let art_l = self.basis[l] >= self.m;
                            (art_i && !art_l) || (art_i == art_l && u[i] > u[l])
                        };
                        if better {
                            Some(i)
                        } else {
                            Some(l)
                        }
                    }
                };
            }
            let r = leave.expect("theta_max finite implies a candidate");
            let theta = (self.xb[r] / u[r]).max(0.0);
            if theta * u.amax() <= 1e-12 * (1.0 + self.ftol) {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q, &u, theta);
            since_refactor += 1;
        }
    }

    fn artificial_sum(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.xb)
            .filter(|(c, _)| **c >= self.m)
            .map(|(_, v)| *v)
            .sum()
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are redundant and their artificial stays locked at zero.
    fn drive_out_artificials(&mut self) -> bool {
        for r in 0..self.n {
            if self.basis[r] < self.m {
                continue;
            }
            let rho: Vec<f64> = (0..self.n).map(|k| self.binv[(r, k)] * self.sigma[k]).collect();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.m {
                if self.basic_pos[j].is_some() {
                    continue;
                }
                let alpha: f64 = self.rows.row(j).iter().zip(&rho).map(|(a, p)| a * p).sum();
                if alpha.abs() > 1e-7 && best.is_none_or(|(_, b)| alpha.abs() > b) {
                    best = Some((j, alpha.abs()));
                }
            }
            match best {
                Some((j, _)) => {
                    let u = &self.binv * self.column(j);
                    let theta = self.xb[r] / u[r];
                    self.pivot(r, j, &u, theta);
                }
                None => self.locked[r] = true,
            }
        }
        self.refactor()
    }
}

/// Core routine: `max cᵀx s.t. A x ≤ b`, `x` free.
pub(crate) fn solve_max_free(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    tol: &Tolerances,
    settle_status: bool,
) -> SolveResult {
    let n = c.len();
    let Some(rows) = ScaledRows::new(a, b, tol.feas) else {
        return SolveResult::failed(Status::Infeasible, 0);
    };
    if n == 0 {
        return SolveResult {
            status: Status::Optimal,
            x: Some(DVector::zeros(0)),
            objective: 0.0,
            dual: Some(DVector::zeros(a.nrows())),
            iterations: 0,
        };
    }
    let mut spx = DualSimplex::new(&rows, c, tol.max_iter);
    match spx.run(true) {
        Outcome::Optimal => {}
        _ => return SolveResult::failed(Status::NumericalFailure, spx.iterations),
    }
    let cscale = c.amax();
    if spx.artificial_sum() > 1e-9 * (1.0 + cscale) {
        if !settle_status {
            return SolveResult::failed(Status::NumericalFailure, spx.iterations);
        }
        let status = feasibility_status(a, b, tol);
        let status = match status {
            Status::Optimal => Status::Unbounded,
            s => s,
        };
        return SolveResult::failed(status, spx.iterations);
    }
    if !spx.drive_out_artificials() {
        return SolveResult::failed(Status::NumericalFailure, spx.iterations);
    }
    let outcome = spx.run(false);
    let iterations = spx.iterations;
    match outcome {
        Outcome::Optimal => {}
        Outcome::DualUnbounded => return SolveResult::failed(Status::Infeasible, iterations),
        Outcome::Failure => return SolveResult::failed(Status::NumericalFailure, iterations),
    }
    let spi = spx.signed_multipliers(false);
    let x = DVector::from_vec(spi);
    let mut dual = DVector::zeros(a.nrows());
    for (i, &col) in spx.basis.iter().enumerate() {
        if col < spx.m {
            dual[rows.source[col]] = spx.xb[i] / rows.scale[col];
        }
    }
    let viol = (0..rows.len())
        .map(|j| {
            let r = rows.row(j);
            let ax: f64 = r.iter().zip(x.iter()).map(|(a, v)| a * v).sum();
            ax - rows.rhs[j]
        })
        .fold(0.0_f64, f64::max);
    let bscale = rows.rhs.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    if viol > 1e-7 * bscale {
        return SolveResult::failed(Status::NumericalFailure, iterations);
    }
    let objective = c.dot(&x);
    SolveResult {
        status: Status::Optimal,
        x: Some(x),
        objective,
        dual: Some(dual),
        iterations,
    }
}

/// Decides whether `A x ≤ b` is feasible: `Optimal` when it is,
/// `Infeasible` when not.
pub(crate) fn feasibility_status(a: &DMatrix<f64>, b: &DVector<f64>, tol: &Tolerances) -> Status {
    let (m, n) = a.shape();
    let mut fa = DMatrix::zeros(m + 1, n + 1);
    if m > 0 {
        fa.view_mut((0, 0), (m, n)).copy_from(a);
    }
    for i in 0..m {
        fa[(i, n)] = -1.0;
    }
    fa[(m, n)] = -1.0;
    let mut fb = DVector::zeros(m + 1);
    if m > 0 {
        fb.rows_mut(0, m).copy_from(b);
    }
    let mut fc = DVector::zeros(n + 1);
    fc[n] = -1.0;
    let res = solve_max_free(&fa, &fb, &fc, tol, false);
    match res.status {
        Status::Optimal => {
            let s = -res.objective;
            let bscale = b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
            if s <= tol.feas * bscale {
                Status::Optimal
            } else {
                Status::Infeasible
            }
        }
        _ => Status::NumericalFailure,
    }
}
