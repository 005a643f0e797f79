//! Dense LP and convex QP solving behind one contract.
//!
//! LPs are solved with a revised simplex applied to the dual problem, which
//! keeps the basis at `n × n` even when there are many more rows than
//! variables (the common shape here: thousands of sampled halfspaces in a
//! handful of dimensions). QPs use a Mehrotra primal-dual interior point
//! method followed by an active-set polish; statuses that the interior point
//! method cannot certify are settled with auxiliary LPs.

mod lp;
mod qp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use lp::solve_lp;
pub use qp::{kkt_residual, solve_qp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative primal feasibility tolerance.
    pub feas: f64,
    /// Relative optimality tolerance.
    pub opt: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feas: 1e-8,
            opt: 1e-8,
            max_iter: 50_000,
        }
    }
}

/// `max/min cᵀx` subject to `A x ≤ b` and optional per-coordinate bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub sense: Sense,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Lower bounds; `-inf` for free.
    pub lower: DVector<f64>,
    /// Upper bounds; `+inf` for free.
    pub upper: DVector<f64>,
    pub tol: Tolerances,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = objective.len();
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but b has length {}",
                a.nrows(),
                b.len()
            )));
        }
        if a.ncols() != n && a.nrows() > 0 {
            return Err(Error::Dimension(format!(
                "A has {} columns but objective has length {n}",
                a.ncols()
            )));
        }
        let a = if a.nrows() == 0 { DMatrix::zeros(0, n) } else { a };
        Ok(LinearProgram {
            objective,
            sense,
            a,
            b,
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
            tol: Tolerances::default(),
        })
    }

    pub fn maximize(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::new(Sense::Maximize, c, a, b)
    }

    pub fn minimize(c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::new(Sense::Minimize, c, a, b)
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let n = self.objective.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::Dimension("bound vectors must match variable count".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::InvalidInput("lower bound exceeds upper bound".into()));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Rows of `A` followed by finite bounds, as one `Ā x ≤ b̄` system.
    /// Lower bounds come first (as `−x_i ≤ −l_i`), then upper bounds.
    pub fn expanded_rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.num_vars();
        let lows: Vec<usize> = (0..n).filter(|&i| self.lower[i].is_finite()).collect();
        let ups: Vec<usize> = (0..n).filter(|&i| self.upper[i].is_finite()).collect();
        let m = self.a.nrows() + lows.len() + ups.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        let m0 = self.a.nrows();
        if m0 > 0 {
            a.view_mut((0, 0), (m0, n)).copy_from(&self.a);
            b.rows_mut(0, m0).copy_from(&self.b);
        }
        let mut r = m0;
        for &i in &lows {
            a[(r, i)] = -1.0;
            b[r] = -self.lower[i];
            r += 1;
        }
        for &i in &ups {
            a[(r, i)] = 1.0;
            b[r] = self.upper[i];
            r += 1;
        }
        (a, b)
    }
}

/// `min ½ xᵀHx + fᵀx` subject to `A x ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub tol: Tolerances,
}

impl QuadraticProgram {
    /// Validates dimensions, symmetry (1e-9) and `λ_min(H) ≥ −1e-8·‖H‖`.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = f.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::Dimension(format!("H must be {n}×{n}")));
        }
        if a.nrows() != b.len() {
            return Err(Error::Dimension("A rows must match b length".into()));
        }
        if a.nrows() > 0 && a.ncols() != n {
            return Err(Error::Dimension(format!("A must have {n} columns")));
        }
        crate::linalg::check_psd(&h, "H")?;
        let a = if a.nrows() == 0 { DMatrix::zeros(0, n) } else { a };
        Ok(QuadraticProgram {
            h,
            f,
            a,
            b,
            tol: Tolerances::default(),
        })
    }

    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self> {
        let n = f.len();
        Self::new(h, f, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn num_vars(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: Status,
    /// Present iff `status == Optimal`.
    pub x: Option<DVector<f64>>,
    pub objective: f64,
    /// Multipliers `y ≥ 0` for the inequality rows. For LPs these cover the
    /// expanded system (rows of `A`, then finite lower bounds, then finite
    /// upper bounds), in the sign convention of a maximization.
    pub dual: Option<DVector<f64>>,
    pub iterations: usize,
}

impl SolveResult {
    pub(crate) fn failed(status: Status, iterations: usize) -> Self {
        let objective = match status {
            Status::Infeasible => f64::NAN,
            Status::Unbounded => f64::INFINITY,
            _ => f64::NAN,
        };
        SolveResult {
            status,
            x: None,
            objective,
            dual: None,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Largest violation `max_i (a_iᵀx − b_i)`, clamped at zero.
pub fn max_violation(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let r = a * x - b;
    r.iter().fold(0.0_f64, |acc, v| acc.max(*v))
}
