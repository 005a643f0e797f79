//! Offline-sampling stochastic MPC for linear systems with multiplicative
//! and additive uncertainty.
//!
//! Inputs are parametrized as `u_l = K x_l + v_l`, so the decision vector of
//! the online problem is `v ∈ R^{mT}` and every chance constraint becomes a
//! random linear inequality in `ξ = [x_k; v]`. Two offline pipelines turn
//! those into deterministic inequalities:
//!
//! - OS: stack the rows of enough sampled sequences (learning bound).
//! - PS: design a simple set from a few sequences and scale it
//!   probabilistically, which keeps the online row count independent of the
//!   sample sizes.

mod controller;
mod lqr;
mod prediction;
mod system;

pub use controller::{
    mpc_step, simulate_closed_loop, Controller, StepRecord, StepResult, Trajectory, TrajectorySummary,
};
pub use lqr::{discrete_lyapunov, riccati_residual, spectral_radius, synthesize_prestabilizer, Lqr, RICCATI_TOL};
pub use prediction::{build_prediction, PredictionOperators};
pub use system::{split_sequence, ChainOfIntegrators, SystemJson, UncertainLtiSystem};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::polytope::{self, HPolytope};
use crate::sas::{self, Candidate, SasKind};
use crate::scaling::{self, learning_sample_size, ScaledSAS, ScalingConfig};
use crate::uncertainty::{self, streams, DistributionSpec, SampleStream, Scenario, UncertainConstraintSystem};

/// Lower bound on Monte Carlo samples for the cost matrix.
pub const MIN_COST_SAMPLES: usize = 1000;
/// Half-width of the default operating box on `(x_k, v)`.
pub const DEFAULT_OPERATING_BOX: f64 = 10.0;
const SUM_CHUNK: usize = 64;

/// Constraint data `H_x x_l + H_u u_l ≤ 1` with one violation level per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SmpcProblem {
    pub system: UncertainLtiSystem,
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p_term: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub h_x: DMatrix<f64>,
    pub h_u: DMatrix<f64>,
    pub eps: Vec<f64>,
    pub delta: f64,
}

impl SmpcProblem {
    /// Gain and terminal weight from the nominal LQR. A single entry in
    /// `eps` applies to every constraint row.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        system: UncertainLtiSystem,
        horizon: usize,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        h_x: DMatrix<f64>,
        h_u: DMatrix<f64>,
        eps: Vec<f64>,
        delta: f64,
    ) -> Result<Self> {
        let lqr = synthesize_prestabilizer(system.a0(), system.b0(), &q, &r)?;
        Self::with_gain(system, horizon, q, r, lqr.p, lqr.k, h_x, h_u, eps, delta)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_gain(
        system: UncertainLtiSystem,
        horizon: usize,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p_term: DMatrix<f64>,
        k: DMatrix<f64>,
        h_x: DMatrix<f64>,
        h_u: DMatrix<f64>,
        eps: Vec<f64>,
        delta: f64,
    ) -> Result<Self> {
        let (n, m) = (system.n(), system.m());
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        if q.shape() != (n, n) || r.shape() != (m, m) || p_term.shape() != (n, n) || k.shape() != (m, n) {
            return Err(Error::Dimension("weights or gain do not match the system".into()));
        }
        for (mat, name) in [(&q, "Q"), (&r, "R"), (&p_term, "terminal P")] {
            linalg::check_psd(mat, name)?;
            if mat.clone().cholesky().is_none() {
                return Err(Error::InvalidInput(format!("{name} must be positive definite")));
            }
        }
        let p = h_x.nrows();
        if h_x.ncols() != n || h_u.shape() != (p, m) {
            return Err(Error::Dimension(format!("H_x must be p×{n} and H_u p×{m}")));
        }
        let eps = match eps.len() {
            1 => vec![eps[0]; p],
            l if l == p => eps,
            l => return Err(Error::Dimension(format!("{l} violation levels for {p} constraints"))),
        };
        if eps
            .iter()
            .chain(std::iter::once(&delta))
            .any(|v| !(*v > 0.0 && *v < 1.0))
        {
            return Err(Error::InvalidInput(
                "violation and confidence levels must lie in (0, 1)".into(),
            ));
        }
        Ok(SmpcProblem {
            system,
            horizon,
            q,
            r,
            p_term,
            k,
            h_x,
            h_u,
            eps,
            delta,
        })
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn m(&self) -> usize {
        self.system.m()
    }

    /// Number of constraint rows `p`.
    pub fn p(&self) -> usize {
        self.h_x.nrows()
    }

    /// `n + mT`.
    pub fn xi_dim(&self) -> usize {
        self.n() + self.m() * self.horizon
    }

    pub fn sequence_spec(&self) -> Result<DistributionSpec> {
        self.system.sequence_spec(self.horizon)
    }

    pub fn predict(&self, q: &DVector<f64>) -> Result<PredictionOperators> {
        let ws = split_sequence(q, self.system.n_w());
        if ws.len() != self.horizon {
            return Err(Error::Dimension(format!(
                "sequence covers {} steps, horizon is {}",
                ws.len(),
                self.horizon
            )));
        }
        build_prediction(&self.system, &self.k, &ws)
    }

    fn has_state_part(&self, j: usize) -> bool {
        self.h_x.row(j).iter().any(|v| *v != 0.0)
    }

    /// Stages constrained by row `j`: `1..=T` when it involves the state,
    /// `0..T` for pure input rows.
    pub fn stages(&self, j: usize) -> std::ops::Range<usize> {
        if self.has_state_part(j) {
            1..self.horizon + 1
        } else {
            0..self.horizon
        }
    }

    /// Row `f`, rhs `1 − c` with `fᵀ[x_k; v] ≤ 1 − c` equivalent to
    /// `[H_x]ⱼ x_l + [H_u]ⱼ u_l ≤ 1` along `pred`.
    pub fn constraint_row(&self, pred: &PredictionOperators, l: usize, j: usize) -> Result<(DVector<f64>, f64)> {
        if j >= self.p() || l > self.horizon {
            return Err(Error::InvalidInput(format!(
                "constraint index (l = {l}, j = {j}) out of range"
            )));
        }
        let hx = self.h_x.row(j);
        let hu = self.h_u.row(j);
        let c = hx * pred.state_map(l) + hu * pred.input_map(&self.k, l);
        let nxi = self.xi_dim();
        Ok((c.columns(0, nxi).transpose(), 1.0 - c[nxi]))
    }

    /// All stage rows of constraint `j` (or every constraint) along `pred`.
    pub fn scenario(&self, pred: &PredictionOperators, only: Option<usize>) -> Result<Scenario> {
        let js: Vec<usize> = match only {
            Some(j) => vec![j],
            None => (0..self.p()).collect(),
        };
        let mut rows = Vec::new();
        for j in js {
            for l in self.stages(j) {
                rows.push(self.constraint_row(pred, l, j)?);
            }
        }
        let nxi = self.xi_dim();
        let f = DMatrix::from_fn(rows.len(), nxi, |r, c| rows[r].0[c]);
        let g = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        Ok(Scenario { f, g })
    }

    /// The joint chance constraint as an uncertain system in `ξ = [x_k; v]`
    /// driven by the stacked disturbance sequence.
    pub fn constraint_system(&self) -> UncertainConstraintSystem {
        let me = Arc::new(self.clone());
        let rows = self.p() * self.horizon;
        let nxi = self.xi_dim();
        UncertainConstraintSystem::callback(
            nxi,
            rows,
            Arc::new(move |q: &DVector<f64>| {
                me.predict(q)
                    .and_then(|p| me.scenario(&p, None))
                    .unwrap_or_else(|_| Scenario {
                        f: DMatrix::zeros(0, nxi),
                        g: DVector::zeros(0),
                    })
            }),
        )
    }

    /// `[x; v; 1]ᵀ S [x; v; 1]` equals the realized cost along `pred`.
    pub fn cost_form(&self, pred: &PredictionOperators) -> DMatrix<f64> {
        let z = pred.z_dim();
        let mut s = DMatrix::zeros(z, z);
        for l in 0..self.horizon {
            let x = pred.state_map(l);
            let u = pred.input_map(&self.k, l);
            s += x.transpose() * &self.q * &x + u.transpose() * &self.r * &u;
        }
        let xt = pred.state_map(self.horizon);
        s += xt.transpose() * &self.p_term * &xt;
        (&s + s.transpose()) * 0.5
    }
}

/// Expected cost in the block form over `Z = [x_k; v; 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub s: DMatrix<f64>,
    pub n: usize,
    pub mt: usize,
}

impl CostMatrix {
    pub fn s_vv(&self) -> DMatrix<f64> {
        self.s.view((self.n, self.n), (self.mt, self.mt)).into_owned()
    }

    /// Gradient offset `S_vx x + S_v1`.
    pub fn linear_term(&self, x: &DVector<f64>) -> DVector<f64> {
        let (n, mt) = (self.n, self.mt);
        self.s.view((n, 0), (mt, n)) * x + self.s.view((n, n + mt), (mt, 1))
    }

    pub fn value(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let z = DVector::from_iterator(
            self.n + self.mt + 1,
            x.iter().chain(v.iter()).copied().chain(std::iter::once(1.0)),
        );
        z.dot(&(&self.s * &z))
    }
}

/// Sample average of the realized cost form over `n_cost` sequences.
pub fn estimate_cost_matrix(problem: &SmpcProblem, n_cost: usize, stream: SampleStream) -> Result<CostMatrix> {
    if n_cost < MIN_COST_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_COST_SAMPLES} cost samples, got {n_cost}"
        )));
    }
    let spec = problem.sequence_spec()?;
    let z = problem.xi_dim() + 1;
    // Fixed chunking keeps the floating-point summation order independent
    // of the thread schedule.
    let chunks: Vec<usize> = (0..n_cost).step_by(SUM_CHUNK).collect();
    let partial = chunks
        .par_iter()
        .map(|&start| {
            let mut acc = DMatrix::zeros(z, z);
            for i in start..(start + SUM_CHUNK).min(n_cost) {
                let q = spec.sample(&mut stream.rng(i as u64));
                acc += problem.cost_form(&problem.predict(&q)?);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<DMatrix<f64>>>>()?;
    let mut s = DMatrix::zeros(z, z);
    for p in partial {
        s += p;
    }
    s /= n_cost as f64;
    Ok(CostMatrix {
        s,
        n: problem.n(),
        mt: problem.m() * problem.horizon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnlineKind {
    None,
    Offline,
    L1Lifted,
    Linf,
    SampledPoly,
}

/// `A_x x_k + A_v [v; ζ] ≤ b`, with `aux` auxiliary variables `ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConstraints {
    pub a_x: DMatrix<f64>,
    pub a_v: DMatrix<f64>,
    pub b: DVector<f64>,
    pub aux: usize,
    pub kind: OnlineKind,
}

impl OnlineConstraints {
    pub fn none(n: usize, mt: usize) -> Self {
        OnlineConstraints {
            a_x: DMatrix::zeros(0, n),
            a_v: DMatrix::zeros(0, mt),
            b: DVector::zeros(0),
            aux: 0,
            kind: OnlineKind::None,
        }
    }

    /// Splits rows over `[ξ; ζ]` at column `n`.
    pub fn from_rows(a: &DMatrix<f64>, b: DVector<f64>, n: usize, aux: usize, kind: OnlineKind) -> Self {
        let cols = a.ncols();
        OnlineConstraints {
            a_x: a.columns(0, n).into_owned(),
            a_v: a.columns(n, cols - n).into_owned(),
            b,
            aux,
            kind,
        }
    }

    pub fn count(&self) -> usize {
        self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsReport {
    /// Sequences drawn per constraint row.
    pub samples_per_constraint: Vec<usize>,
    pub rows: usize,
}

/// Stacks, for each constraint `j`, its stage rows over `N_LT^j` sampled
/// sequences.
pub fn build_os_constraints(problem: &SmpcProblem, stream: SampleStream) -> Result<(OnlineConstraints, OsReport)> {
    let nxi = problem.xi_dim();
    let spec = problem.sequence_spec()?;
    let mut blocks = Vec::new();
    let mut samples = Vec::new();
    for j in 0..problem.p() {
        let count = learning_sample_size(nxi, problem.eps[j], problem.delta, 1)?;
        samples.push(count);
        let sub = stream.substream(j as u64);
        let part = (0..count as u64)
            .into_par_iter()
            .map(|i| {
                let q = spec.sample(&mut sub.rng(i));
                problem.scenario(&problem.predict(&q)?, Some(j))
            })
            .collect::<Result<Vec<Scenario>>>()?;
        blocks.extend(part);
    }
    let total: usize = blocks.iter().map(|s| s.rows()).sum();
    let mut a = DMatrix::zeros(total, nxi);
    let mut b = DVector::zeros(total);
    let mut r = 0;
    for s in &blocks {
        let k = s.rows();
        a.view_mut((r, 0), (k, nxi)).copy_from(&s.f);
        b.rows_mut(r, k).copy_from(&s.g);
        r += k;
    }
    log::debug!("OS constraint set: {total} rows from {samples:?} sequences");
    Ok((
        OnlineConstraints::from_rows(&a, b, problem.n(), 0, OnlineKind::Offline),
        OsReport {
            samples_per_constraint: samples,
            rows: total,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsConfig {
    pub sas: SasKind,
    /// Sequences used for the design polytope (or the sampled set).
    pub n_design: usize,
    /// Operating box on `(x_k, v)` intersected with the design polytope.
    pub box_lower: Vec<f64>,
    pub box_upper: Vec<f64>,
    pub scaling: ScalingConfig,
}

impl PsConfig {
    /// `±DEFAULT_OPERATING_BOX` on every coordinate.
    pub fn with_default_box(problem: &SmpcProblem, sas: SasKind, n_design: usize, scaling: ScalingConfig) -> Self {
        let d = problem.xi_dim();
        PsConfig {
            sas,
            n_design,
            box_lower: vec![-DEFAULT_OPERATING_BOX; d],
            box_upper: vec![DEFAULT_OPERATING_BOX; d],
            scaling,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsOutcome {
    pub online: OnlineConstraints,
    pub scaled: ScaledSAS,
    /// Scenario rows of the design polytope, excluding the operating box.
    pub design_rows: usize,
}

/// Online inequalities of a scaled set in `ξ = [x_k; v]`.
pub fn online_from_scaled(scaled: &ScaledSAS, n: usize) -> Result<OnlineConstraints> {
    let d = scaled.dim();
    match &scaled.candidate {
        Candidate::Norm(s) => {
            let set = s.scaled(scaled.gamma)?;
            match s.norm() {
                sas::Norm::L1 => {
                    let (a, b) = set.lift_l1()?.inequalities();
                    Ok(OnlineConstraints::from_rows(&a, b, n, d, OnlineKind::L1Lifted))
                }
                sas::Norm::Linf => {
                    let h = set.hrep_linf()?;
                    Ok(OnlineConstraints::from_rows(
                        h.a(),
                        h.b().clone(),
                        n,
                        0,
                        OnlineKind::Linf,
                    ))
                }
            }
        }
        Candidate::Sampled(s) => {
            let h = polytope::scale_about(&s.poly, scaled.gamma)?;
            Ok(OnlineConstraints::from_rows(
                h.a(),
                h.b().clone(),
                n,
                0,
                OnlineKind::SampledPoly,
            ))
        }
    }
}

/// Design from `n_design` sequences, scale with fresh draws, emit the
/// online inequalities.
pub fn build_ps_constraints(problem: &SmpcProblem, cfg: &PsConfig) -> Result<PsOutcome> {
    let nxi = problem.xi_dim();
    if cfg.box_lower.len() != nxi || cfg.box_upper.len() != nxi {
        return Err(Error::Dimension(format!(
            "operating box must have {nxi} entries per bound"
        )));
    }
    let sys = problem.constraint_system();
    let spec = problem.sequence_spec()?;
    let root = SampleStream::new(cfg.scaling.seed);
    let domain = HPolytope::from_box(
        &DVector::from_column_slice(&cfg.box_lower),
        &DVector::from_column_slice(&cfg.box_upper),
    )
    .map_err(|e| e.at("design"))?;
    let scen = uncertainty::realize_scenarios(&sys, &spec, root.substream(streams::DESIGN), cfg.n_design)
        .map_err(|e| e.at("design"))?;
    let design_rows = scen.scenarios.iter().map(|s| s.rows()).sum();
    let candidate = sas::design_candidate(cfg.sas, &scen, Some(&domain)).map_err(|e| e.at("design"))?;
    let scaled = scaling::probabilistic_scale(&candidate, &sys, &spec, &cfg.scaling).map_err(|e| e.at("scaling"))?;
    let online = online_from_scaled(&scaled, problem.n()).map_err(|e| e.at("online"))?;
    log::debug!(
        "PS constraint set: {} online rows, gamma = {}, design rows = {design_rows}",
        online.count(),
        scaled.gamma
    );
    Ok(PsOutcome {
        online,
        scaled,
        design_rows,
    })
}

/// Chain-of-integrators benchmark with a normalized bound on the last
/// state (`x_n ≤ bound`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Benchmark {
    pub chain: ChainOfIntegrators,
    pub horizon: usize,
    pub q_weight: f64,
    pub r_weight: f64,
    pub bound: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub x0: Vec<f64>,
    /// Operating box on `x_k` used by the PS design.
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    /// Half-width of the operating box on each `v` entry.
    pub input_box: f64,
}

impl Default for Benchmark {
    fn default() -> Self {
        Benchmark {
            chain: ChainOfIntegrators::default(),
            horizon: 8,
            q_weight: 1.0,
            r_weight: 1.0,
            bound: 1.0,
            epsilon: 0.05,
            delta: 1e-6,
            x0: vec![-4.0, 0.0],
            state_lower: vec![-5.0, -1.5],
            state_upper: vec![1.0, 1.5],
            input_box: 3.0,
        }
    }
}

impl Benchmark {
    pub fn problem(&self) -> Result<SmpcProblem> {
        let sys = self.chain.build()?;
        let n = sys.n();
        if !(self.bound > 0.0) {
            return Err(Error::InvalidInput("bound must be positive".into()));
        }
        let mut h_x = DMatrix::zeros(1, n);
        h_x[(0, n - 1)] = 1.0 / self.bound;
        SmpcProblem::new(
            sys,
            self.horizon,
            DMatrix::identity(n, n) * self.q_weight,
            DMatrix::identity(1, 1) * self.r_weight,
            h_x,
            DMatrix::zeros(1, 1),
            vec![self.epsilon],
            self.delta,
        )
    }

    /// PS settings with this benchmark's operating box.
    pub fn ps_config(&self, sas: SasKind, n_design: usize, scaling: ScalingConfig) -> Result<PsConfig> {
        let n = self.chain.n;
        if self.state_lower.len() != n || self.state_upper.len() != n {
            return Err(Error::Dimension(format!("state box needs {n} entries per bound")));
        }
        let mt = self.horizon;
        let mut box_lower = self.state_lower.clone();
        let mut box_upper = self.state_upper.clone();
        box_lower.extend(std::iter::repeat_n(-self.input_box, mt));
        box_upper.extend(std::iter::repeat_n(self.input_box, mt));
        Ok(PsConfig {
            sas,
            n_design,
            box_lower,
            box_upper,
            scaling,
        })
    }

    pub fn initial_state(&self) -> Result<DVector<f64>> {
        if self.x0.len() != self.chain.n {
            return Err(Error::Dimension(format!("x0 needs {} entries", self.chain.n)));
        }
        Ok(DVector::from_column_slice(&self.x0))
    }
}
