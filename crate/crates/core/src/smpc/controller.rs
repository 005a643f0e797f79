use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{CostMatrix, OnlineConstraints, SmpcProblem};
use crate::error::{Error, Result};
use crate::optim::{self, QuadraticProgram, Status};
use crate::uncertainty::SampleStream;

/// Gain, expected cost and online inequalities of one pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub k: DMatrix<f64>,
    pub cost: CostMatrix,
    pub online: OnlineConstraints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub v: DVector<f64>,
    pub u: DVector<f64>,
    pub solve_time: f64,
    pub feasible: bool,
    pub status: Status,
}

/// Minimizes the expected cost over `v` at the measured state. On failure
/// the controller applies `v = 0`.
pub fn mpc_step(ctrl: &Controller, x: &DVector<f64>) -> Result<StepResult> {
    let (n, mt) = (ctrl.cost.n, ctrl.cost.mt);
    let aux = ctrl.online.aux;
    if x.len() != n {
        return Err(Error::Dimension(format!("state has {} entries, expected {n}", x.len())));
    }
    if ctrl.online.a_v.ncols() != mt + aux || ctrl.online.a_x.ncols() != n {
        return Err(Error::Dimension(
            "online constraints do not match the cost matrix".into(),
        ));
    }
    let start = Instant::now();
    let nv = mt + aux;
    let mut h = DMatrix::zeros(nv, nv);
    h.view_mut((0, 0), (mt, mt)).copy_from(&(ctrl.cost.s_vv() * 2.0));
    let mut f = DVector::zeros(nv);
    f.rows_mut(0, mt).copy_from(&(ctrl.cost.linear_term(x) * 2.0));
    let b = &ctrl.online.b - &ctrl.online.a_x * x;
    let qp = QuadraticProgram::new(h, f, ctrl.online.a_v.clone(), b)?;
    let res = optim::solve_qp(&qp);
    let solve_time = start.elapsed().as_secs_f64();
    let (v, feasible) = match (&res.status, res.x) {
        (Status::Optimal, Some(sol)) => (sol.rows(0, mt).into_owned(), true),
        _ => {
            log::info!("online QP returned {:?}; applying v = 0", res.status);
            (DVector::zeros(mt), false)
        }
    };
    let m = ctrl.k.nrows();
    let u = &ctrl.k * x + v.rows(0, m);
    Ok(StepResult {
        v,
        u,
        solve_time,
        feasible,
        status: res.status,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub solve_time_s: f64,
    pub feasible: bool,
    /// Some constraint row fails at `(x_k, u_k)`; only counted for `k ≥ 1`.
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub steps: usize,
    pub max_solve_time_s: f64,
    pub avg_solve_time_s: f64,
    pub infeasible_steps: usize,
    pub checked_steps: usize,
    pub violations: usize,
    pub violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub final_state: Vec<f64>,
    pub summary: TrajectorySummary,
}

impl Trajectory {
    /// `step,x0..,u0..,solve_time_s,feasible,violated`; with
    /// `timing = false` the time column is written as 0.
    pub fn to_csv(&self, timing: bool) -> String {
        let n = self.final_state.len();
        let m = self.records.first().map_or(0, |r| r.u.len());
        let mut head = vec!["step".to_string()];
        head.extend((0..n).map(|i| format!("x{i}")));
        head.extend((0..m).map(|i| format!("u{i}")));
        head.extend(["solve_time_s".into(), "feasible".into(), "violated".into()]);
        let mut out = head.join(",");
        out.push('\n');
        for r in &self.records {
            let mut fields = vec![r.step.to_string()];
            fields.extend(r.x.iter().chain(&r.u).map(|v| format!("{v:e}")));
            fields.push(format!("{:e}", if timing { r.solve_time_s } else { 0.0 }));
            fields.push(u8::from(r.feasible).to_string());
            fields.push(u8::from(r.violated).to_string());
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

fn violates(problem: &SmpcProblem, x: &DVector<f64>, u: &DVector<f64>) -> bool {
    let lhs = &problem.h_x * x + &problem.h_u * u;
    lhs.iter().any(|v| *v > 1.0)
}

/// Runs `steps` control steps from `x0`; step `k` draws its disturbance
/// from index `k` of `stream`.
pub fn simulate_closed_loop(
    problem: &SmpcProblem,
    ctrl: &Controller,
    x0: &DVector<f64>,
    steps: usize,
    stream: SampleStream,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }
    let mut x = x0.clone();
    let mut records = Vec::with_capacity(steps);
    for k in 0..steps {
        let step = mpc_step(ctrl, &x)?;
        let violated = k >= 1 && violates(problem, &x, &step.u);
        records.push(StepRecord {
            step: k,
            x: x.iter().copied().collect(),
            u: step.u.iter().copied().collect(),
            solve_time_s: step.solve_time,
            feasible: step.feasible,
            violated,
        });
        let w = problem.system.disturbance().sample(&mut stream.rng(k as u64));
        x = problem.system.step(&x, &step.u, &w);
    }
    let times: Vec<f64> = records.iter().map(|r| r.solve_time_s).collect();
    let checked = steps - 1;
    let violations = records.iter().filter(|r| r.violated).count();
    let summary = TrajectorySummary {
        steps,
        max_solve_time_s: times.iter().copied().fold(0.0, f64::max),
        avg_solve_time_s: times.iter().sum::<f64>() / steps as f64,
        infeasible_steps: records.iter().filter(|r| !r.feasible).count(),
        checked_steps: checked,
        violations,
        violation_rate: if checked == 0 {
            0.0
        } else {
            violations as f64 / checked as f64
        },
    };
    Ok(Trajectory {
        records,
        final_state: x.iter().copied().collect(),
        summary,
    })
}
