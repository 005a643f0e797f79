use std::path::Path;
use std::time::Instant;

use probscale::smpc::{
    build_os_constraints, build_ps_constraints, estimate_cost_matrix, simulate_closed_loop, Controller,
    OnlineConstraints, OnlineKind, Trajectory, TrajectorySummary,
};
use probscale::uncertainty::{streams, SampleStream};
use serde::Serialize;

use crate::config::{self, ResolvedSmpc, SmpcConfig};
use crate::output::{write_config, write_json, write_text};
use crate::{CliError, Mode};

#[derive(Serialize)]
struct PipelineReport {
    pipeline: &'static str,
    online_kind: OnlineKind,
    online_constraints: usize,
    /// Decision variables of the online QP (`mT` plus auxiliaries).
    online_variables: usize,
    offline_build_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples_per_constraint: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    design_rows: Option<usize>,
    runs: Vec<TrajectorySummary>,
    max_violation_rate: f64,
    mean_avg_solve_time_s: f64,
}

struct Pipeline {
    name: &'static str,
    online: OnlineConstraints,
    build_time: f64,
    samples: Option<Vec<usize>>,
    gamma: Option<f64>,
    design_rows: Option<usize>,
}

fn build(res: &ResolvedSmpc, name: &'static str, seed: u64) -> Result<Pipeline, CliError> {
    let start = Instant::now();
    let mut p = match name {
        "os" => {
            let (online, rep) = build_os_constraints(&res.problem, SampleStream::new(seed).substream(streams::OFFLINE))
                .map_err(|e| e.at("offline sampling"))?;
            Pipeline {
                name,
                online,
                build_time: 0.0,
                samples: Some(rep.samples_per_constraint),
                gamma: None,
                design_rows: None,
            }
        }
        _ => {
            let out = build_ps_constraints(&res.problem, &res.ps)?;
            Pipeline {
                name,
                online: out.online,
                build_time: 0.0,
                samples: None,
                gamma: Some(out.scaled.gamma),
                design_rows: Some(out.design_rows),
            }
        }
    };
    p.build_time = start.elapsed().as_secs_f64();
    Ok(p)
}

fn scrub(mut s: TrajectorySummary, timing: bool) -> TrajectorySummary {
    if !timing {
        s.max_solve_time_s = 0.0;
        s.avg_solve_time_s = 0.0;
    }
    s
}

pub fn run(path: &Path, mode: Mode, out_flag: Option<&Path>) -> Result<(), CliError> {
    let mut cfg: SmpcConfig = config::load(path)?;
    let res = cfg.resolve()?;
    let out_dir = config::resolve_out_dir(out_flag, &cfg.execution.output_dir);
    cfg.execution.output_dir = out_dir.clone();
    let exec = cfg.execution.clone();
    let timing = exec.record_timing;

    let cost = estimate_cost_matrix(
        &res.problem,
        exec.n_cost,
        SampleStream::new(exec.seed).substream(streams::COST),
    )
    .map_err(|e| e.at("cost matrix"))?;
    let names: &[&'static str] = match mode {
        Mode::Os => &["os"],
        Mode::Ps => &["ps"],
        Mode::Bench => &["os", "ps"],
    };
    let mut reports = Vec::new();
    for &name in names {
        let pipe = build(&res, name, exec.seed)?;
        log::info!("{name}: {} online constraints", pipe.online.count());
        let ctrl = Controller {
            k: res.problem.k.clone(),
            cost: cost.clone(),
            online: pipe.online.clone(),
        };
        let mut runs = Vec::with_capacity(exec.runs);
        for r in 0..exec.runs {
            let stream = SampleStream::new(exec.seed + r as u64).substream(streams::CLOSED_LOOP);
            let traj: Trajectory = simulate_closed_loop(&res.problem, &ctrl, &res.x0, exec.steps, stream)
                .map_err(|e| e.at("closed loop"))?;
            write_text(&out_dir, &format!("{name}_run_{r:03}.csv"), &traj.to_csv(timing))?;
            runs.push(scrub(traj.summary, timing));
        }
        let max_violation_rate = runs.iter().map(|s| s.violation_rate).fold(0.0, f64::max);
        let mean_avg_solve_time_s = runs.iter().map(|s| s.avg_solve_time_s).sum::<f64>() / runs.len() as f64;
        println!(
            "{name}: {} online constraints, mean solve time {:.3e} s, max violation rate {:.4}",
            pipe.online.count(),
            mean_avg_solve_time_s,
            max_violation_rate
        );
        reports.push(PipelineReport {
            pipeline: pipe.name,
            online_kind: pipe.online.kind,
            online_constraints: pipe.online.count(),
            online_variables: pipe.online.a_v.ncols(),
            offline_build_time_s: if timing { pipe.build_time } else { 0.0 },
            samples_per_constraint: pipe.samples,
            gamma: pipe.gamma,
            design_rows: pipe.design_rows,
            runs,
            max_violation_rate,
            mean_avg_solve_time_s,
        });
    }

    if let [os, ps] = reports.as_slice() {
        let mut csv = String::from("run,t_max_os,t_avg_os,t_max_ps,t_avg_ps,violation_rate_os,violation_rate_ps\n");
        for (r, (a, b)) in os.runs.iter().zip(&ps.runs).enumerate() {
            csv.push_str(&format!(
                "{r},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                a.max_solve_time_s,
                a.avg_solve_time_s,
                b.max_solve_time_s,
                b.avg_solve_time_s,
                a.violation_rate,
                b.violation_rate
            ));
        }
        write_text(&out_dir, "bench_summary.csv", &csv)?;
        if timing && ps.mean_avg_solve_time_s > 0.0 {
            println!(
                "speed-up (avg solve time os / ps): {:.1}",
                os.mean_avg_solve_time_s / ps.mean_avg_solve_time_s
            );
        }
    }
    write_json(
        &out_dir,
        "summary.json",
        &serde_json::json!({
            "mode": format!("{mode:?}").to_lowercase(),
            "n": res.problem.n(),
            "m": res.problem.m(),
            "horizon": res.problem.horizon,
            "steps": exec.steps,
            "pipelines": reports,
        }),
    )?;
    write_config(&out_dir, &cfg)?;
    Ok(())
}
