use std::path::{Path, PathBuf};

use probscale::polytope::HPolytope;
use probscale::scaling::{self, ScaledSAS, ViolationEstimate};
use probscale::uncertainty::{realize_scenarios, streams, SampleStream};
use probscale::{sas, Error};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, ScaleConfig};
use crate::output::{write_config, write_json, write_text};
use crate::CliError;

#[derive(Serialize)]
struct ViolationReport<'a> {
    epsilon: f64,
    /// `ε + 3·stderr`.
    threshold: f64,
    within_threshold: bool,
    n_points: usize,
    worst_point: Vec<f64>,
    #[serde(flatten)]
    estimate: &'a ViolationEstimate,
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    gamma: f64,
    max_violation: f64,
    stderr: f64,
    within_threshold: bool,
}

struct RunOutput {
    scaled: ScaledSAS,
    estimate: ViolationEstimate,
    points: Vec<Vec<f64>>,
}

fn run_once(cfg: &ScaleConfig, seed: u64) -> Result<RunOutput, Error> {
    let sys = cfg
        .constraint_system()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let spec = &cfg.distribution;
    let root = SampleStream::new(seed);
    let domain = match &cfg.method.domain {
        Some(b) => {
            Some(HPolytope::from_box(&b.lower.clone().into(), &b.upper.clone().into()).map_err(|e| e.at("design"))?)
        }
        None => None,
    };
    let scen = realize_scenarios(&sys, spec, root.substream(streams::DESIGN), cfg.method.n_design)
        .map_err(|e| e.at("design"))?;
    let candidate = sas::design_candidate(cfg.method.sas_kind, &scen, domain.as_ref()).map_err(|e| e.at("design"))?;
    let scaling_cfg = cfg.scaling(seed).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let scaled = scaling::probabilistic_scale(&candidate, &sys, spec, &scaling_cfg).map_err(|e| e.at("scaling"))?;
    let points = scaling::test_points(&scaled, cfg.execution.n_interior, root.substream(streams::INTERIOR))
        .map_err(|e| e.at("validation"))?;
    let estimate =
        scaling::estimate_violation(&points, &sys, spec, cfg.execution.n_test, root.substream(streams::TEST))
            .map_err(|e| e.at("validation"))?;
    Ok(RunOutput {
        scaled,
        estimate,
        points: points.iter().map(|p| p.iter().copied().collect()).collect(),
    })
}

fn write_run(dir: &Path, cfg: &ScaleConfig, out: &RunOutput) -> Result<RunSummary, CliError> {
    let est = &out.estimate;
    let threshold = cfg.method.epsilon + 3.0 * est.stderr;
    write_json(dir, "sas.json", &out.scaled)?;
    write_text(dir, "gammas.csv", &out.scaled.gammas_csv())?;
    write_json(
        dir,
        "violation_report.json",
        &ViolationReport {
            epsilon: cfg.method.epsilon,
            threshold,
            within_threshold: est.max <= threshold,
            n_points: out.points.len(),
            worst_point: out.points[est.argmax].clone(),
            estimate: est,
        },
    )?;
    write_config(dir, cfg)?;
    Ok(RunSummary {
        seed: out.scaled.seed,
        gamma: out.scaled.gamma,
        max_violation: est.max,
        stderr: est.stderr,
        within_threshold: est.max <= threshold,
    })
}

pub fn run(path: &Path, out_flag: Option<&Path>) -> Result<(), CliError> {
    let mut cfg: ScaleConfig = config::load(path)?;
    cfg.validate()?;
    let out_dir = config::resolve_out_dir(out_flag, &cfg.execution.output_dir);
    cfg.execution.output_dir = out_dir.clone();
    let repeats = cfg.execution.repeats;
    let base = cfg.execution.seed;

    let results: Vec<(PathBuf, ScaleConfig, Result<RunOutput, Error>)> = (0..repeats)
        .into_par_iter()
        .map(|i| {
            let seed = base + i as u64;
            let mut run_cfg = cfg.clone();
            run_cfg.execution.seed = seed;
            run_cfg.execution.repeats = 1;
            let dir = if repeats == 1 {
                out_dir.clone()
            } else {
                out_dir.join(format!("run_{i:03}"))
            };
            run_cfg.execution.output_dir = dir.clone();
            let res = run_once(&run_cfg, seed);
            (dir, run_cfg, res)
        })
        .collect();

    let mut summaries = Vec::with_capacity(repeats);
    for (dir, run_cfg, res) in results {
        let out = res?;
        let s = write_run(&dir, &run_cfg, &out)?;
        println!(
            "seed {:>6}  gamma {:.6}  max violation {:.4} ± {:.4}  {}",
            s.seed,
            s.gamma,
            s.max_violation,
            s.stderr,
            if s.within_threshold { "ok" } else { "above threshold" }
        );
        summaries.push(s);
    }
    if repeats > 1 {
        write_config(&out_dir, &cfg)?;
        write_json(&out_dir, "campaign.json", &serde_json::json!({ "runs": summaries }))?;
    }
    Ok(())
}
