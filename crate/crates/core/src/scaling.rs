//! Probabilistic scaling of a candidate set, sample-size bounds, and
//! empirical violation estimates.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::{self, Support};
use crate::sas::{Candidate, NormSAS};
use crate::uncertainty::{streams, DistributionSpec, SampleStream, Scenario, UncertainConstraintSystem};

/// `(1 + √3)²`.
pub const EXACT_CONSTANT: f64 = 7.464_101_615_137_754;
pub const CONSERVATIVE_CONSTANT: f64 = 7.67;
/// Samples used to check the center against the chance constraint.
pub const PRECHECK_SAMPLES: usize = 10_000;
/// Upper end of the level range accepted by the learning bound.
pub const LEARNING_EPS_MAX: f64 = 0.14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantMode {
    #[default]
    Exact,
    Conservative,
}

impl ConstantMode {
    pub fn value(self) -> f64 {
        match self {
            ConstantMode::Exact => EXACT_CONSTANT,
            ConstantMode::Conservative => CONSERVATIVE_CONSTANT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub constant_mode: ConstantMode,
    #[serde(default)]
    pub seed: u64,
}

impl ScalingConfig {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let cfg = ScalingConfig {
            epsilon,
            delta,
            constant_mode: ConstantMode::Exact,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_constant_mode(mut self, mode: ConstantMode) -> Self {
        self.constant_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_level("epsilon", self.epsilon)?;
        check_level("delta", self.delta)
    }
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// `⌈(C/ε) ln(1/δ)⌉`, at least 1.
pub fn scaling_sample_size(epsilon: f64, delta: f64, mode: ConstantMode) -> usize {
    let n = (mode.value() / epsilon * (1.0 / delta).ln()).ceil();
    if n.is_finite() && n >= 1.0 {
        n as usize
    } else {
        1
    }
}

/// `⌈ε N / 2⌉`, at least 1.
pub fn discard_index(epsilon: f64, n_gamma: usize) -> usize {
    ((epsilon * n_gamma as f64 / 2.0).ceil() as usize).max(1)
}

/// `N ≥ (1/ε)(r − 1 + ln(1/δ) + √(2(r − 1) ln(1/δ)))`.
pub fn validate_sample_size(n: usize, r: usize, epsilon: f64, delta: f64) -> bool {
    let r1 = r.saturating_sub(1) as f64;
    let l = (1.0 / delta).ln();
    n as f64 >= (r1 + l + (2.0 * r1 * l).sqrt()) / epsilon
}

/// `⌈(4.1/ε)(ln(21.64/δ) + 4.39 n_ξ log₂(8ep/ε))⌉`.
pub fn learning_sample_size(n_xi: usize, epsilon: f64, delta: f64, p: usize) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < LEARNING_EPS_MAX) {
        return Err(Error::InvalidInput(format!(
            "learning bound needs epsilon in (0, {LEARNING_EPS_MAX}), got {epsilon}"
        )));
    }
    check_level("delta", delta)?;
    if p == 0 {
        return Err(Error::InvalidInput("p must be at least 1".into()));
    }
    let e = std::f64::consts::E;
    let v = 4.1 / epsilon * ((21.64 / delta).ln() + 4.39 * n_xi as f64 * (8.0 * e * p as f64 / epsilon).log2());
    Ok(v.ceil() as usize)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Largest `γ` with `x_c ⊕ γS ⊆ {ξ : Fξ ≤ g}`. May be `+∞` or `≤ 0`.
pub fn gamma_for_scenario(candidate: &Candidate, scenario: &Scenario) -> Result<f64> {
    let n = candidate.dim();
    if scenario.f.ncols() != n {
        return Err(Error::Dimension(format!(
            "scenario has {} columns, candidate dimension is {n}",
            scenario.f.ncols()
        )));
    }
    let xc = candidate.center();
    let mut gamma = f64::INFINITY;
    for j in 0..scenario.rows() {
        let f = scenario.f.row(j).transpose();
        let slack = scenario.g[j] - f.dot(xc);
        let g = match candidate {
            Candidate::Norm(s) => ratio(slack, s.radius_along(&f)),
            Candidate::Sampled(s) => match s.poly.poly.support(&f)? {
                Support::Bounded(h) => ratio(slack, h - f.dot(xc)),
                // Any positive scaling leaves the halfspace.
                Support::Unbounded => {
                    if slack >= 0.0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                }
            },
        };
        gamma = gamma.min(g);
    }
    Ok(gamma)
}

/// The `r`-th smallest entry (1-based) under the total order with `+∞` last.
pub fn select_rth(gammas: &[f64], r: usize) -> Result<f64> {
    if r == 0 || r > gammas.len() {
        return Err(Error::InvalidInput(format!(
            "index r = {r} outside 1..={}",
            gammas.len()
        )));
    }
    if gammas.iter().any(|g| g.is_nan()) {
        return Err(Error::InvalidInput("NaN scaling factor".into()));
    }
    let mut sorted = gammas.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[r - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDiagnostics {
    pub n_gamma: usize,
    pub r: usize,
    /// `⌊ε N_γ⌋`, the discard count sometimes quoted in place of `r`.
    pub floor_eps_n: usize,
    pub gamma_min: f64,
    pub gamma_median: f64,
    pub gamma_max: f64,
    pub nonpositive: usize,
    pub infinite: usize,
    /// Empirical violation probability at the center, if checked.
    pub center_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSAS {
    pub candidate: Candidate,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub constant_mode: ConstantMode,
    pub seed: u64,
    pub diagnostics: ScalingDiagnostics,
    /// All `γᵢ` in draw order.
    #[serde(skip)]
    pub gammas: Vec<f64>,
}

impl ScaledSAS {
    pub fn dim(&self) -> usize {
        self.candidate.dim()
    }

    pub fn contains(&self, xi: &DVector<f64>) -> Result<bool> {
        self.candidate.scaled_contains(self.gamma, xi)
    }

    /// The scaled norm set, if the candidate is one.
    pub fn norm_set(&self) -> Option<Result<NormSAS>> {
        match &self.candidate {
            Candidate::Norm(s) => Some(s.scaled(self.gamma)),
            Candidate::Sampled(_) => None,
        }
    }

    /// `index,gamma` rows in draw order.
    pub fn gammas_csv(&self) -> String {
        let mut out = String::from("index,gamma\n");
        for (i, g) in self.gammas.iter().enumerate() {
            out.push_str(&format!("{i},{g:e}\n"));
        }
        out
    }
}

/// Fraction of `samples` scenarios violated at `xi`, drawn from `stream`.
pub fn point_violation(
    sys: &UncertainConstraintSystem,
    spec: &DistributionSpec,
    xi: &DVector<f64>,
    samples: usize,
    stream: SampleStream,
) -> Result<f64> {
    let bad = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            Ok(usize::from(
                !sys.realize(&spec.sample(&mut stream.rng(i)))?.is_satisfied(xi),
            ))
        })
        .sum::<Result<usize>>()?;
    Ok(bad as f64 / samples as f64)
}

/// Algorithm of record: draw `N_γ` scenarios, compute each `γᵢ`, return the
/// `r`-th smallest.
pub fn probabilistic_scale(
    candidate: &Candidate,
    sys: &UncertainConstraintSystem,
    spec: &DistributionSpec,
    cfg: &ScalingConfig,
) -> Result<ScaledSAS> {
    cfg.validate()?;
    if sys.dim() != candidate.dim() {
        return Err(Error::Dimension(format!(
            "constraint system acts on R^{}, candidate lives in R^{}",
            sys.dim(),
            candidate.dim()
        )));
    }
    let root = SampleStream::new(cfg.seed);
    let center_violation = point_violation(
        sys,
        spec,
        candidate.center(),
        PRECHECK_SAMPLES,
        root.substream(streams::PRECHECK),
    )?;
    if center_violation > cfg.epsilon {
        log::warn!(
            "center violates the constraints with empirical probability {center_violation:.4} > epsilon = {}",
            cfg.epsilon
        );
    }

    let n_gamma = scaling_sample_size(cfg.epsilon, cfg.delta, cfg.constant_mode);
    let r = discard_index(cfg.epsilon, n_gamma);
    let stream = root.substream(streams::SCALING);
    let gammas = (0..n_gamma as u64)
        .into_par_iter()
        .map(|i| {
            let sc = sys.realize(&spec.sample(&mut stream.rng(i)))?;
            gamma_for_scenario(candidate, &sc)
        })
        .collect::<Result<Vec<f64>>>()?;
    scale_from_gammas(candidate, gammas, r, cfg, Some(center_violation))
}

/// Selection and diagnostics on a precomputed `γ` list.
pub fn scale_from_gammas(
    candidate: &Candidate,
    gammas: Vec<f64>,
    r: usize,
    cfg: &ScalingConfig,
    center_violation: Option<f64>,
) -> Result<ScaledSAS> {
    let gamma = select_rth(&gammas, r)?;
    let mut sorted = gammas.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let diagnostics = ScalingDiagnostics {
        n_gamma: n,
        r,
        floor_eps_n: (cfg.epsilon * n as f64).floor() as usize,
        gamma_min: sorted[0],
        gamma_median: sorted[(n - 1) / 2],
        gamma_max: sorted[n - 1],
        nonpositive: sorted.iter().filter(|g| **g <= 0.0).count(),
        infinite: sorted.iter().filter(|g| g.is_infinite() && **g > 0.0).count(),
        center_violation,
    };
    log::debug!(
        "scaling: N = {n}, r = {r} (floor(eps N) = {}), gamma = {gamma}",
        diagnostics.floor_eps_n
    );
    if gamma <= 0.0 {
        return Err(Error::Scaling(format!(
            "selected scaling factor {gamma} is not positive: the center violates too many scenarios \
             ({} of {n}); the center is likely outside the chance-constrained set",
            diagnostics.nonpositive
        )));
    }
    if !gamma.is_finite() {
        log::warn!("selected scaling factor is infinite: fewer than {r} scenarios constrain the set");
    }
    Ok(ScaledSAS {
        candidate: candidate.clone(),
        gamma,
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        constant_mode: cfg.constant_mode,
        seed: cfg.seed,
        diagnostics,
        gammas,
    })
}

/// Vertices of the scaled set (norm sets only) followed by `interior`
/// uniform samples.
pub fn test_points(scaled: &ScaledSAS, interior: usize, stream: SampleStream) -> Result<Vec<DVector<f64>>> {
    if !scaled.gamma.is_finite() {
        return Err(Error::Unbounded("scaled set is unbounded".into()));
    }
    match &scaled.candidate {
        Candidate::Norm(s) => {
            let set = s.scaled(scaled.gamma)?;
            let mut pts = set.vertices()?;
            pts.extend((0..interior as u64).map(|i| set.sample_interior(&mut stream.rng(i))));
            Ok(pts)
        }
        Candidate::Sampled(s) => {
            let poly = polytope::scale_about(&s.poly, scaled.gamma)?;
            let (lo, hi) = poly.bounding_box()?;
            let mut pts = Vec::with_capacity(interior + 1);
            pts.push(s.poly.center.clone());
            let n = lo.len();
            let budget = 1000 * interior.max(1) as u64;
            let mut i = 0;
            while pts.len() < interior + 1 && i < budget {
                let mut rng = stream.rng(i);
                let x = DVector::from_iterator(n, (0..n).map(|k| lo[k] + (hi[k] - lo[k]) * rng.random::<f64>()));
                if poly.contains(&x, 0.0) {
                    pts.push(x);
                }
                i += 1;
            }
            if pts.len() < interior + 1 {
                log::warn!(
                    "rejection sampling produced {} of {interior} interior points",
                    pts.len() - 1
                );
            }
            Ok(pts)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEstimate {
    /// Largest per-point violation frequency.
    pub max: f64,
    /// Binomial standard error at `max`.
    pub stderr: f64,
    pub argmax: usize,
    pub n_test: usize,
    pub per_point: Vec<f64>,
}

/// Violation frequency of every point over the same `n_test` draws.
pub fn estimate_violation(
    points: &[DVector<f64>],
    sys: &UncertainConstraintSystem,
    spec: &DistributionSpec,
    n_test: usize,
    stream: SampleStream,
) -> Result<ViolationEstimate> {
    if n_test < 1000 {
        return Err(Error::InvalidInput(format!(
            "need at least 1000 test draws, got {n_test}"
        )));
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("no test points".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != sys.dim()) {
        return Err(Error::Dimension(format!(
            "test point has {} entries, expected {}",
            p.len(),
            sys.dim()
        )));
    }
    let counts = (0..n_test as u64)
        .into_par_iter()
        .map(|i| {
            let sc = sys.realize(&spec.sample(&mut stream.rng(i)))?;
            Ok(points
                .iter()
                .map(|x| u32::from(!sc.is_satisfied(x)))
                .collect::<Vec<u32>>())
        })
        .try_reduce(
            || vec![0u32; points.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let per_point: Vec<f64> = counts.iter().map(|c| *c as f64 / n_test as f64).collect();
    let (argmax, max) =
        per_point.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    Ok(ViolationEstimate {
        max,
        stderr: (max * (1.0 - max) / n_test as f64).sqrt(),
        argmax,
        n_test,
        per_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sas::Norm;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn cube(center: DVector<f64>) -> Candidate {
        Candidate::Norm(
            NormSAS::new(
                center.clone(),
                DMatrix::identity(center.len(), center.len()),
                Norm::Linf,
            )
            .unwrap(),
        )
    }

    fn halfspace(f: Vec<f64>, g: f64) -> Scenario {
        let n = f.len();
        Scenario {
            f: DMatrix::from_row_slice(1, n, &f),
            g: dvector![g],
        }
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(scaling_sample_size(0.05, 1e-6, ConstantMode::Exact), 2063);
        assert_eq!(scaling_sample_size(0.05, 1e-6, ConstantMode::Conservative), 2120);
        assert_eq!(scaling_sample_size(0.5, 1.0, ConstantMode::Exact), 1);
        assert_eq!(discard_index(0.1, 100), 5);
        assert_eq!(discard_index(0.05, 40), 1);
        assert_eq!(discard_index(0.05, 2063), 52);
        assert!(validate_sample_size(277, 1, 0.05, 1e-6));
        assert!(!validate_sample_size(276, 1, 0.05, 1e-6));
        assert!(validate_sample_size(0, 1, 0.05, 1.0));
        assert!(validate_sample_size(2063, 52, 0.05, 1e-6));
    }

    #[test]
    fn learning_bound() {
        assert_eq!(learning_sample_size(1, 0.05, 1e-6, 1).unwrap(), 4541);
        assert_eq!(learning_sample_size(25, 0.05, 1e-6, 1).unwrap(), 80_263);
        assert!(learning_sample_size(25, 0.2, 1e-6, 1).is_err());
        assert!(learning_sample_size(25, 0.14, 1e-6, 1).is_err());
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(
            gamma_for_scenario(&cube(dvector![0.0, 0.0]), &halfspace(vec![1.0, 0.0], 2.0)).unwrap(),
            2.0
        );
        assert_eq!(
            gamma_for_scenario(&cube(dvector![1.0, 0.0]), &halfspace(vec![1.0, 0.0], 2.0)).unwrap(),
            1.0
        );
        assert_eq!(
            gamma_for_scenario(&cube(dvector![0.0, 0.0]), &halfspace(vec![1.0, 0.0], -1.0)).unwrap(),
            -1.0
        );
        assert_eq!(
            gamma_for_scenario(&cube(dvector![0.0, 0.0]), &halfspace(vec![0.0, 0.0], 1.0)).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn selection_semantics() {
        let g = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(select_rth(&g, 2).unwrap(), 2.0);
        assert_eq!(select_rth(&[f64::INFINITY, 1.0, -2.0], 3).unwrap(), f64::INFINITY);
        assert!(select_rth(&g, 0).is_err());
        assert!(select_rth(&g, 6).is_err());
    }

    #[test]
    fn nonpositive_selection_errors() {
        let cfg = ScalingConfig::new(0.1, 0.01).unwrap();
        let c = cube(dvector![0.0]);
        let err = scale_from_gammas(&c, vec![-1.0, -0.5, 2.0], 2, &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Scaling(_)));
        let ok = scale_from_gammas(&c, vec![-1.0, 0.5, 2.0], 2, &cfg, None).unwrap();
        assert_eq!(ok.gamma, 0.5);
        assert_eq!(ok.diagnostics.nonpositive, 1);
    }

    #[test]
    fn zero_variance_scaling() {
        let spec = DistributionSpec::uniform_box(vec![0.0], vec![0.0]).unwrap();
        let sys = UncertainConstraintSystem::affine(dmatrix![1.0, 0.0; 0.0, 1.0], vec![], dvector![3.0, 3.0], vec![])
            .unwrap();
        let cfg = ScalingConfig::new(0.1, 1e-3).unwrap().with_seed(4);
        let s = probabilistic_scale(&cube(dvector![0.0, 0.0]), &sys, &spec, &cfg).unwrap();
        assert_eq!(s.gamma, 3.0);
        assert_eq!(s.diagnostics.center_violation, Some(0.0));
        assert_eq!(s.gammas.len(), s.diagnostics.n_gamma);
    }

    #[test]
    fn deterministic_violation_zero() {
        let spec = DistributionSpec::uniform_box(vec![0.0], vec![0.0]).unwrap();
        let sys = UncertainConstraintSystem::affine(dmatrix![1.0, 0.0], vec![], dvector![1.0], vec![]).unwrap();
        let pts = vec![dvector![0.0, 0.0], dvector![1.0, 5.0]];
        let est = estimate_violation(&pts, &sys, &spec, 1000, SampleStream::new(1)).unwrap();
        assert_eq!(est.max, 0.0);
        assert!(estimate_violation(&pts, &sys, &spec, 999, SampleStream::new(1)).is_err());
    }
}
