use nalgebra::{DMatrix, DVector};
use probscale::sas::{design_candidate, Candidate, Norm, NormSAS, SasKind};
use probscale::scaling::{
    discard_index, estimate_violation, gamma_for_scenario, learning_sample_size, point_violation, probabilistic_scale,
    scale_from_gammas, scaling_sample_size, select_rth, test_points, validate_sample_size, ConstantMode, ScalingConfig,
};
use probscale::uncertainty::{
    realize_scenarios, Block, DistributionSpec, SampleStream, Scenario, UncertainConstraintSystem,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn harness() -> (UncertainConstraintSystem, DistributionSpec) {
    let spec = DistributionSpec::new(vec![
        Block::ScalarUniformFactor {
            lower: 0.5,
            upper: 1.5,
            target: 1,
        },
        Block::Gaussian {
            mean: vec![0.0; 3],
            covariance: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        },
    ])
    .unwrap();
    let sys = UncertainConstraintSystem::product_from_spec(&spec, 1.0).unwrap();
    (sys, spec)
}

/// `q ξ ≤ 1` with scalar `q ~ N(0, 1)`.
fn scalar_gaussian() -> (UncertainConstraintSystem, DistributionSpec) {
    let sys = UncertainConstraintSystem::affine(
        DMatrix::zeros(1, 1),
        vec![DMatrix::from_element(1, 1, 1.0)],
        DVector::from_element(1, 1.0),
        vec![DVector::zeros(1)],
    )
    .unwrap();
    let spec = DistributionSpec::gaussian(vec![0.0], &DMatrix::identity(1, 1)).unwrap();
    (sys, spec)
}

#[test]
fn sample_sizes() {
    assert_eq!(scaling_sample_size(0.05, 1e-6, ConstantMode::Exact), 2063);
    assert_eq!(scaling_sample_size(0.05, 1e-6, ConstantMode::Conservative), 2120);
    assert_eq!(discard_index(0.05, 2063), 52);
    assert_eq!(learning_sample_size(1, 0.05, 1e-6, 1).unwrap(), 4541);
    assert_eq!(learning_sample_size(25, 0.05, 1e-6, 1).unwrap(), 80_263);
    assert!(learning_sample_size(25, 0.14, 1e-6, 1).is_err());
    assert_eq!(scaling_sample_size(0.999, 0.999, ConstantMode::Exact), 1);
    assert_eq!(discard_index(0.001, 1), 1);
}

#[test]
fn learning_bound_grows_with_rows() {
    let one = learning_sample_size(5, 0.05, 1e-6, 1).unwrap();
    let many = learning_sample_size(5, 0.05, 1e-6, 16).unwrap();
    assert!(many > one);
}

#[test]
fn config_rejects_bad_levels() {
    assert!(ScalingConfig::new(0.0, 0.1).is_err());
    assert!(ScalingConfig::new(0.1, 1.0).is_err());
    assert!(ScalingConfig::new(f64::NAN, 0.1).is_err());
    assert!(ScalingConfig::new(0.1, 0.1).is_ok());
}

#[test]
fn select_rth_orders_infinities_last() {
    let g = [3.0, f64::INFINITY, -1.0, 2.0];
    assert_eq!(select_rth(&g, 1).unwrap(), -1.0);
    assert_eq!(select_rth(&g, 3).unwrap(), 3.0);
    assert_eq!(select_rth(&g, 4).unwrap(), f64::INFINITY);
    assert!(select_rth(&g, 0).is_err());
    assert!(select_rth(&g, 5).is_err());
    assert!(select_rth(&[1.0, f64::NAN], 1).is_err());
}

#[test]
fn nonpositive_selection_is_an_error() {
    let c = Candidate::Norm(NormSAS::new(DVector::zeros(1), DMatrix::identity(1, 1), Norm::L1).unwrap());
    let cfg = ScalingConfig::new(0.1, 0.1).unwrap();
    assert!(scale_from_gammas(&c, vec![-0.5, 1.0, 2.0], 1, &cfg, None).is_err());
    let ok = scale_from_gammas(&c, vec![0.5, 1.0, f64::INFINITY], 1, &cfg, None).unwrap();
    assert_eq!(ok.gamma, 0.5);
    assert_eq!(ok.diagnostics.infinite, 1);
}

/// Largest `γ` whose scaled vertex set satisfies the scenario, by bisection.
fn bisect_gamma(s: &NormSAS, sc: &Scenario) -> f64 {
    let ok = |g: f64| {
        s.scaled(g)
            .unwrap()
            .vertices()
            .unwrap()
            .iter()
            .all(|v| sc.is_satisfied(v))
    };
    let (mut lo, mut hi) = (0.0, 1e3);
    if ok(hi) {
        return f64::INFINITY;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn gamma_matches_bisection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..500 {
        let n = 1 + trial % 4;
        let norm = if trial % 2 == 0 { Norm::L1 } else { Norm::Linf };
        let diag = DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0));
        let s = NormSAS::new(DVector::zeros(n), DMatrix::from_diagonal(&diag), norm).unwrap();
        let sc = Scenario {
            f: DMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0)),
            g: DVector::from_fn(3, |_, _| rng.random_range(0.1..2.0)),
        };
        let g = gamma_for_scenario(&Candidate::Norm(s.clone()), &sc).unwrap();
        let oracle = bisect_gamma(&s, &sc);
        assert!(
            (g - oracle).abs() <= 1e-8 * (1.0 + oracle),
            "trial {trial}: {g} vs {oracle}"
        );
    }
}

#[test]
fn gamma_is_nonpositive_when_center_violates() {
    let s = NormSAS::new(DVector::from_vec(vec![2.0]), DMatrix::identity(1, 1), Norm::L1).unwrap();
    let sc = Scenario {
        f: DMatrix::from_element(1, 1, 1.0),
        g: DVector::from_element(1, 1.0),
    };
    assert!(gamma_for_scenario(&Candidate::Norm(s), &sc).unwrap() < 0.0);
}

#[test]
fn gaussian_tail_violation_matches_cdf() {
    let (sys, spec) = scalar_gaussian();
    let normal = Normal::new(0.0, 1.0).unwrap();
    for xi in [0.3, 0.6, 1.0] {
        let n = 200_000;
        let est = point_violation(&sys, &spec, &DVector::from_element(1, xi), n, SampleStream::new(5)).unwrap();
        let exact = normal.sf(1.0 / xi);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((est - exact).abs() <= 5.0 * se + 1e-12, "ξ = {xi}: {est} vs {exact}");
    }
}

#[test]
fn symmetric_uniform_violation_is_one_half() {
    let sys = UncertainConstraintSystem::affine(
        DMatrix::zeros(1, 1),
        vec![DMatrix::from_element(1, 1, 1.0)],
        DVector::zeros(1),
        vec![DVector::zeros(1)],
    )
    .unwrap();
    let spec = DistributionSpec::uniform_box(vec![-1.0], vec![1.0]).unwrap();
    let est = estimate_violation(
        &[DVector::from_element(1, 2.0)],
        &sys,
        &spec,
        40_000,
        SampleStream::new(6),
    )
    .unwrap();
    assert!((est.max - 0.5).abs() <= 5.0 * est.stderr);
}

/// For `|q| ξ ≤ 1` on a symmetric interval the worst point is the endpoint
/// `γ`, whose exact violation is `Φ̄(1/γ)`.
#[test]
fn scaled_interval_meets_the_level() {
    let (sys, spec) = scalar_gaussian();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let s = Candidate::Norm(NormSAS::new(DVector::zeros(1), DMatrix::identity(1, 1), Norm::Linf).unwrap());
    for seed in 0..10 {
        let cfg = ScalingConfig::new(0.05, 1e-6).unwrap().with_seed(seed);
        let scaled = probabilistic_scale(&s, &sys, &spec, &cfg).unwrap();
        assert_eq!(scaled.diagnostics.n_gamma, 2063);
        assert_eq!(scaled.diagnostics.r, 52);
        assert_eq!(scaled.gammas.len(), 2063);
        let exact = normal.sf(1.0 / scaled.gamma);
        assert!(exact <= 0.05, "seed {seed}: {exact}");
        // r-th smallest of 1/|q|: about ε/2 of the |q| mass lies beyond 1/γ.
        assert!((2.0 * exact - 0.025).abs() < 0.015, "seed {seed}: {exact}");
    }
}

#[test]
fn harness_l1_run_is_within_level() {
    let (sys, spec) = harness();
    let scen = realize_scenarios(&sys, &spec, SampleStream::new(1).substream(1), 100).unwrap();
    let cand = design_candidate(SasKind::L1, &scen, None).unwrap();
    let cfg = ScalingConfig::new(0.05, 1e-6).unwrap().with_seed(1);
    let scaled = probabilistic_scale(&cand, &sys, &spec, &cfg).unwrap();
    assert!(scaled.gamma > 0.0);
    assert!(scaled.diagnostics.center_violation.unwrap() <= 0.05);
    let pts = test_points(&scaled, 50, SampleStream::new(2)).unwrap();
    assert_eq!(pts.len(), 6 + 50);
    for p in &pts {
        assert!(scaled.contains(p).unwrap());
    }
    let est = estimate_violation(&pts, &sys, &spec, 10_000, SampleStream::new(3)).unwrap();
    assert!(est.max <= 0.05 + 3.0 * est.stderr, "{est:?}");
}

#[test]
fn scaling_is_deterministic_per_seed() {
    let (sys, spec) = harness();
    let scen = realize_scenarios(&sys, &spec, SampleStream::new(9), 50).unwrap();
    let cand = design_candidate(SasKind::Sampled, &scen, None).unwrap();
    let cfg = ScalingConfig::new(0.1, 1e-3).unwrap().with_seed(4);
    let a = probabilistic_scale(&cand, &sys, &spec, &cfg).unwrap();
    let b = probabilistic_scale(&cand, &sys, &spec, &cfg).unwrap();
    assert_eq!(a.gammas, b.gammas);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = probabilistic_scale(&cand, &sys, &spec, &cfg.with_seed(5)).unwrap();
    assert_ne!(a.gammas, c.gammas);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let (sys, spec) = harness();
    let c = Candidate::Norm(NormSAS::new(DVector::zeros(2), DMatrix::identity(2, 2), Norm::L1).unwrap());
    assert!(probabilistic_scale(&c, &sys, &spec, &ScalingConfig::new(0.1, 0.1).unwrap()).is_err());
}

proptest! {
    #[test]
    fn sample_size_passes_tail_inequality(eps in 0.001f64..0.5, delta in 1e-12f64..0.5) {
        let n = scaling_sample_size(eps, delta, ConstantMode::Exact);
        prop_assert!(validate_sample_size(n, discard_index(eps, n), eps, delta));
        let nc = scaling_sample_size(eps, delta, ConstantMode::Conservative);
        prop_assert!(nc >= n);
    }

    #[test]
    fn selection_is_monotone_in_r(gs in prop::collection::vec(-10.0f64..10.0, 1..60), a in 0usize..60, b in 0usize..60) {
        let len = gs.len();
        let (r1, r2) = (1 + a.min(b) % len, 1 + a.max(b) % len);
        let (r1, r2) = (r1.min(r2), r1.max(r2));
        prop_assert!(select_rth(&gs, r1).unwrap() <= select_rth(&gs, r2).unwrap());
        let pick = select_rth(&gs, r1).unwrap();
        prop_assert!(gs.iter().filter(|g| **g < pick).count() < r1);
        prop_assert!(gs.iter().filter(|g| **g <= pick).count() >= r1);
    }

    #[test]
    fn gamma_is_inverse_homogeneous_in_shape(scale in 0.1f64..10.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = NormSAS::new(DVector::zeros(2), DMatrix::identity(2, 2), Norm::L1).unwrap();
        let sc = Scenario {
            f: DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)),
            g: DVector::from_fn(2, |_, _| rng.random_range(0.1..1.0)),
        };
        let g1 = gamma_for_scenario(&Candidate::Norm(s.clone()), &sc).unwrap();
        let g2 = gamma_for_scenario(&Candidate::Norm(s.scaled(scale).unwrap()), &sc).unwrap();
        prop_assert!((g1 - scale * g2).abs() <= 1e-9 * (1.0 + g1.abs()));
    }
}
