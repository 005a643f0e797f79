use nalgebra::{DMatrix, DVector};
use probscale::optim::{solve_lp, LinearProgram, Status};
use probscale::polytope::{scale_about, CenteredPolytope, HPolytope, Support};
use probscale::sas::{Norm, NormSAS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sas(rng: &mut ChaCha8Rng, n: usize, norm: Norm) -> NormSAS {
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let p = &l * l.transpose() + DMatrix::identity(n, n) * 0.2;
    let c = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    NormSAS::new(c, p, norm).unwrap()
}

fn sign_vectors(n: usize) -> impl Iterator<Item = DVector<f64>> {
    (0u32..(1 << n)).map(move |mask| DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }))
}

/// Vertices built from the definition: `x_c ± P eᵢ` or `x_c + P s`.
fn oracle_vertices(s: &NormSAS) -> Vec<DVector<f64>> {
    let n = s.dim();
    match s.norm() {
        Norm::L1 => (0..n)
            .flat_map(|i| {
                let col = s.shape().column(i).into_owned();
                [s.center() + &col, s.center() - &col]
            })
            .collect(),
        Norm::Linf => sign_vectors(n).map(|z| s.center() + s.shape() * z).collect(),
    }
}

/// Gauge through the explicit facet list: the ℓ1 ball has the `2ⁿ` facets
/// `sᵀz ≤ 1`, the ℓ∞ ball the `2n` facets `±zᵢ ≤ 1`.
fn oracle_gauge(s: &NormSAS, xi: &DVector<f64>) -> f64 {
    let z = s.shape().clone().try_inverse().unwrap() * (xi - s.center());
    match s.norm() {
        Norm::L1 => sign_vectors(z.len())
            .map(|sv| sv.dot(&z))
            .fold(f64::NEG_INFINITY, f64::max),
        Norm::Linf => z.iter().map(|v| v.abs()).fold(0.0, f64::max),
    }
}

fn random_point(rng: &mut ChaCha8Rng, s: &NormSAS) -> DVector<f64> {
    let z = DVector::from_fn(s.dim(), |_, _| rng.random_range(-1.5..1.5));
    s.center() + s.shape() * z
}

fn sorted_keys(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    let mut keys: Vec<Vec<f64>> = vs.iter().map(|v| v.iter().copied().collect()).collect();
    keys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    keys
}

#[test]
fn support_and_vertices_match_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for trial in 0..10_000 {
        let n = 1 + trial % 6;
        let norm = if trial % 2 == 0 { Norm::L1 } else { Norm::Linf };
        let s = random_sas(&mut rng, n, norm);
        let verts = oracle_vertices(&s);
        let got = s.vertices().unwrap();
        assert_eq!(got.len(), verts.len());
        for (a, b) in sorted_keys(&got).iter().zip(sorted_keys(&verts)) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-8);
            }
        }
        let f = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let brute = verts.iter().map(|v| f.dot(v)).fold(f64::NEG_INFINITY, f64::max);
        assert!(
            (s.support(&f).unwrap() - brute).abs() <= 1e-8 * (1.0 + brute.abs()),
            "trial {trial}"
        );
    }
}

#[test]
fn membership_matches_facet_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut checked = 0;
    for trial in 0..10_000 {
        let n = 1 + trial % 6;
        let norm = if trial % 2 == 0 { Norm::L1 } else { Norm::Linf };
        let s = random_sas(&mut rng, n, norm);
        let xi = random_point(&mut rng, &s);
        let g = oracle_gauge(&s, &xi);
        if (g - 1.0).abs() < 1e-8 {
            continue;
        }
        checked += 1;
        let inside = g <= 1.0;
        assert_eq!(s.contains(&xi).unwrap(), inside, "trial {trial}");
        match norm {
            Norm::L1 => {
                let lifted = s.lift_l1().unwrap();
                assert_eq!(lifted.num_inequalities(), 3 * n + 1);
                assert_eq!(lifted.inequalities().0.nrows(), 3 * n + 1);
                assert_eq!(lifted.contains(&xi), inside, "trial {trial}");
            }
            Norm::Linf => {
                let h = s.hrep_linf().unwrap();
                assert_eq!(h.num_rows(), 2 * n);
                assert_eq!(h.contains(&xi, 1e-9), inside, "trial {trial}");
            }
        }
    }
    assert!(checked > 9_900);
}

/// The ξ-projection of the lifted system is the set: some `ζ` exists
/// exactly for members.
#[test]
fn lifted_system_projects_onto_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for trial in 0..500 {
        let n = 1 + trial % 5;
        let s = random_sas(&mut rng, n, Norm::L1);
        let xi = random_point(&mut rng, &s);
        let g = oracle_gauge(&s, &xi);
        if (g - 1.0).abs() < 1e-6 {
            continue;
        }
        let (a, b) = s.lift_l1().unwrap().inequalities();
        // Fix ξ: rows become A_ζ ζ ≤ b − A_ξ ξ.
        let a_zeta = a.columns(n, n).into_owned();
        let rhs = &b - a.columns(0, n) * &xi;
        let lp = LinearProgram::minimize(DVector::from_element(n, 1.0), a_zeta, rhs).unwrap();
        let res = solve_lp(&lp);
        if g <= 1.0 {
            assert_eq!(res.status, Status::Optimal, "trial {trial}");
            assert!((res.objective - g).abs() <= 1e-8, "trial {trial}");
        } else {
            assert_eq!(res.status, Status::Infeasible, "trial {trial}");
        }
    }
}

#[test]
fn interior_samples_stay_inside() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for n in 1..=6 {
        for norm in [Norm::L1, Norm::Linf] {
            let s = random_sas(&mut rng, n, norm);
            for _ in 0..200 {
                let x = s.sample_interior(&mut rng);
                assert!(oracle_gauge(&s, &x) <= 1.0 + 1e-9);
            }
        }
    }
}

#[test]
fn containment_margin_agrees_with_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..200 {
        let s = random_sas(&mut rng, 3, Norm::L1);
        let a = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(5, |_, _| rng.random_range(0.0..6.0));
        let d = HPolytope::new(a.clone(), b.clone()).unwrap();
        let brute = oracle_vertices(&s)
            .iter()
            .flat_map(|v| (a.clone() * v - &b).iter().copied().collect::<Vec<_>>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((s.containment_margin(&d) - brute).abs() < 1e-9);
    }
}

#[test]
fn box_polytope_geometry() {
    let lo = DVector::from_vec(vec![-1.0, 0.0, 2.0]);
    let hi = DVector::from_vec(vec![3.0, 1.0, 4.0]);
    let p = HPolytope::from_box(&lo, &hi).unwrap();
    let f = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    assert!((p.support(&f).unwrap().value() - (3.0 + 0.0 + 2.0)).abs() < 1e-9);
    let (c, r) = p.chebyshev_center().unwrap();
    assert!((r - 0.5).abs() < 1e-9);
    assert!((c[1] - 0.5).abs() < 1e-9);
    let (bl, bu) = p.bounding_box().unwrap();
    assert!((bl - lo).amax() < 1e-9 && (bu - hi).amax() < 1e-9);

    let half = HPolytope::new(
        DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
        DVector::from_vec(vec![1.0]),
    )
    .unwrap();
    assert_eq!(
        half.support(&DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap(),
        Support::Unbounded
    );
}

#[test]
fn polytope_scaling_about_center() {
    let p = HPolytope::from_box(&DVector::from_vec(vec![-1.0, -1.0]), &DVector::from_vec(vec![3.0, 1.0])).unwrap();
    let cp = CenteredPolytope::chebyshev(p).unwrap();
    let half = scale_about(&cp, 0.5).unwrap();
    let f = DVector::from_vec(vec![0.0, 1.0]);
    let h = half.support(&f).unwrap().value();
    assert!((h - (cp.center[1] + 0.5 * (1.0 - cp.center[1]))).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scaled_sets_are_nested(seed in any::<u64>(), g1 in 0.05f64..2.0, dg in 0.0f64..2.0, l1 in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = if l1 { Norm::L1 } else { Norm::Linf };
        let s = random_sas(&mut rng, 3, norm);
        let small = s.scaled(g1).unwrap();
        let large = s.scaled(g1 + dg).unwrap();
        for _ in 0..20 {
            let x = small.sample_interior(&mut rng);
            prop_assert!(large.contains(&x).unwrap());
        }
    }

    #[test]
    fn support_is_homogeneous_in_gamma(seed in any::<u64>(), gamma in 0.0f64..5.0, l1 in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = if l1 { Norm::L1 } else { Norm::Linf };
        let s = random_sas(&mut rng, 4, norm);
        let f = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let base = s.support(&f).unwrap() - f.dot(s.center());
        let scaled = s.scaled(gamma).unwrap().support(&f).unwrap() - f.dot(s.center());
        prop_assert!((scaled - gamma * base).abs() <= 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn scale_then_lift_matches_gauge(seed in any::<u64>(), gamma in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_sas(&mut rng, 4, Norm::L1);
        let lifted = s.scaled(gamma).unwrap().lift_l1().unwrap();
        let x = random_point(&mut rng, &s);
        let g = oracle_gauge(&s, &x);
        prop_assume!((g - gamma).abs() > 1e-7);
        prop_assert_eq!(lifted.contains(&x), g <= gamma);
    }
}
