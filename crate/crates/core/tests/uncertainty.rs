use nalgebra::{dmatrix, DMatrix, DVector};
use probscale::uncertainty::{
    draw, draw_range, realize_scenarios, realize_scenarios_from, violation_indicator, Block, DistributionSpec,
    SampleStream, UncertainConstraintSystem,
};

fn mixed_spec() -> DistributionSpec {
    DistributionSpec::new(vec![
        Block::ScalarUniformFactor {
            lower: 0.5,
            upper: 1.5,
            target: 1,
        },
        Block::Gaussian {
            mean: vec![0.0, 1.0],
            covariance: vec![vec![2.0, 0.5], vec![0.5, 1.0]],
        },
        Block::UniformBox {
            lower: vec![-1.0],
            upper: vec![3.0],
        },
    ])
    .unwrap()
}

#[test]
fn moments_match_block_parameters() {
    let spec = mixed_spec();
    assert_eq!(spec.dim(), 4);
    let n = 100_000;
    let xs = draw(&spec, SampleStream::new(1), n).unwrap();
    let mean = xs.iter().fold(DVector::zeros(4), |a, x| a + x) / n as f64;
    let expect = DVector::from_vec(vec![1.0, 0.0, 1.0, 1.0]);
    assert_eq!(spec.mean(), expect);
    // Standard errors are below 0.005 for every coordinate.
    assert!((&mean - &expect).amax() < 0.03, "{mean}");

    let mut cov = DMatrix::zeros(2, 2);
    for x in &xs {
        let d = DVector::from_vec(vec![x[1] - mean[1], x[2] - mean[2]]);
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    assert!((cov - dmatrix![2.0, 0.5; 0.5, 1.0]).amax() < 0.05);
    let uni_var = xs.iter().map(|x| (x[3] - 1.0).powi(2)).sum::<f64>() / n as f64;
    assert!((uni_var - 16.0 / 12.0).abs() < 0.03);
}

#[test]
fn streams_are_index_addressable() {
    let spec = mixed_spec();
    let s = SampleStream::new(42).substream(3);
    let all = draw_range(&spec, s, 0, 50);
    let tail = draw_range(&spec, s, 20, 30);
    assert_eq!(&all[20..], &tail[..]);
    assert_eq!(spec.sample(&mut s.rng(7)), all[7]);
    assert_ne!(
        draw_range(&spec, s.substream(1), 0, 1),
        draw_range(&spec, s.substream(2), 0, 1)
    );
    assert_ne!(draw_range(&spec, SampleStream::new(43).substream(3), 0, 1)[0], all[0]);
}

#[test]
fn nested_scenario_prefixes() {
    let spec = mixed_spec();
    let sys = UncertainConstraintSystem::product_from_spec(&spec, 1.0).unwrap();
    let s = SampleStream::new(5);
    let small = realize_scenarios(&sys, &spec, s, 10).unwrap();
    let large = realize_scenarios(&sys, &spec, s, 100).unwrap();
    assert_eq!(small.scenarios[..], large.scenarios[..10]);
    let rest = realize_scenarios_from(&sys, &spec, s, 10, 90).unwrap();
    assert_eq!(rest.scenarios[..], large.scenarios[10..]);
    assert!(realize_scenarios(&sys, &spec, s, 0).is_err());
}

#[test]
fn product_form_realizes_scaled_direction() {
    let spec = mixed_spec();
    let sys = UncertainConstraintSystem::product_from_spec(&spec, 1.0).unwrap();
    assert_eq!(sys.dim(), 2);
    let q = DVector::from_vec(vec![1.5, 2.0, -1.0, 0.0]);
    let sc = sys.realize(&q).unwrap();
    assert_eq!(sc.f, dmatrix![3.0, -1.5]);
    assert_eq!(sc.g, DVector::from_element(1, 1.0));
    assert_eq!(
        violation_indicator(&sys, &DVector::from_vec(vec![1.0, 0.0]), &q).unwrap(),
        1
    );
    assert_eq!(
        violation_indicator(&sys, &DVector::from_vec(vec![0.0, 0.0]), &q).unwrap(),
        0
    );
    assert!(violation_indicator(&sys, &DVector::zeros(3), &q).is_err());
}

#[test]
fn affine_form_is_linear_in_q() {
    let sys = UncertainConstraintSystem::affine(
        dmatrix![1.0, 0.0],
        vec![dmatrix![0.0, 1.0], dmatrix![2.0, 0.0]],
        DVector::from_element(1, 1.0),
        vec![DVector::from_element(1, 0.5), DVector::zeros(1)],
    )
    .unwrap();
    let sc = sys.realize(&DVector::from_vec(vec![2.0, -1.0])).unwrap();
    assert_eq!(sc.f, dmatrix![-1.0, 2.0]);
    assert_eq!(sc.g[0], 2.0);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(DistributionSpec::new(vec![]).is_err());
    assert!(DistributionSpec::uniform_box(vec![1.0], vec![0.0]).is_err());
    assert!(DistributionSpec::gaussian(vec![0.0, 0.0], &dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
    let self_target = DistributionSpec::new(vec![Block::ScalarUniformFactor {
        lower: 0.0,
        upper: 1.0,
        target: 0,
    }]);
    assert!(self_target.is_err());
    let unknown = serde_json::from_str::<DistributionSpec>(r#"{"blocks": [], "extra": 1}"#);
    assert!(unknown.is_err());
}

#[test]
fn spec_json_round_trip() {
    let spec = mixed_spec();
    let text = serde_json::to_string(&spec).unwrap();
    let back: DistributionSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
    assert!(text.contains("\"kind\":\"scalar_uniform_factor\""));
}
