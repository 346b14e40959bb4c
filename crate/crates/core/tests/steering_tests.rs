use fmsteer::dataio::{gen_scenario, RepresentationSet, Role, Scenario, ScenarioSpec};
use fmsteer::evaluation::{fid, CovMode};
use fmsteer::flow::{train, TrainingConfig};
use fmsteer::numerics::{sample_standard_normal, RngState};
use fmsteer::steering::{fit_linear, flow_steer, linear_steer, split_sets, SteerOptions};

#[test]
fn linear_vector_matches_elementwise_means() {
    let mut rng = RngState::new(4);
    let s = sample_standard_normal(&mut rng, 37, 5);
    let t = sample_standard_normal(&mut rng, 23, 5);
    let sv = fit_linear(&s, &t).unwrap();
    for k in 0..5 {
        let ms: f64 = (0..37).map(|i| s[(i, k)]).sum::<f64>() / 37.0;
        let mt: f64 = (0..23).map(|i| t[(i, k)]).sum::<f64>() / 23.0;
        assert!((sv.v[k] - (mt - ms)).abs() < 1e-14);
    }
}

#[test]
fn linear_steering_preserves_differences_and_covariance() {
    let mut rng = RngState::new(5);
    let x = sample_standard_normal(&mut rng, 50, 3);
    let t = sample_standard_normal(&mut rng, 50, 3);
    let sv = fit_linear(&x, &t).unwrap().with_gamma(1.7);
    let y = linear_steer(&x, &sv).unwrap();
    for (i, j) in [(0, 1), (3, 40), (12, 49)] {
        for k in 0..3 {
            let before = x[(i, k)] - x[(j, k)];
            let after = y[(i, k)] - y[(j, k)];
            assert!((before - after).abs() < 1e-12);
        }
    }
    let cx = x.covariance().unwrap();
    let cy = y.covariance().unwrap();
    for (a, b) in cx.data().iter().zip(cy.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn identity_model_barely_moves_points() {
    let mut rng = RngState::new(12);
    let set = RepresentationSet::new(Role::Source, sample_standard_normal(&mut rng, 2000, 2)).unwrap();
    let config = TrainingConfig {
        iterations: 2000,
        ..TrainingConfig::default()
    };
    let ck = train(&config, &set, &set).unwrap().checkpoint;
    let probe = sample_standard_normal(&mut rng, 100, 2);
    let out = flow_steer(&ck, &probe, &SteerOptions::default()).unwrap();
    assert_eq!(out.n_failed(), 0);
    let zin = ck.target_norm.transform(&probe).unwrap();
    let zout = ck.target_norm.transform(&out.steered).unwrap();
    for i in 0..probe.rows() {
        let dist: f64 = zin
            .row(i)
            .iter()
            .zip(zout.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 0.5, "row {i}: moved {dist}");
    }
}

#[test]
fn anisotropic_flow_steering_stays_finite_and_deterministic() {
    let spec = ScenarioSpec::new(Scenario::anisotropic(), 2, 2000, 2);
    let (s, t) = gen_scenario(&spec).unwrap();
    let ck = train(&TrainingConfig::default(), &s, &t).unwrap().checkpoint;
    let opts = SteerOptions::default();
    let a = flow_steer(&ck, s.data(), &opts).unwrap();
    assert_eq!(a.n_failed(), 0);
    assert!(a.steered.all_finite());
    let b = flow_steer(&ck, s.data(), &opts).unwrap();
    let bits = |m: &fmsteer::numerics::Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.steered), bits(&b.steered));
}

#[test]
fn identical_distributions_have_small_heldout_fid() {
    let scenario = Scenario::CustomGaussian {
        source_mean: vec![1.0, -1.0],
        source_std: vec![1.0, 2.0],
        target_mean: vec![1.0, -1.0],
        target_std: vec![1.0, 2.0],
    };
    let (s, t) = gen_scenario(&ScenarioSpec::new(scenario, 2, 4000, 6)).unwrap();
    let split = split_sets(s.data(), t.data(), 0.2, 1).unwrap();
    let value = fid(&split.source_held, &split.target_held, CovMode::Full).unwrap();
    assert!(value < 0.05, "{value}");
}
