use super::*;
use crate::seed;
use statrs::distribution::{ContinuousCDF, Normal};

fn base_cfg() -> DgpConfig {
    DgpConfig {
        n_conf: 400,
        n_unc: 60,
        seed: 17,
        ..DgpConfig::default()
    }
}

fn truth(seed_value: u64) -> SyntheticTruth {
    let cfg = base_cfg();
    SyntheticTruth::draw(
        cfg.d,
        cfg.d_phi,
        &cfg.phi_hidden,
        cfg.sigma_eps,
        &mut seed::rng(seed_value),
    )
    .unwrap()
}

#[test]
fn zero_beta_means_no_bias() {
    let t = truth(1);
    assert_eq!(t.beta(), 0.0);
    for arm in [0, 1] {
        assert_eq!(t.w_u(arm), *t.w_c(arm));
    }
    let x = CovariateLaw::Gaussian { sd: 1.0 }.sample(2000, 10, &mut seed::rng(2));
    assert!(t.bias_delta(x.view()).unwrap().abs() < 1e-10);
}

#[test]
fn bias_direction_has_unit_l1_norm_and_differs_between_arms() {
    let t = truth(4).with_beta(1.5);
    for arm in [0, 1] {
        assert!((t.delta(arm).mapv(f64::abs).sum() - 1.5).abs() < 1e-12);
    }
    assert!(t.delta(0) != t.delta(1));
}

#[test]
fn confounded_outcome_surfaces_have_unit_scale() {
    let t = truth(5);
    let x = CovariateLaw::Gaussian { sd: 1.0 }.sample(20_000, 10, &mut seed::rng(6));
    let f = t.phi_star().apply(x.view()).unwrap();
    let v = (f.dot(t.w_c(0)).var(0.0) + f.dot(t.w_c(1)).var(0.0)) / 2.0;
    assert!((v - 1.0).abs() < 0.1, "mean outcome variance {v}");
}

#[test]
fn calibration_to_zero_returns_zero() {
    let t = truth(7);
    let x = CovariateLaw::Gaussian { sd: 1.0 }.sample(100, 10, &mut seed::rng(8));
    assert_eq!(calibrate_beta(&t, 0.0, x.view()).unwrap(), 0.0);
}

#[test]
fn calibrated_beta_reproduces_target_on_independent_draws() {
    let t = truth(9);
    let mc = CovariateLaw::Gaussian { sd: 1.0 }.sample(DELTA_MC_ROWS, 10, &mut seed::rng(10));
    let beta = calibrate_beta(&t, 4.0, mc.view()).unwrap();
    let oracle_x = CovariateLaw::Gaussian { sd: 1.0 }.sample(100_000, 10, &mut seed::rng(11));
    // independent oracle: average squared bias gap written out row by row
    let gap = t.with_beta(beta).delta(1) - t.with_beta(beta).delta(0);
    let mut acc = 0.0;
    for row in oracle_x.rows() {
        let f = t.phi_star().apply_one(row).unwrap();
        acc += f.dot(&gap).powi(2);
    }
    let delta = acc / oracle_x.nrows() as f64;
    assert!((delta - 4.0).abs() <= 0.2, "re-estimated Δ = {delta}");
}

#[test]
fn negative_target_is_rejected() {
    let t = truth(12);
    let x = CovariateLaw::Gaussian { sd: 1.0 }.sample(10, 10, &mut seed::rng(0));
    assert!(matches!(
        calibrate_beta(&t, -1.0, x.view()),
        Err(Error::Calibration(_))
    ));
}

#[test]
fn representation_shift_has_requested_norm() {
    let t = truth(13);
    let shifted = t
        .with_representation_shift(0.7, &mut seed::rng(14))
        .unwrap();
    let p = shifted.representation_perturbation();
    assert!((row_abs_sum_max(&p) - 0.7).abs() < 1e-12);
    let x = CovariateLaw::Gaussian { sd: 1.0 }.sample(1, 10, &mut seed::rng(15));
    let a = shifted.phi_star().apply(x.view()).unwrap();
    let b = shifted.phi_unconfounded().apply(x.view()).unwrap();
    assert!(a != b);
}

#[test]
fn zero_representation_shift_reproduces_shared_law() {
    let mut shared = base_cfg();
    shared.target_delta = Some(4.0);
    let mut broken = shared.clone();
    broken.scenario = Scenario::NoSharedRep { beta_phi: 0.0 };
    let a = simulate(&shared, &mut Streams::new(21, &[0])).unwrap();
    let b = simulate(&broken, &mut Streams::new(21, &[0])).unwrap();
    assert_eq!(a.data, b.data);
    assert!(b
        .truth
        .representation_perturbation()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn overlap_cube_support() {
    let mut cfg = base_cfg();
    cfg.scenario = Scenario::OverlapCube { a: 0.5 };
    let (data, _) = sample_overlap_cube(&cfg, &mut seed::rng(22)).unwrap();
    assert!(data.rand.x().iter().all(|v| v.abs() <= 0.5));
}

#[test]
fn matched_gaussian_scales() {
    assert_eq!(matched_sigma_u(3.0), 1.0);
    assert!((matched_sigma_u(1.0) - 1.0 / 3.0).abs() < 1e-15);
    assert!((matched_sigma_u(0.5) - 1.0 / 6.0).abs() < 1e-15);
    let normal = Normal::new(0.0, matched_sigma_u(1.0)).unwrap();
    let coverage = normal.cdf(1.0) - normal.cdf(-1.0);
    assert!((coverage - MATCHED_COVERAGE).abs() < 5e-5, "{coverage}");
}

#[test]
fn sampler_rejects_wrong_scenario() {
    let cfg = base_cfg();
    assert!(matches!(
        sample_overlap_cube(&cfg, &mut seed::rng(0)),
        Err(Error::Config(_))
    ));
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = base_cfg();
    cfg.sigma_u = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = base_cfg();
    cfg.n_unc = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = base_cfg();
    cfg.beta = -0.1;
    assert!(cfg.validate().is_err());
}

#[test]
fn identical_seed_gives_identical_data() {
    let cfg = base_cfg();
    let a = sample_shared_rep(&cfg, &mut seed::rng(30)).unwrap();
    let b = sample_shared_rep(&cfg, &mut seed::rng(30)).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn shorter_draw_is_a_prefix_of_a_longer_one() {
    let t = truth(31);
    let law = CovariateLaw::Gaussian { sd: 1.0 };
    let short = t
        .sample(Source::Observational, law, 50, &mut seed::rng(32))
        .unwrap();
    let long = t
        .sample(Source::Observational, law, 120, &mut seed::rng(32))
        .unwrap();
    let rows: Vec<usize> = (0..50).collect();
    assert_eq!(long.select(&rows), short);
}

#[test]
fn unit_randomized_scale_matches_observational_covariates() {
    let mut cfg = base_cfg();
    cfg.n_conf = 4000;
    cfg.n_unc = 4000;
    let (data, _) = sample_shared_rep(&cfg, &mut seed::rng(33)).unwrap();
    let bound = 4.0 / (4000f64).sqrt();
    for j in 0..cfg.d {
        let a = data.obs.x().column(j).mean().unwrap();
        let b = data.rand.x().column(j).mean().unwrap();
        assert!((a - b).abs() < bound);
    }
}

#[test]
fn randomized_outcomes_use_unconfounded_heads() {
    let t = truth(34).with_beta(2.0);
    let x = CovariateLaw::Gaussian { sd: 1.0 }.sample(5, 10, &mut seed::rng(35));
    let arms = vec![0, 1, 0, 1, 1];
    let obs = t
        .mean_outcome(Source::Observational, x.view(), &arms)
        .unwrap();
    let rand = t.mean_outcome(Source::Randomized, x.view(), &arms).unwrap();
    let f = t.phi_star().apply(x.view()).unwrap();
    for i in 0..5 {
        let arm = arms[i];
        assert!((obs[i] - f.row(i).dot(t.w_c(arm))).abs() < 1e-12);
        assert!((rand[i] - f.row(i).dot(&t.w_u(arm))).abs() < 1e-12);
    }
    let tau = t.tau(x.view()).unwrap();
    for i in 0..5 {
        assert!((tau[i] - f.row(i).dot(&(t.w_u(1) - t.w_u(0)))).abs() < 1e-12);
    }
}
