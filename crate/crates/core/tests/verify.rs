//! Verifier behaviour at moderate N, including the failure modes.

mod common;

use common::*;
use permlab::markov::{full_killing_kernel, KillingRates, MarkovModel};
use permlab::samplers::LoopSoupSampler;
use permlab::testfn::TestFunction;
use permlab::verify::*;
use permlab::{Error, SquareMatrix};

fn will(x: f64) -> SquareMatrix {
    SquareMatrix::from_fn(3, |i, j| if i == j { 1.0 } else { x })
}

fn sub_stochastic_path() -> KernelPath {
    KernelPath::SubStochastic {
        p0: m(&[&[0.0, 0.2, 0.1], &[0.3, 0.0, 0.2], &[0.1, 0.1, 0.0]]),
        p1: m(&[&[0.1, 0.5, 0.3], &[0.4, 0.2, 0.3], &[0.3, 0.4, 0.2]]),
        s: 2.0,
    }
}

fn alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[test]
fn perturbed_kernel_is_caught() {
    let g = full_killing_kernel(&cycle3().q, &killing()).unwrap().g;
    let s = LoopSoupSampler::new(&cycle3(), &killing()).unwrap();
    let grid = default_lambda_grid(&g);
    let good = verify_laplace(&g, &s, 1.0, &grid, 50_000, 1).unwrap();
    assert!(good.pass, "max z {}", good.max_z);
    let bad = verify_laplace(&g.scale(1.1), &s, 1.0, &grid, 50_000, 1).unwrap();
    assert!(!bad.pass && bad.max_z > 3.0);
}

#[test]
fn dynkin_with_unit_function_recovers_green_diagonal() {
    let r = verify_dynkin(&cycle3(), &killing(), 1, &TestFunction::One, 40_000, 2).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
    let c = r.comparison("lhs_vs_green_diagonal").unwrap();
    assert!((c.rhs - 3.2432432432432425).abs() < 1e-12);
}

#[test]
fn dynkin_one_state_second_moment() {
    // n = 1: E[l^2] = 2 G^2 = 2 / h^2
    let one = MarkovModel::new(m(&[&[1.0]])).unwrap();
    let h = KillingRates::new(vec![0.5]).unwrap();
    let u = TestFunction::coordinate(1, 0);
    let r = verify_dynkin(&one, &h, 0, &u, 40_000, 3).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
    let c = r.comparison("lhs_vs_forward").unwrap();
    assert!((c.lhs - 8.0).abs() <= 3.0 * c.lhs_stderr, "{}", c.lhs);
}

#[test]
fn ray_knight_chi2_path_on_reversible_chain() {
    let r = verify_ray_knight(&birth_death(), 1, 1.0, 0.5, 30_000, RayKnightEnsemble::Chi2, 0.02, 4).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
    assert!(r.comparisons.iter().any(|c| c.label.starts_with("conditioned_density_box")));
}

#[test]
fn ray_knight_chi2_is_refused_for_non_reversible_chain() {
    let r = verify_ray_knight(&cycle3(), 0, 1.0, 1.0, 1_000, RayKnightEnsemble::Chi2, 0.05, 5);
    assert!(r.is_err());
}

#[test]
fn eisenbaum_with_unit_function() {
    let r = verify_eisenbaum(&cycle3(), &killing(), 0, 1.0, &TestFunction::One, 10_000, 16, 6).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
}

#[test]
fn ward_unit_function_gives_green_entries() {
    let r = verify_ward(&cycle3(), &killing(), 0, 2, &TestFunction::One, 10_000, 16, 1e4, 7).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
    assert!(r.metrics["truncation_tail"] <= 1e-6);
}

#[test]
fn ward_refuses_too_short_horizon() {
    let r = verify_ward(&cycle3(), &killing(), 0, 1, &TestFunction::One, 1_000, 4, 1.0, 8);
    assert!(matches!(r, Err(Error::HorizonTooShort(_))), "{r:?}");
}

#[test]
fn kahane_profile_is_nondecreasing() {
    let f = TestFunction::product_of_linear(3);
    let r = check_kahane(&sub_stochastic_path(), &f, 1, &alpha_grid(), 30_000, 9).unwrap();
    assert!(r.pass);
    let p = r.profile.as_ref().unwrap();
    assert_eq!(p.direction, KahaneDirection::Nondecreasing);
    assert_eq!(p.estimates.len(), 11);
    assert!(p.estimates[10].mean > p.estimates[0].mean);
    // common random numbers make adjacent differences less noisy
    assert!(r.metrics["crn_variance_ratio"] <= 1.0);
}

#[test]
fn kahane_rejects_incompatible_function() {
    let ss = TestFunction::SmoothstepProduct { s: vec![2.0, 2.0, 2.0], eps: 1.0 };
    let r = check_kahane(&sub_stochastic_path(), &ss, 1, &alpha_grid(), 1_000, 10);
    assert!(matches!(r, Err(Error::InvalidFamily(_))), "{r:?}");
}

#[test]
fn kahane_smoothstep_on_linear_family() {
    let ss = TestFunction::SmoothstepProduct { s: vec![2.0, 2.0, 2.0], eps: 1.0 };
    let path = KernelPath::Linear { g0: will(0.3), g1: will(0.5) };
    let r = check_kahane(&path, &ss, 1, &alpha_grid(), 30_000, 11).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
}

#[test]
fn slepian_dominance_and_scaled_transform() {
    let r = check_slepian(&will(0.3), &will(0.5), 50_000, None, 12).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
    assert_eq!(r.metrics["weak_form"], 1.0);
    assert!(r.comparisons.iter().any(|c| c.label.starts_with("scaled_lambda")));
}

#[test]
fn slepian_rejects_invalid_pairs() {
    // reversed order: off-diagonals of G1 below G0
    assert!(matches!(check_slepian(&will(0.5), &will(0.3), 100, None, 13), Err(Error::InvalidPair(_))));
    let bigger_diag = will(0.5).add(&SquareMatrix::identity(3).scale(0.1));
    assert!(matches!(check_slepian(&will(0.3), &bigger_diag, 100, None, 13), Err(Error::InvalidPair(_))));
}

#[test]
fn tail_bound_holds_and_reports_tightness() {
    let r = check_tail_bound(&cycle3(), 0, 1.0, &[1.0, 2.0, 4.0, 8.0], 30_000, 14).unwrap();
    assert!(r.pass);
    assert!(r.metrics["gamma"] >= 1.0);
    assert!(r.metrics["tightness"] > 0.0 && r.metrics["tightness"] < 1.0);
}

#[test]
fn tail_params_symmetric_chain_has_unit_gamma() {
    let p = TailParams::new(&MarkovModel::cycle(6, 0.5).unwrap(), 0).unwrap();
    assert!((p.gamma - 1.0).abs() < 1e-10);
    assert!(p.sigma2 > 0.0);
}

#[test]
fn cover_sandwich_on_biased_cycle() {
    let r = estimate_cover_time(&MarkovModel::cycle(6, 0.8).unwrap(), 10_000, 15).unwrap();
    assert!(r.pass);
    for key in ["t_cov", "t_hit", "expected_sup", "symmetrization_ratio", "matthews_ratio"] {
        assert!(r.metrics[key].is_finite(), "{key}");
    }
    assert_eq!(r.comparisons.len(), 12);
}

#[test]
fn reports_are_reproducible() {
    let a = verify_dynkin(&cycle3(), &killing(), 0, &TestFunction::One, 2_000, 16).unwrap();
    let b = verify_dynkin(&cycle3(), &killing(), 0, &TestFunction::One, 2_000, 16).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn lejan_k_fold_matches_product_measure() {
    let g = full_killing_kernel(&cycle3().q, &killing()).unwrap().g;
    let u = TestFunction::ExpLinear { lambda: vec![0.2, 0.1, 0.3] };
    let r = verify_lejan(&g, &u, 2, 30_000, 17, false).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
    let r = verify_lejan(&g, &u, 1, 30_000, 18, true).unwrap();
    assert!(r.pass, "max z {}", r.max_z);
}
