//! Monte-Carlo checks of the samplers against closed forms.

mod common;

use common::*;
use permlab::markov::{full_killing_kernel, ray_knight_kernel, KillingRates, MarkovModel};
use permlab::rng::par_replicates;
use permlab::samplers::*;
use permlab::stats::{ks_per_coordinate, MCEstimate};
use permlab::verify::{default_lambda_grid, verify_laplace};
use permlab::SquareMatrix;

#[test]
fn two_fold_one_dimensional_is_gamma_two() {
    let g = SquareMatrix::from_rows(&[vec![1.0]]).unwrap();
    let s = KPermanental { base: PsdSampler::new(&g).unwrap(), k: 2 };
    assert_eq!(s.provenance(), Provenance::KFold);
    let xs: Vec<f64> = sample_batch(&s, 100_000, 1, "gamma").into_iter().map(|v| v[0]).collect();
    let mean = MCEstimate::from_samples(&xs, 1);
    assert!(mean.z_against(2.0) <= 3.0, "mean {}", mean.mean);
    let sq: Vec<f64> = xs.iter().map(|x| (x - 2.0).powi(2)).collect();
    let var = MCEstimate::from_samples(&sq, 1);
    assert!(var.z_against(2.0) <= 3.0, "variance {}", var.mean);
}

#[test]
fn second_moments_match_kernel() {
    // E[l_i l_j] = G_ii G_jj + G_ij G_ji for a non-symmetric kernel
    let g = full_killing_kernel(&cycle3().q, &killing()).unwrap().g;
    let s = LoopSoupSampler::new(&cycle3(), &killing()).unwrap();
    let samples = sample_batch(&s, 100_000, 2, "moments");
    for (i, j) in [(0, 1), (1, 2), (0, 0)] {
        let xs: Vec<f64> = samples.iter().map(|v| v[i] * v[j]).collect();
        let exact = g[(i, i)] * g[(j, j)] + g[(i, j)] * g[(j, i)];
        let e = MCEstimate::from_samples(&xs, 2);
        assert!(e.z_against(exact) <= 3.0, "({i},{j}): {} vs {exact}", e.mean);
    }
}

#[test]
fn psd_sampler_passes_laplace_check_on_random_kernels() {
    let mut r = rng(3);
    for _ in 0..3 {
        let b = SquareMatrix::from_fn(3, |_, _| rand::Rng::random_range(&mut r, -1.0..1.0));
        let g = b.mul(&b.transpose()).add(&SquareMatrix::identity(3).scale(0.3));
        let s = PsdSampler::new(&g).unwrap();
        let report = verify_laplace(&g, &s, 1.0, &default_lambda_grid(&g), 100_000, 3).unwrap();
        assert!(report.pass, "max z {}", report.max_z);
    }
}

#[test]
fn psd_sampler_rejects_non_symmetric() {
    let g = full_killing_kernel(&cycle3().q, &killing()).unwrap().g;
    assert!(PsdSampler::new(&g).is_err());
}

#[test]
fn two_state_loop_soup_matches_gaussian_squares() {
    let flip = MarkovModel::two_flip();
    let h = KillingRates::new(vec![0.4, 0.7]).unwrap();
    let g = full_killing_kernel(&flip.q, &h).unwrap().g;
    let a = sample_batch(&PsdSampler::new(&g).unwrap(), 100_000, 4, "psd");
    let b = sample_batch(&LoopSoupSampler::new(&flip, &h).unwrap(), 100_000, 5, "soup");
    let ks = ks_per_coordinate(&a, &b);
    assert!(ks.iter().all(|d| *d <= 0.01), "{ks:?}");
}

#[test]
fn hitting_time_of_two_flip() {
    // from state 0 the holding time is Exp(1/2); state 1 is never visited before the hit
    let flip = MarkovModel::two_flip();
    let vals = par_replicates(6, "hit", 50_000, |rng, _| {
        let t = simulate_ctmc(&flip, 0, &StoppingRule::Hit { j: 1 }, false, rng).unwrap();
        assert_eq!(t.local_time[1], 0.0);
        t.local_time[0]
    });
    let e = MCEstimate::from_samples(&vals, 6);
    assert!(e.z_against(2.0) <= 3.0, "{}", e.mean);
}

#[test]
fn inverse_local_time_of_two_flip_has_mean_r() {
    let flip = MarkovModel::two_flip();
    for r in [0.5, 2.0] {
        let vals = par_replicates(7, "tau", 50_000, |rng, _| inverse_local_time_field(&flip, 0, r, rng).unwrap());
        assert!(vals.iter().all(|v| (v[0] - r).abs() < 1e-9));
        let other: Vec<f64> = vals.iter().map(|v| v[1]).collect();
        let e = MCEstimate::from_samples(&other, 7);
        assert!(e.z_against(r) <= 3.0, "r = {r}: {}", e.mean);
    }
}

#[test]
fn killed_clock_matches_cemetery_killing() {
    // the two killing mechanisms give the same law of the local times
    let model = cycle3();
    let h = killing();
    let a = par_replicates(8, "clock", 40_000, |rng, _| {
        simulate_ctmc(&model, 0, &StoppingRule::KilledClock { h: h.0.clone() }, false, rng).unwrap().local_time
    });
    let b = par_replicates(9, "cemetery", 40_000, |rng, _| {
        simulate_ctmc(&model, 0, &StoppingRule::Killed { h: h.0.clone() }, false, rng).unwrap().local_time
    });
    let ks = ks_per_coordinate(&a, &b);
    assert!(ks.iter().all(|d| *d <= 0.015), "{ks:?}");
}

#[test]
fn rejection_acceptance_matches_exponential_marginal() {
    let model = cycle3();
    let g = ray_knight_kernel(&model.q, 0, 1.0).unwrap().g;
    let gaa = g[(0, 0)];
    let s = RejectionSampler::new(&model, 0, 1.0, 1.0, Some(0.05), 1e-4).unwrap();
    let (samples, acc) = s.sample_batch(20_000, 10, "band").unwrap();
    assert!(samples.iter().all(|v| (v[0] - 1.0).abs() <= 0.05));
    let exact = (-0.95 / gaa).exp() - (-1.05 / gaa).exp();
    assert!((acc.predicted - exact).abs() < 1e-14);
    assert!(((acc.rate - exact) / acc.stderr).abs() <= 3.0, "{} vs {exact}", acc.rate);
}

#[test]
fn narrow_band_is_refused() {
    let err = RejectionSampler::new(&cycle3(), 0, 1.0, 1.0, Some(1e-7), 1e-4).unwrap_err();
    assert!(matches!(err, permlab::Error::BandTooNarrow { .. }));
}

#[test]
fn band_conditioned_matches_chi2_on_reversible_chain() {
    let model = birth_death();
    let g = ray_knight_kernel(&model.q, 0, 1.0).unwrap().g;
    let chi2 = ConditionedChi2Sampler::new(&g, 0, 1.0).unwrap();
    let exact = sample_batch(&chi2, 20_000, 11, "chi2");
    let s = RejectionSampler::new(&model, 0, 1.0, 1.0, Some(0.05), 1e-4).unwrap();
    let (band, _) = s.sample_batch(20_000, 12, "band").unwrap();
    let rest: Vec<Vec<f64>> = band.iter().map(|v| v[1..].to_vec()).collect();
    let ks = ks_per_coordinate(&exact, &rest);
    assert!(ks.iter().all(|d| *d <= 0.03), "{ks:?}");
}

#[test]
fn batches_do_not_depend_on_thread_count() {
    let s = LoopSoupSampler::new(&cycle3(), &killing()).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| sample_batch(&s, 2_000, 13, "threads"));
    let b = four.install(|| sample_batch(&s, 2_000, 13, "threads"));
    assert_eq!(a, b);
}
