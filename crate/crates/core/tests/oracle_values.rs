//! Values frozen from the independent reference in `tests/oracles/oracle.py`.

mod common;

use common::*;
use permlab::density::{density_quadrature, density_series, laplace_transform_exact, AngularGrid};
use permlab::markov::{full_killing_kernel, MarkovModel};
use permlab::verify::estimate_cover_time;

const GREEN_CYCLE3: [[f64; 3]; 3] = [
    [2.162162162162163, 1.4864864864864862, 1.0135135135135127],
    [1.0810810810810816, 3.2432432432432425, 1.7567567567567557],
    [1.216216216216217, 1.1486486486486487, 2.6013513513513495],
];

#[test]
fn green_kernel_of_killed_cycle() {
    let g = full_killing_kernel(&cycle3().q, &killing()).unwrap().g;
    for i in 0..3 {
        for j in 0..3 {
            assert!((g[(i, j)] - GREEN_CYCLE3[i][j]).abs() < 1e-12, "({i},{j}): {}", g[(i, j)]);
        }
    }
}

#[test]
fn laplace_transform_values() {
    let g = full_killing_kernel(&cycle3().q, &killing()).unwrap().g;
    let lam = [0.2, 0.1, 0.3];
    assert!((laplace_transform_exact(&g, &lam, 1.0).unwrap() - 0.3162393162393163).abs() < 1e-14);
    assert!((laplace_transform_exact(&g, &lam, 2.0).unwrap() - 0.10000730513551029).abs() < 1e-14);
}

#[test]
fn non_reversible_density_values() {
    let g = full_killing_kernel(&cycle3().q, &killing()).unwrap().g;
    for (l, expect) in [([0.5, 1.0, 2.0], 0.01738207164154664), ([1.5, 0.2, 0.7], 0.024831836523371534)] {
        let q = density_quadrature(&g, &l, AngularGrid::default()).unwrap().value;
        let s = density_series(&g, &l, 24).unwrap().value;
        assert!((q - expect).abs() < 1e-10 * expect, "quadrature {q} vs {expect}");
        assert!((s - expect).abs() < 1e-12 * expect, "series {s} vs {expect}");
    }
}

fn check_cover(model: &MarkovModel, t_cov: f64, seed: u64) {
    let r = estimate_cover_time(model, 20_000, seed).unwrap();
    let z = (r.metrics["t_cov"] - t_cov) / r.metrics["t_cov_stderr"];
    assert!(z.abs() <= 3.0, "t_cov {} vs exact {t_cov} (z = {z:.2})", r.metrics["t_cov"]);
    assert!(r.pass);
}

#[test]
fn cover_times_match_exact_values() {
    check_cover(&MarkovModel::two_flip(), 1.0, 1);
    check_cover(&MarkovModel::cycle(6, 0.5).unwrap(), 15.0, 2);
    check_cover(&MarkovModel::cycle(6, 0.8).unwrap(), 7.751699912990234, 3);
}
