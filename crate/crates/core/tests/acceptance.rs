//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p permlab --test acceptance`. Exits non-zero if any
//! criterion fails.

mod common;

use std::time::Instant;

use common::*;
use permlab::cli;
use permlab::density::{box_expectation, density_quadrature, symmetrization_bound_check, AngularGrid, BoxRule};
use permlab::kernel::{check_inverse_pd_sym, gamma_symmetrization};
use permlab::markov::{full_killing_kernel, ray_knight_kernel, KillingRates, MarkovModel};
use permlab::samplers::*;
use permlab::stats::ks_per_coordinate;
use permlab::testfn::TestFunction;
use permlab::verify::*;
use permlab::SquareMatrix;

const N: usize = 100_000;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn reports(rs: &[(&str, Report)]) -> Outcome {
    let pass = rs.iter().all(|(_, r)| r.pass);
    let detail: Vec<String> = rs
        .iter()
        .map(|(name, r)| {
            let mut s = format!("{name}: max z {:.2}", r.max_z);
            if !r.ks.is_empty() {
                s.push_str(&format!(", KS {:.4}", r.ks.iter().map(|k| k.max).fold(0.0, f64::max)));
            }
            if let Some(p) = &r.profile {
                s.push_str(&format!(", {:?}, largest adjacent decrease {:.2} stderr", p.direction, p.max_violation));
            }
            if let Some(t) = r.metrics.get("tightness") {
                s.push_str(&format!(", tightness {t:.3}"));
            }
            s
        })
        .collect();
    outcome(pass, detail.join("; "))
}

fn exponential_marginal() -> Outcome {
    let g = 1.7;
    let gm = SquareMatrix::from_rows(&[vec![g]]).unwrap();
    let t = Instant::now();
    let mut worst = 0.0f64;
    for i in 1..=100 {
        let l = 0.1 * i as f64;
        let v = density_quadrature(&gm, &[l], AngularGrid::default()).unwrap().value;
        let exact = (-l / g).exp() / g;
        worst = worst.max((v - exact).abs() / exact);
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(worst <= 1e-10 && secs < 1.0, format!("max rel err {worst:.2e} in {secs:.3}s"))
}

fn cross_oracle_density() -> Outcome {
    let mut rng = rng(2);
    let grid = AngularGrid::new(64, true).unwrap();
    let plan = permlab::density::SeriesPlan::new(3, 24).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let g = random_markovian_kernel(3, &mut rng);
        let axis: Vec<f64> = (1..=5).map(|i| 0.4 * i as f64).collect();
        for &x in &axis {
            for &y in &axis {
                for &z in &axis {
                    let l = [x * g[(0, 0)], y * g[(1, 1)], z * g[(2, 2)]];
                    let q = density_quadrature(&g, &l, grid).unwrap().value;
                    let s = plan.evaluate(&g, &l).unwrap().value;
                    worst = worst.max((q - s).abs() / s.abs());
                }
            }
        }
    }
    outcome(worst <= 1e-6, format!("max rel diff {worst:.2e} over 20 kernels x 125 points"))
}

fn normalization_and_positivity() -> Outcome {
    let mut rng = rng(3);
    let grid = AngularGrid::default();
    let mut worst_mass = 0.0f64;
    let mut min_rho = f64::INFINITY;
    let mut sym_ok = true;
    let mut kernels = vec![
        full_killing_kernel(&cycle3().q, &killing()).unwrap().g,
        SquareMatrix::from_rows(&[vec![1.2, 0.5], vec![0.3, 0.9]]).unwrap(),
    ];
    kernels.extend((0..4).map(|_| random_markovian_kernel(3, &mut rng)));
    for g in &kernels {
        let rule = BoxRule { extent: 24.0, nodes: 40, grid: AngularGrid::new(32, true).unwrap() };
        let mass = box_expectation(g, |_| 1.0, rule).unwrap();
        worst_mass = worst_mass.max((mass - 1.0).abs());
        let n = g.n();
        for c in 0..64usize {
            let l: Vec<f64> = (0..n).map(|i| g[(i, i)] * (0.05 + ((c >> (2 * i)) & 3) as f64 * 1.3)).collect();
            let chk = symmetrization_bound_check(g, &l, grid, 1e-8).unwrap();
            min_rho = min_rho.min(chk.rho);
            sym_ok &= chk.ok;
        }
    }
    outcome(
        worst_mass <= 1e-4 && min_rho >= -1e-8 && sym_ok,
        format!("max |mass - 1| {worst_mass:.2e}, min rho {min_rho:.2e}, symmetrization bound holds: {sym_ok}"),
    )
}

fn gamma_property() -> Outcome {
    let mut rng = rng(4);
    let mut min_gamma = f64::INFINITY;
    let mut all_inverse = true;
    for i in 0..1000 {
        let g = random_pd_sym_part(2 + i % 5, &mut rng);
        min_gamma = min_gamma.min(gamma_symmetrization(&g).unwrap());
        all_inverse &= check_inverse_pd_sym(&g).unwrap();
    }
    outcome(
        min_gamma >= 1.0 && all_inverse,
        format!("min gamma {min_gamma:.6}, inverse PD-sym-part on all: {all_inverse}"),
    )
}

fn sampler_oracle() -> Outcome {
    let bd = birth_death();
    let cyc = cycle3();
    let g_rev = full_killing_kernel(&bd.q, &killing()).unwrap().g;
    let g_cyc = full_killing_kernel(&cyc.q, &killing()).unwrap().g;
    let psd = PsdSampler::new(&g_rev).unwrap();
    let soup = LoopSoupSampler::new(&cyc, &killing()).unwrap();
    let soup2 = KPermanental { base: LoopSoupSampler::new(&cyc, &killing()).unwrap(), k: 2 };
    let grid = default_lambda_grid(&g_cyc);
    let mut rs = vec![
        ("psd", verify_laplace(&g_rev, &psd, 1.0, &default_lambda_grid(&g_rev), N, 51).unwrap()),
        ("loop_soup", verify_laplace(&g_cyc, &soup, 1.0, &grid, N, 52).unwrap()),
        ("k_fold", verify_laplace(&g_cyc, &soup2, 2.0, &grid, N, 53).unwrap()),
    ];

    let g_rk = ray_knight_kernel(&bd.q, 0, 1.0).unwrap().g;
    let chi2 = ConditionedChi2Sampler::new(&g_rk, 0, 1.0).unwrap();
    let samples = sample_batch(&chi2, N, 54, "acceptance");
    let star_grid = default_lambda_grid(&g_rk.delete_index(0));
    rs.push((
        "conditioned_chi2",
        verify_laplace_samples("laplace", &samples, &star_grid, 54, |lam| {
            permlab::density::conditional_laplace_exact(&g_rk, 0, 1.0, lam)
        })
        .unwrap(),
    ));

    let g_rc = ray_knight_kernel(&cyc.q, 0, 1.0).unwrap().g;
    let rej = RejectionSampler::new(&cyc, 0, 1.0, 1.0, Some(0.02), 1e-4).unwrap();
    let (samples, _) = rej.sample_batch(N, 55, "acceptance").unwrap();
    let full_grid: Vec<Vec<f64>> = default_lambda_grid(&g_rc)
        .into_iter()
        .map(|mut l| {
            l[0] = 0.0;
            l
        })
        .collect();
    rs.push((
        "rejection_band",
        verify_laplace_samples("laplace", &samples, &full_grid, 55, |lam| {
            permlab::density::conditional_laplace_band(&g_rc, 0, 0.98, 1.02, &lam[1..])
        })
        .unwrap(),
    ));

    let control = verify_laplace(&g_cyc.scale(1.1), &soup, 1.0, &grid, N, 52).unwrap();
    let samplers_ok = rs.iter().all(|(_, r)| r.pass);
    let mut o = reports(&rs);
    o.pass = samplers_ok && !control.pass && control.max_z > 3.0;
    o.detail.push_str(&format!("; perturbed control: max z {:.1}", control.max_z));
    o
}

fn two_sampler_agreement() -> Outcome {
    let bd = birth_death();
    let g = full_killing_kernel(&bd.q, &killing()).unwrap().g;
    let psd = PsdSampler::new(&g).unwrap();
    let soup = LoopSoupSampler::new(&bd, &killing()).unwrap();
    let a = sample_batch(&psd, N, 61, "psd");
    let b = sample_batch(&soup, N, 62, "soup");
    let ks = ks_per_coordinate(&a, &b);
    let max = ks.iter().cloned().fold(0.0, f64::max);
    outcome(max <= 0.01, format!("per-coordinate KS {ks:.4?}"))
}

fn dynkin() -> Outcome {
    let cyc = cycle3();
    let fs = [
        ("one", TestFunction::One),
        ("exp_linear", TestFunction::ExpLinear { lambda: vec![0.2, 0.1, 0.3] }),
        ("smoothstep", TestFunction::SmoothstepProduct { s: vec![2.0, 2.0, 2.0], eps: 1.0 }),
    ];
    let rs: Vec<(&str, Report)> =
        fs.iter().map(|(name, f)| (*name, verify_dynkin(&cyc, &killing(), 0, f, N, 71).unwrap())).collect();
    reports(&rs)
}

fn ray_knight() -> Outcome {
    let bd = birth_death();
    let cyc = cycle3();
    reports(&[
        ("r=0", verify_ray_knight(&bd, 0, 1.0, 0.0, N, RayKnightEnsemble::Auto, 0.01, 81).unwrap()),
        ("reversible r=1", verify_ray_knight(&bd, 0, 1.0, 1.0, N, RayKnightEnsemble::Auto, 0.02, 82).unwrap()),
        (
            "non-reversible r=1",
            verify_ray_knight(&cyc, 0, 1.0, 1.0, N, RayKnightEnsemble::Rejection { band: Some(0.02) }, 0.03, 83)
                .unwrap(),
        ),
    ])
}

fn eisenbaum() -> Outcome {
    let flip = MarkovModel::two_flip();
    let cyc = cycle3();
    let u2 = TestFunction::ExpLinear { lambda: vec![0.2, 0.3] };
    let u3 = TestFunction::ExpLinear { lambda: vec![0.2, 0.1, 0.3] };
    let h = |v: &[f64]| KillingRates::new(v.to_vec()).unwrap();
    reports(&[
        ("2-state uniform", verify_eisenbaum(&flip, &h(&[0.5, 0.5]), 0, 1.0, &u2, 20_000, 32, 91).unwrap()),
        ("2-state non-uniform", verify_eisenbaum(&flip, &h(&[0.5, 0.2]), 0, 1.0, &u2, 20_000, 32, 92).unwrap()),
        ("3-state uniform", verify_eisenbaum(&cyc, &h(&[0.5, 0.5, 0.5]), 0, 1.0, &u3, 20_000, 32, 93).unwrap()),
        ("3-state non-uniform", verify_eisenbaum(&cyc, &killing(), 0, 1.0, &u3, 20_000, 32, 94).unwrap()),
    ])
}

fn ward() -> Outcome {
    let u = TestFunction::ExpLinear { lambda: vec![0.2, 0.1, 0.3] };
    reports(&[
        ("exp_linear a=0 b=1", verify_ward(&cycle3(), &killing(), 0, 1, &u, 20_000, 16, 1e4, 101).unwrap()),
        ("one a=2 b=0", verify_ward(&cycle3(), &killing(), 2, 0, &TestFunction::One, 20_000, 16, 1e4, 102).unwrap()),
    ])
}

fn comparison() -> Outcome {
    let p0 = m(&[&[0.0, 0.2, 0.1], &[0.3, 0.0, 0.2], &[0.1, 0.1, 0.0]]);
    let p1 = m(&[&[0.1, 0.5, 0.3], &[0.4, 0.2, 0.3], &[0.3, 0.4, 0.2]]);
    let path = KernelPath::SubStochastic { p0, p1, s: 2.0 };
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let f = TestFunction::product_of_linear(3);
    let will = |x: f64| SquareMatrix::from_fn(3, |i, j| if i == j { 1.0 } else { x });
    let ss = TestFunction::SmoothstepProduct { s: vec![2.0, 2.0, 2.0], eps: 1.0 };
    let linear = KernelPath::Linear { g0: will(0.3), g1: will(0.5) };
    reports(&[
        ("kahane", check_kahane(&path, &f, 1, &grid, N, 111).unwrap()),
        ("kahane k=2", check_kahane(&path, &f, 2, &grid, N, 112).unwrap()),
        ("kahane smoothstep", check_kahane(&linear, &ss, 1, &grid, N, 113).unwrap()),
        ("slepian", check_slepian(&will(0.3), &will(0.5), N, None, 114).unwrap()),
    ])
}

fn tail_bound() -> Outcome {
    let grid = [1.0, 2.0, 4.0, 8.0];
    reports(&[
        ("reversible", check_tail_bound(&birth_death(), 0, 1.0, &grid, N, 121).unwrap()),
        ("non-reversible", check_tail_bound(&cycle3(), 0, 1.0, &grid, N, 122).unwrap()),
    ])
}

fn cover_time() -> Outcome {
    let n_rep = 20_000;
    let sym = MarkovModel::cycle(6, 0.5).unwrap();
    let biased = MarkovModel::cycle(6, 0.8).unwrap();
    let flip = estimate_cover_time(&MarkovModel::two_flip(), n_rep, 131).unwrap();
    let flip_z = (flip.metrics["t_cov"] - 1.0) / flip.metrics["t_cov_stderr"];
    let mut pass = flip_z.abs() <= 3.0;
    let mut detail = format!("2-flip t_cov {:.4} (z {flip_z:.2})", flip.metrics["t_cov"]);
    for (name, model) in [("symmetric 6-cycle", &sym), ("biased 6-cycle", &biased)] {
        let ratios: Vec<f64> = (0..3)
            .map(|s| {
                let r = estimate_cover_time(model, n_rep, 132 + s).unwrap();
                pass &= r.pass;
                r.metrics["symmetrization_ratio"]
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / 3.0;
        let spread = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
        pass &= spread <= 0.2;
        detail.push_str(&format!("; {name}: sandwich ok, ratio {mean:.4} (spread {:.1}%)", 100.0 * spread));
    }
    outcome(pass, detail)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = concat!(env!("CARGO_MANIFEST_DIR"), "/configs");
    let run = |args: &[&str]| -> (i32, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = cli::run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap())
    };
    let sample_cfg = format!("{configs}/sample-psd.json");
    let density_cfg = format!("{configs}/density-cycle-3.json");
    let verify_cfg = dir.path().join("suite.json");
    std::fs::write(
        &verify_cfg,
        format!(
            r#"{{"seed": 5, "experiments": [
                {{"kind": "dynkin", "model": {{"file": "{configs}/models/cycle-3.json"}}, "killing": [0.3, 0.1, 0.2], "a": 0, "n": 5000}},
                {{"kind": "rayknight", "model": {{"file": "{configs}/models/cycle-3.json"}}, "a": 0, "r": 1.0,
                  "ensemble": {{"method": "rejection", "band": 0.05}}, "n": 2000, "ks_threshold": 0.1}}
            ]}}"#
        ),
    )
    .unwrap();
    let verify_cfg = verify_cfg.to_str().unwrap().to_string();
    let mut same = true;
    for (cmd, cfg) in [("sample", &sample_cfg), ("density", &density_cfg), ("verify", &verify_cfg)] {
        let outputs: Vec<(i32, String)> =
            ["1", "3", "1"].iter().map(|t| run(&["permlab", "--threads", t, cmd, "--config", cfg])).collect();
        let strip = |s: &str| {
            let mut v: serde_json::Value = match serde_json::from_str(s) {
                Ok(v) => v,
                Err(_) => return s.to_string(),
            };
            v.as_object_mut().unwrap().remove("wall_time_s");
            v.to_string()
        };
        same &= outputs.iter().all(|(c, _)| *c == 0);
        same &= outputs.windows(2).all(|w| strip(&w[0].1) == strip(&w[1].1));
    }
    outcome(same, "sample, density and verify outputs identical across reruns and thread counts 1/3")
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("exponential marginal", exponential_marginal),
        ("cross-oracle density", cross_oracle_density),
        ("normalization, positivity, symmetrization bound", normalization_and_positivity),
        ("gamma >= 1 and inverse PD-sym-part", gamma_property),
        ("sampler Laplace oracle and negative control", sampler_oracle),
        ("reversible two-sampler agreement", two_sampler_agreement),
        ("Dynkin isomorphism", dynkin),
        ("Ray-Knight isomorphism", ray_knight),
        ("Eisenbaum isomorphism", eisenbaum),
        ("Ward identity", ward),
        ("Kahane and Slepian comparison", comparison),
        ("tail bound", tail_bound),
        ("cover-time sandwich and ratio", cover_time),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        println!(
            "{} criterion {:>2} {name} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64(),
            o.detail
        );
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
