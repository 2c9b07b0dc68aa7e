use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::laplace::{default_lambda_grid, laplace_values};
use super::{weighted_path_integral, Comparison, KsCheck, Report};
use crate::density::{
    conditional_laplace_band, conditional_laplace_exact, conditioned_density, AngularGrid, TwistedSampler,
};
use crate::error::{Error, Result};
use crate::markov::{full_killing_kernel, ray_knight_kernel, KillingRates, MarkovModel};
use crate::matrix::SquareMatrix;
use crate::quad::gauss_legendre_on;
use crate::rng::try_par_replicates;
use crate::samplers::{
    inverse_local_time_field, sample_batch, ConditionedChi2Sampler, Ctmc, LoopSoupSampler, PermanentalSampler,
    RejectionSampler,
};
use crate::stats::{ks_per_coordinate, proportion, MCEstimate};
use crate::testfn::TestFunction;

fn check_state(model: &MarkovModel, a: usize) -> Result<()> {
    if a >= model.n() {
        return Err(Error::Domain(format!("state {a} out of range")));
    }
    Ok(())
}

fn column(rows: &[[f64; 3]], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

/// Dynkin: E[ℓ_a u(ℓ)] against the killed-path integral from `a`, forward and reversed.
pub fn verify_dynkin(
    model: &MarkovModel,
    h: &KillingRates,
    a: usize,
    u: &TestFunction,
    n_rep: usize,
    seed: u64,
) -> Result<Report> {
    check_state(model, a)?;
    u.validate(model.n())?;
    let g = full_killing_kernel(&model.q, h)?.g;
    let soup = LoopSoupSampler::new(model, h)?;
    let fwd = Ctmc::from_model(model)?;
    let rev = Ctmc::reversed(model)?;
    let hv = &h.0;

    let rows = try_par_replicates(seed, "dynkin", n_rep, |rng, _| -> Result<[f64; 3]> {
        let l = soup.sample(rng);
        let lhs = l[a] * u.eval(&l);
        let (rf, _) = weighted_path_integral(&fwd, a, &l, u, hv, Some(a), f64::INFINITY, rng)?;
        let (rr, _) = weighted_path_integral(&rev, a, &l, u, hv, Some(a), f64::INFINITY, rng)?;
        Ok([lhs, rf, rr])
    })?;
    let (lhs, rf, rr) = (column(&rows, 0), column(&rows, 1), column(&rows, 2));
    let diff = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
    let est = |x: &[f64]| MCEstimate::from_samples(x, seed);
    let (el, ef, er) = (est(&lhs), est(&rf), est(&rr));

    let mut report = Report::new("dynkin");
    report.push(Comparison::paired("lhs_vs_forward", &el, &ef, &est(&diff(&lhs, &rf))));
    report.push(Comparison::paired("lhs_vs_reversed", &el, &er, &est(&diff(&lhs, &rr))));
    report.push(Comparison::paired("forward_vs_reversed", &ef, &er, &est(&diff(&rf, &rr))));
    if matches!(u, TestFunction::One) {
        report.push(Comparison::against("lhs_vs_green_diagonal", &el, g[(a, a)]));
    }
    report.metric("g_aa", g[(a, a)]);
    Ok(report.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum RayKnightEnsemble {
    /// Chi-squared construction when the chain is reversible, rejection otherwise.
    #[default]
    Auto,
    Chi2,
    Rejection {
        band: Option<f64>,
    },
}

/// P(ℓ_* ∈ [0, t]^m) under the conditioned density, tensor Gauss–Legendre.
fn conditioned_box_probability(g: &SquareMatrix, a: usize, r: f64, t: f64) -> Result<f64> {
    let m = g.n() - 1;
    let (xs, ws) = gauss_legendre_on(20, 0.0, t);
    let grid = AngularGrid::new(32, false)?;
    let mut total = 0.0;
    let count = xs.len().pow(m as u32);
    for flat in 0..count {
        let mut rem = flat;
        let mut l = vec![0.0; m];
        let mut w = 1.0;
        for li in l.iter_mut() {
            let k = rem % xs.len();
            rem /= xs.len();
            *li = xs[k];
            w *= ws[k];
        }
        total += w * conditioned_density(g, a, r, &l, grid)?.value;
    }
    Ok(total)
}

/// Second Ray-Knight: 𝓛_{τ_inv(r)} + {ℓ | ℓ_a = 0} against {ℓ | ℓ_a = r}.
#[allow(clippy::too_many_arguments)]
pub fn verify_ray_knight(
    model: &MarkovModel,
    a: usize,
    h: f64,
    r: f64,
    n_rep: usize,
    ensemble: RayKnightEnsemble,
    ks_threshold: f64,
    seed: u64,
) -> Result<Report> {
    let n = model.n();
    check_state(model, a)?;
    if n < 2 {
        return Err(Error::Domain("Ray-Knight check needs at least two states".into()));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain("r must be nonnegative".into()));
    }
    let g = ray_knight_kernel(&model.q, a, h)?.g;
    let others: Vec<usize> = (0..n).filter(|&i| i != a).collect();
    let pinned = LoopSoupSampler::from_generator(&model.q.delete_index(a))?;

    let ens_a: Vec<Vec<f64>> = try_par_replicates(seed, "rayknight-a", n_rep, |rng, _| -> Result<Vec<f64>> {
        let lt = inverse_local_time_field(model, a, r, rng)?;
        let extra = pinned.sample(rng);
        Ok(others.iter().zip(&extra).map(|(&i, e)| lt[i] + e).collect())
    })?;

    let method = match ensemble {
        RayKnightEnsemble::Auto if model.is_reversible(1e-10) => RayKnightEnsemble::Chi2,
        RayKnightEnsemble::Auto => RayKnightEnsemble::Rejection { band: None },
        m => m,
    };
    let mut report = Report::new("rayknight");
    let (ens_b, band): (Vec<Vec<f64>>, Option<f64>) = match method {
        RayKnightEnsemble::Chi2 => {
            let s = ConditionedChi2Sampler::new(&g, a, r)?;
            (sample_batch(&s, n_rep, seed, "rayknight-b"), None)
        }
        RayKnightEnsemble::Rejection { band } => {
            let s = RejectionSampler::new(model, a, h, r, band, 1e-4)?;
            let (samples, stats) = s.sample_batch(n_rep, seed, "rayknight-b")?;
            report.metric("acceptance_rate", stats.rate);
            report.metric("acceptance_predicted", stats.predicted);
            report.metric("band", s.band);
            let drop_a = samples.into_iter().map(|v| others.iter().map(|&i| v[i]).collect()).collect();
            (drop_a, Some(s.band))
        }
        RayKnightEnsemble::Auto => unreachable!(),
    };

    report.push_ks(KsCheck::new("per_coordinate", ks_per_coordinate(&ens_a, &ens_b), ks_threshold));

    let grid = default_lambda_grid(&g.delete_index(a));
    for (i, lam) in grid.iter().enumerate().skip(1) {
        let ea = MCEstimate::from_samples(&laplace_values(&ens_a, lam), seed);
        let eb = MCEstimate::from_samples(&laplace_values(&ens_b, lam), seed);
        let exact = conditional_laplace_exact(&g, a, r, lam)?;
        let b_target = match band {
            Some(w) => conditional_laplace_band(&g, a, r - w, r + w, lam)?,
            None => exact,
        };
        report.push(Comparison::against(&format!("local_time_lt[{i}]"), &ea, exact));
        report.push(Comparison::against(&format!("conditioned_lt[{i}]"), &eb, b_target));
        report.push(Comparison::two_sided(&format!("ensembles_lt[{i}]"), &ea, &eb));
    }

    if n <= 3 && band.is_none() {
        let scale = others.iter().map(|&i| g[(i, i)]).sum::<f64>() / others.len() as f64;
        for (i, c) in [0.5, 1.0, 2.0].iter().enumerate() {
            let t = c * scale;
            let hits = ens_b.iter().filter(|v| v.iter().all(|x| *x <= t)).count();
            let est = proportion(hits, ens_b.len(), seed);
            let p = conditioned_box_probability(&g, a, r, t)?;
            report.push(Comparison::against(&format!("conditioned_density_box[{i}]"), &est, p));
        }
    }
    Ok(report.finish())
}

fn is_uniform(h: &[f64]) -> bool {
    h.iter().all(|x| *x == h[0])
}

fn complex_estimate(vals: &[Complex64], seed: u64) -> MCEstimate {
    let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
    let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
    MCEstimate::from_complex(&re, &im, seed)
}

fn imag_estimate(vals: &[Complex64], seed: u64) -> MCEstimate {
    let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
    MCEstimate::from_samples(&im, seed)
}

/// Paired real and imaginary comparisons of two complex-valued estimators.
fn push_complex(report: &mut Report, label: &str, lhs: &[Complex64], rhs: &[Complex64], seed: u64) {
    let d: Vec<Complex64> = lhs.iter().zip(rhs).map(|(x, y)| x - y).collect();
    report.push(Comparison::paired(
        label,
        &complex_estimate(lhs, seed),
        &complex_estimate(rhs, seed),
        &complex_estimate(&d, seed),
    ));
    report.push(Comparison::paired(
        &format!("{label}_imag"),
        &imag_estimate(lhs, seed),
        &imag_estimate(rhs, seed),
        &imag_estimate(&d, seed),
    ));
}

/// Eisenbaum's isomorphism for killing rates `h` (uniform or not).
///
/// The general form starts the chain at i with probability h_i/Σh; the uniform
/// form additionally runs the reversed chain from `a` up to an Exp(h) time.
#[allow(clippy::too_many_arguments)]
pub fn verify_eisenbaum(
    model: &MarkovModel,
    h: &KillingRates,
    a: usize,
    r: f64,
    u: &TestFunction,
    n_outer: usize,
    m_inner: usize,
    seed: u64,
) -> Result<Report> {
    let n = model.n();
    check_state(model, a)?;
    u.validate(n)?;
    if !(r > 0.0) {
        return Err(Error::Domain("Eisenbaum check needs r > 0".into()));
    }
    if h.0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.0.len() });
    }
    let hv = &h.0;
    let total = h.total();
    if !(total > 0.0) {
        return Err(Error::SingularKilling("Eisenbaum check needs some killing".into()));
    }
    let mut q_h = model.q.clone();
    for i in 0..n {
        q_h[(i, i)] -= hv[i];
    }
    let twisted = TwistedSampler::new(&q_h)?;
    let fwd = Ctmc::from_model(model)?;
    let rev = Ctmc::reversed(model)?;
    let uniform = is_uniform(hv);
    let start_cdf: Vec<f64> = hv
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x / total;
            Some(*acc)
        })
        .collect();
    let sr = r.sqrt();
    let m = m_inner.max(1);

    let rows = try_par_replicates(seed, "eisenbaum", n_outer, |rng, _| -> Result<[Complex64; 3]> {
        use rand::Rng;
        let (phi, w) = twisted.sample(rng);
        let w = w * twisted.det_ratio;
        let x: Vec<f64> = phi.iter().map(|p| (p + sr).norm_sqr()).collect();
        let lhs = (phi[a] + sr) / sr * u.eval(&x);
        let mut general = 0.0;
        for _ in 0..m {
            let v = rng.random::<f64>();
            let start = start_cdf.partition_point(|c| *c <= v).min(n - 1);
            general += weighted_path_integral(&fwd, start, &x, u, hv, Some(a), f64::INFINITY, rng)?.0;
        }
        general *= total / m as f64;
        let mut reversed = 0.0;
        if uniform {
            for _ in 0..m {
                reversed += weighted_path_integral(&rev, a, &x, u, hv, None, f64::INFINITY, rng)?.0;
            }
            reversed *= hv[0] / m as f64;
        }
        Ok([lhs * w, w * general, w * reversed])
    })?;
    let lhs: Vec<Complex64> = rows.iter().map(|r| r[0]).collect();
    let general: Vec<Complex64> = rows.iter().map(|r| r[1]).collect();
    let mut report = Report::new("eisenbaum");
    push_complex(&mut report, "lhs_vs_general", &lhs, &general, seed);
    if uniform {
        let reversed: Vec<Complex64> = rows.iter().map(|r| r[2]).collect();
        push_complex(&mut report, "lhs_vs_reversed", &lhs, &reversed, seed);
    }
    report.metric("lhs_imag_residue", complex_estimate(&lhs, seed).imag_residue);
    report.metric("uniform_killing", uniform as u8 as f64);
    Ok(report.finish())
}

/// Ward identities in killed form:
/// [φ_a φ̄_b u(|φ|²)]_{μ_h} = [∫ E_b u(|φ|² + 𝓛_t) e^{−Σh𝓛_t} 1{X_t = a} dt]_{μ_h},
/// and the conjugate version with the reversed chain.
#[allow(clippy::too_many_arguments)]
pub fn verify_ward(
    model: &MarkovModel,
    h: &KillingRates,
    a: usize,
    b: usize,
    u: &TestFunction,
    n_rep: usize,
    m_inner: usize,
    t_max: f64,
    seed: u64,
) -> Result<Report> {
    let n = model.n();
    check_state(model, a)?;
    check_state(model, b)?;
    u.validate(n)?;
    let g = full_killing_kernel(&model.q, h)?.g;
    let hv = &h.0;
    let mut q_h = model.q.clone();
    for i in 0..n {
        q_h[(i, i)] -= hv[i];
    }
    let twisted = TwistedSampler::new(&q_h)?;
    let fwd = Ctmc::from_model(model)?;
    let rev = Ctmc::reversed(model)?;
    let tail_scale = (0..n).map(|x| g[(x, a)]).fold(0.0, f64::max);
    let m = m_inner.max(1);

    let rows = try_par_replicates(seed, "ward", n_rep, |rng, _| -> Result<([Complex64; 4], f64)> {
        let (phi, w) = twisted.sample(rng);
        let w = w * twisted.det_ratio;
        let x: Vec<f64> = phi.iter().map(|p| p.norm_sqr()).collect();
        let ux = u.eval(&x);
        let lhs1 = phi[a] * phi[b].conj() * ux;
        let lhs2 = phi[a].conj() * phi[b] * ux;
        let (mut r1, mut r2, mut tail) = (0.0, 0.0, 0.0);
        for _ in 0..m {
            let (v, wt) = weighted_path_integral(&fwd, b, &x, u, hv, Some(a), t_max, rng)?;
            r1 += v;
            tail += wt;
            let (v, wt) = weighted_path_integral(&rev, b, &x, u, hv, Some(a), t_max, rng)?;
            r2 += v;
            tail += wt;
        }
        let mf = m as f64;
        Ok(([lhs1 * w, w * (r1 / mf), lhs2 * w, w * (r2 / mf)], tail / (2.0 * mf)))
    })?;
    let tail = rows.iter().map(|r| r.1).sum::<f64>() / rows.len().max(1) as f64 * tail_scale;
    if tail > 1e-6 {
        return Err(Error::HorizonTooShort(tail));
    }
    let col = |k: usize| -> Vec<Complex64> { rows.iter().map(|r| r.0[k]).collect() };
    let mut report = Report::new("ward");
    push_complex(&mut report, "first_identity", &col(0), &col(1), seed);
    push_complex(&mut report, "second_identity", &col(2), &col(3), seed);
    if matches!(u, TestFunction::One) {
        report.push(Comparison::against("first_lhs_vs_green", &complex_estimate(&col(0), seed), g[(b, a)]));
        report.push(Comparison::against("second_rhs_vs_green", &complex_estimate(&col(3), seed), g[(a, b)]));
    }
    report.metric("truncation_tail", tail);
    report.metric("green_ba", g[(b, a)]);
    Ok(report.finish())
}
