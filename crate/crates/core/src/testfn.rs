//! The catalog of test functions u : ℝ₊ⁿ → ℝ used by the verifiers.
//!
//! Besides evaluation, each kind knows the sign of the two derivative
//! expressions that the comparison lemma cares about, and how to integrate
//! itself along a ray `t ↦ u(x + t e_a) e^{−ct}`, which is what a sojourn of
//! the chain at state `a` contributes to a local-time functional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::gauss_legendre_on;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    One,
    /// e^{−⟨λ, l⟩}, λ ≥ 0.
    ExpLinear {
        lambda: Vec<f64>,
    },
    /// Σ c Π l_i^{p_i}, total degree ≤ 4.
    Poly {
        terms: Vec<Monomial>,
    },
    /// Π g_ε(l_i − s_i) with the quintic smoothstep g_ε.
    SmoothstepProduct {
        s: Vec<f64>,
        eps: f64,
    },
    /// Σ_{i<j} −s_ij log(1 + l_i + l_j) + Σ_i s_ii 2n e^{l_i}.
    LogBarrier {
        signs: Vec<Vec<f64>>,
    },
}

/// Sign of an expression over all of ℝ₊ⁿ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignClass {
    Zero,
    NonNeg,
    NonPos,
    Unknown,
}

impl SignClass {
    pub fn of_coefficients(cs: impl IntoIterator<Item = f64>) -> Self {
        let (mut pos, mut neg) = (false, false);
        for c in cs {
            pos |= c > 0.0;
            neg |= c < 0.0;
        }
        match (pos, neg) {
            (false, false) => SignClass::Zero,
            (true, false) => SignClass::NonNeg,
            (false, true) => SignClass::NonPos,
            (true, true) => SignClass::Unknown,
        }
    }

    pub fn negate(self) -> Self {
        match self {
            SignClass::NonNeg => SignClass::NonPos,
            SignClass::NonPos => SignClass::NonNeg,
            s => s,
        }
    }

    /// Whether an expression of sign `self` multiplied by one of sign `other`
    /// is certainly ≥ 0.
    pub fn product_nonneg(self, other: SignClass) -> bool {
        use SignClass::*;
        matches!((self, other), (Zero, _) | (_, Zero) | (NonNeg, NonNeg) | (NonPos, NonPos))
    }
}

/// g_ε(x): 1 for x < 0, 1 − 10t³ + 15t⁴ − 6t⁵ with t = x/ε on [0, ε), 0 after.
pub fn smoothstep(x: f64, eps: f64) -> f64 {
    if x < 0.0 {
        1.0
    } else if x >= eps {
        0.0
    } else {
        let t = x / eps;
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// ∫₀^d t^m e^{−ct} dt.
fn power_exp_integral(m: u32, c: f64, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let x = c * d;
    if x.abs() < 1.0 {
        // Σ_j (−c)^j d^{m+j+1} / (j! (m+j+1))
        let mut sum = 0.0;
        let mut coef = d.powi(m as i32 + 1);
        for j in 0..60 {
            let term = coef / (m + j + 1) as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
            coef *= -x / (j + 1) as f64;
        }
        sum
    } else {
        let mut partial = 0.0;
        let mut term = 1.0;
        for k in 0..=m {
            if k > 0 {
                term *= x / k as f64;
            }
            partial += term;
        }
        let fact: f64 = (1..=m).map(|k| k as f64).product();
        fact / c.powi(m as i32 + 1) * (1.0 - (-x).exp() * partial)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Composite Gauss–Legendre for ∫_lo^hi f(t) e^{−ct} dt with panels of
/// length at most `max(1/c, 1)`.
fn gl_weighted(f: impl Fn(f64) -> f64, lo: f64, hi: f64, c: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let panels = (((hi - lo) * c.abs().max(1.0)).ceil() as usize).clamp(1, 10_000);
    let h = (hi - lo) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * h;
        let (x, w) = gauss_legendre_on(8, a, a + h);
        s += x.iter().zip(&w).map(|(t, w)| w * f(*t) * (-c * t).exp()).sum::<f64>();
    }
    s
}

impl TestFunction {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("test function: {m}")));
        match self {
            TestFunction::One => Ok(()),
            TestFunction::ExpLinear { lambda } => {
                if lambda.len() != n {
                    return bad("lambda has the wrong length");
                }
                if lambda.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return bad("lambda must be finite and nonnegative");
                }
                Ok(())
            }
            TestFunction::Poly { terms } => {
                for t in terms {
                    if t.powers.len() != n {
                        return bad("monomial has the wrong number of powers");
                    }
                    if t.powers.iter().sum::<u32>() > 4 {
                        return bad("polynomial degree exceeds 4");
                    }
                    if !t.coef.is_finite() {
                        return bad("non-finite coefficient");
                    }
                }
                Ok(())
            }
            TestFunction::SmoothstepProduct { s, eps } => {
                if s.len() != n {
                    return bad("thresholds have the wrong length");
                }
                if !(*eps > 0.0) || s.iter().any(|x| !(*x >= 0.0)) {
                    return bad("smoothstep needs eps > 0 and s >= 0");
                }
                Ok(())
            }
            TestFunction::LogBarrier { signs } => {
                if signs.len() != n || signs.iter().any(|r| r.len() != n) {
                    return bad("sign pattern must be n x n");
                }
                if signs.iter().flatten().any(|s| *s != 1.0 && *s != -1.0) {
                    return bad("signs must be +1 or -1");
                }
                Ok(())
            }
        }
    }

    /// Π_i (1 + l_i) expanded; nonnegative coefficients, degree n.
    pub fn product_of_linear(n: usize) -> Self {
        let terms = (0..1u32 << n)
            .map(|mask| Monomial { coef: 1.0, powers: (0..n).map(|i| (mask >> i) & 1).collect() })
            .collect();
        TestFunction::Poly { terms }
    }

    /// The linear function l ↦ l_i.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut powers = vec![0; n];
        powers[i] = 1;
        TestFunction::Poly { terms: vec![Monomial { coef: 1.0, powers }] }
    }

    pub fn eval(&self, l: &[f64]) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::ExpLinear { lambda } => (-lambda.iter().zip(l).map(|(a, b)| a * b).sum::<f64>()).exp(),
            TestFunction::Poly { terms } => terms
                .iter()
                .map(|t| t.coef * t.powers.iter().zip(l).map(|(p, x)| x.powi(*p as i32)).product::<f64>())
                .sum(),
            TestFunction::SmoothstepProduct { s, eps } => {
                s.iter().zip(l).map(|(si, li)| smoothstep(li - si, *eps)).product()
            }
            TestFunction::LogBarrier { signs } => {
                let n = l.len();
                let mut v = 0.0;
                for i in 0..n {
                    v += signs[i][i] * 2.0 * n as f64 * l[i].exp();
                    for j in i + 1..n {
                        v -= signs[i][j] * (1.0 + l[i] + l[j]).ln();
                    }
                }
                v
            }
        }
    }

    /// Whether |u| ≤ 1 everywhere on ℝ₊ⁿ.
    pub fn bounded_by_one(&self) -> bool {
        matches!(self, TestFunction::One | TestFunction::ExpLinear { .. } | TestFunction::SmoothstepProduct { .. })
    }

    /// ∫₀^d u(x + t e_a) e^{−ct} dt.
    pub fn ray_integral(&self, x: &[f64], a: usize, d: f64, c: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        match self {
            TestFunction::One => power_exp_integral(0, c, d),
            TestFunction::ExpLinear { lambda } => self.eval(x) * power_exp_integral(0, c + lambda[a], d),
            TestFunction::Poly { terms } => {
                let mut s = 0.0;
                for t in terms {
                    let rest: f64 = t
                        .powers
                        .iter()
                        .zip(x)
                        .enumerate()
                        .filter(|(i, _)| *i != a)
                        .map(|(_, (p, xi))| xi.powi(*p as i32))
                        .product();
                    let pa = t.powers[a];
                    // (x_a + t)^p = Σ_m C(p,m) x_a^{p−m} t^m
                    let mut ray = 0.0;
                    for m in 0..=pa {
                        ray += binomial(pa, m) * x[a].powi((pa - m) as i32) * power_exp_integral(m, c, d);
                    }
                    s += t.coef * rest * ray;
                }
                s
            }
            TestFunction::SmoothstepProduct { s, eps } => {
                let rest: f64 = (0..x.len()).filter(|&i| i != a).map(|i| smoothstep(x[i] - s[i], *eps)).product();
                if rest == 0.0 {
                    return 0.0;
                }
                // g(x_a + t − s_a) is 1 before t0, a quintic on [t0, t0 + ε), 0 after
                let t0 = s[a] - x[a];
                let flat_end = t0.clamp(0.0, d);
                let ramp_end = (t0 + eps).clamp(0.0, d);
                let flat = power_exp_integral(0, c, flat_end);
                let ramp = gl_weighted(|t| smoothstep(x[a] + t - s[a], *eps), flat_end, ramp_end, c);
                rest * (flat + ramp)
            }
            TestFunction::LogBarrier { .. } => {
                let y = std::cell::RefCell::new(x.to_vec());
                gl_weighted(
                    |t| {
                        let mut y = y.borrow_mut();
                        y[a] = x[a] + t;
                        self.eval(&y)
                    },
                    0.0,
                    d,
                    c,
                )
            }
        }
    }

    /// Sign over ℝ₊ⁿ of k ∂_i u + l_i ∂_ii u.
    pub fn diagonal_sign(&self, i: usize, k: u32) -> SignClass {
        match self {
            TestFunction::One => SignClass::Zero,
            TestFunction::ExpLinear { lambda } => {
                if lambda[i] == 0.0 {
                    SignClass::Zero
                } else {
                    SignClass::Unknown
                }
            }
            TestFunction::Poly { terms } => SignClass::of_coefficients(terms.iter().map(|t| {
                let p = t.powers[i] as f64;
                t.coef * p * (k as f64 + p - 1.0)
            })),
            TestFunction::SmoothstepProduct { .. } => SignClass::Unknown,
            TestFunction::LogBarrier { signs } => {
                if signs[i][i] > 0.0 {
                    SignClass::NonNeg
                } else {
                    SignClass::NonPos
                }
            }
        }
    }

    /// Sign over ℝ₊ⁿ of ∂_ij u, i ≠ j.
    pub fn mixed_sign(&self, i: usize, j: usize) -> SignClass {
        match self {
            TestFunction::One => SignClass::Zero,
            TestFunction::ExpLinear { lambda } => SignClass::of_coefficients([lambda[i] * lambda[j]]),
            TestFunction::Poly { terms } => {
                SignClass::of_coefficients(terms.iter().map(|t| t.coef * t.powers[i] as f64 * t.powers[j] as f64))
            }
            TestFunction::SmoothstepProduct { .. } => SignClass::NonNeg,
            TestFunction::LogBarrier { signs } => {
                let s = signs[i.min(j)][i.max(j)];
                if s > 0.0 {
                    SignClass::NonNeg
                } else {
                    SignClass::NonPos
                }
            }
        }
    }
}
