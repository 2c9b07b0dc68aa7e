use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{is_irreducible, KillingRates, MarkovModel};
use crate::matrix::SquareMatrix;

/// Recorded paths are capped at this many jumps.
pub const RECORD_CAP: usize = 100_000;
const JUMP_LIMIT: u64 = 2_000_000_000;

/// Jump-hold description of a (possibly killed) generator.
#[derive(Debug, Clone)]
pub struct Ctmc {
    n: usize,
    rates: Vec<f64>,
    exit: Vec<f64>,
    kill: Vec<f64>,
}

impl Ctmc {
    /// Off-diagonal entries are jump rates; any row deficit goes to the cemetery.
    pub fn from_generator(q: &SquareMatrix) -> Result<Self> {
        let n = q.n();
        let scale = q.max_norm().max(1.0);
        let mut rates = vec![0.0; n * n];
        let mut exit = vec![0.0; n];
        let mut kill = vec![0.0; n];
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if i != j {
                    let r = q[(i, j)];
                    if r < -1e-12 * scale {
                        return Err(Error::InvalidRate(format!("negative jump rate at ({i},{j})")));
                    }
                    rates[i * n + j] = r.max(0.0);
                    off += r.max(0.0);
                }
            }
            let deficit = -q[(i, i)] - off;
            if deficit < -1e-9 * scale {
                return Err(Error::InvalidRate(format!("row {i} has positive sum")));
            }
            kill[i] = deficit.max(0.0);
            exit[i] = off + kill[i];
        }
        Ok(Self { n, rates, exit, kill })
    }

    pub fn from_model(model: &MarkovModel) -> Result<Self> {
        Self::from_generator(&model.q)
    }

    /// Generator Q − diag(h): killing through the cemetery state.
    pub fn killed(model: &MarkovModel, h: &KillingRates) -> Result<Self> {
        if h.0.len() != model.n() {
            return Err(Error::DimensionMismatch { expected: model.n(), got: h.0.len() });
        }
        let mut q = model.q.clone();
        for i in 0..model.n() {
            q[(i, i)] -= h.0[i];
        }
        Self::from_generator(&q)
    }

    /// Time reversal: generator Qᵀ when Q has stationary measure π (the dual w.r.t. π).
    pub fn reversed(model: &MarkovModel) -> Result<Self> {
        Self::from_generator(&model.q.transpose())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn exit_rate(&self, x: usize) -> f64 {
        self.exit[x]
    }

    pub fn kill_rate(&self, x: usize) -> f64 {
        self.kill[x]
    }

    pub fn holding(&self, x: usize, rng: &mut ChaCha8Rng) -> f64 {
        let e: f64 = rng.sample(Exp1);
        if self.exit[x] > 0.0 {
            e / self.exit[x]
        } else {
            f64::INFINITY
        }
    }

    /// Next state after leaving `x`; `None` is the cemetery.
    pub fn next_state(&self, x: usize, rng: &mut ChaCha8Rng) -> Option<usize> {
        let u = rng.random::<f64>() * self.exit[x];
        let row = &self.rates[x * self.n..(x + 1) * self.n];
        let mut acc = 0.0;
        let mut last = None;
        for (j, &r) in row.iter().enumerate() {
            if r > 0.0 {
                acc += r;
                last = Some(j);
                if u < acc {
                    return Some(j);
                }
            }
        }
        if self.kill[x] > 0.0 {
            None
        } else {
            last
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StoppingRule {
    Horizon {
        t: f64,
    },
    LocalTimeAt {
        a: usize,
        r: f64,
    },
    Covered,
    CoverReturn,
    Hit {
        j: usize,
    },
    /// Cemetery jump at rate h_x added to the exit rate.
    Killed {
        h: Vec<f64>,
    },
    /// Killed when Σ h_x L^x crosses an independent Exp(1) level.
    KilledClock {
        h: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Killed,
    Horizon,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start: usize,
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub terminal: Terminal,
    pub local_time: Vec<f64>,
    pub elapsed: f64,
    pub final_state: usize,
    pub jumps: u64,
}

fn check_state(n: usize, x: usize) -> Result<()> {
    if x >= n {
        return Err(Error::Domain(format!("state {x} out of range for {n} states")));
    }
    Ok(())
}

fn check_rates(n: usize, h: &[f64]) -> Result<()> {
    if h.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: h.len() });
    }
    if h.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidRate("killing rates must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Exact jump-hold simulation, clipping the last sojourn at the stopping instant.
pub fn simulate_ctmc(
    model: &MarkovModel,
    start: usize,
    stop: &StoppingRule,
    record: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let n = model.n();
    if !is_irreducible(&model.p) {
        return Err(Error::IrreducibleViolation("simulation needs an irreducible chain".into()));
    }
    check_state(n, start)?;
    let chain = match stop {
        StoppingRule::Killed { h } => {
            check_rates(n, h)?;
            Ctmc::killed(model, &KillingRates(h.clone()))?
        }
        StoppingRule::KilledClock { h } => {
            check_rates(n, h)?;
            Ctmc::from_model(model)?
        }
        StoppingRule::LocalTimeAt { a, r } => {
            check_state(n, *a)?;
            if !(*r >= 0.0) || !r.is_finite() {
                return Err(Error::Domain("local-time level must be finite and nonnegative".into()));
            }
            Ctmc::from_model(model)?
        }
        StoppingRule::Hit { j } => {
            check_state(n, *j)?;
            Ctmc::from_model(model)?
        }
        StoppingRule::Horizon { t } => {
            if !(*t >= 0.0) {
                return Err(Error::Domain("horizon must be nonnegative".into()));
            }
            Ctmc::from_model(model)?
        }
        _ => Ctmc::from_model(model)?,
    };
    run(&chain, start, stop, record, rng)
}

fn run(chain: &Ctmc, start: usize, stop: &StoppingRule, record: bool, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let n = chain.n();
    let mut lt = vec![0.0; n];
    let mut t = 0.0;
    let mut x = start;
    let mut visited = vec![false; n];
    visited[start] = true;
    let mut n_visited = 1;
    let mut covered = n == 1;
    let mut jumps = 0u64;
    let mut jump_times = Vec::new();
    let mut states = Vec::new();
    if record {
        states.push(start);
    }
    let clock_level: f64 = match stop {
        StoppingRule::KilledClock { .. } => rng.sample(Exp1),
        _ => f64::INFINITY,
    };
    let mut clock = 0.0;

    let done = |terminal, lt: Vec<f64>, t, x, jumps, jump_times, states| {
        Ok(Trajectory { start, jump_times, states, terminal, local_time: lt, elapsed: t, final_state: x, jumps })
    };

    // zero-time stops
    match stop {
        StoppingRule::Hit { j } if *j == start => return done(Terminal::Stopped, lt, t, x, jumps, jump_times, states),
        StoppingRule::Covered if covered => return done(Terminal::Stopped, lt, t, x, jumps, jump_times, states),
        _ => {}
    }

    loop {
        let d = chain.holding(x, rng);
        match stop {
            StoppingRule::Horizon { t: horizon } if t + d >= *horizon => {
                lt[x] += horizon - t;
                return done(Terminal::Horizon, lt, *horizon, x, jumps, jump_times, states);
            }
            StoppingRule::LocalTimeAt { a, r } if x == *a && lt[x] + d >= *r => {
                t += r - lt[x];
                lt[x] = *r;
                return done(Terminal::Stopped, lt, t, x, jumps, jump_times, states);
            }
            StoppingRule::KilledClock { h } if h[x] > 0.0 && clock + h[x] * d >= clock_level => {
                let s = (clock_level - clock) / h[x];
                lt[x] += s;
                t += s;
                return done(Terminal::Killed, lt, t, x, jumps, jump_times, states);
            }
            _ => {}
        }
        if !d.is_finite() {
            return Err(Error::Domain(format!("state {x} is absorbing; stopping rule never fires")));
        }
        lt[x] += d;
        t += d;
        if let StoppingRule::KilledClock { h } = stop {
            clock += h[x] * d;
        }
        let next = match chain.next_state(x, rng) {
            Some(y) => y,
            None => return done(Terminal::Killed, lt, t, x, jumps, jump_times, states),
        };
        x = next;
        jumps += 1;
        if jumps > JUMP_LIMIT {
            return Err(Error::HorizonTooShort(t));
        }
        if record && states.len() < RECORD_CAP {
            jump_times.push(t);
            states.push(x);
        }
        if !visited[x] {
            visited[x] = true;
            n_visited += 1;
            covered = n_visited == n;
        }
        match stop {
            StoppingRule::Hit { j } if x == *j => return done(Terminal::Stopped, lt, t, x, jumps, jump_times, states),
            StoppingRule::Covered if covered => return done(Terminal::Stopped, lt, t, x, jumps, jump_times, states),
            StoppingRule::CoverReturn if covered && x == start => {
                return done(Terminal::Stopped, lt, t, x, jumps, jump_times, states)
            }
            _ => {}
        }
    }
}

/// 𝓛 at the inverse local time τ_inv(r) at `a`, started from `a`.
pub fn inverse_local_time_field(model: &MarkovModel, a: usize, r: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let traj = simulate_ctmc(model, a, &StoppingRule::LocalTimeAt { a, r }, false, rng)?;
    Ok(traj.local_time)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverFunctionals {
    pub tau_cov: f64,
    pub tau_cov_plus: f64,
    pub tau_hit: Vec<f64>,
}

/// π-weighted cover, cover-and-return and hitting times along one path.
pub fn cover_and_hitting_functionals(
    model: &MarkovModel,
    start: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CoverFunctionals> {
    let n = model.n();
    if !is_irreducible(&model.p) {
        return Err(Error::IrreducibleViolation("cover times need an irreducible chain".into()));
    }
    check_state(n, start)?;
    let chain = Ctmc::from_model(model)?;
    let pi = &model.pi;
    let mut tau_hit = vec![f64::NAN; n];
    tau_hit[start] = 0.0;
    let mut remaining = n - 1;
    let mut x = start;
    let mut clock = 0.0;
    let mut tau_cov = if n == 1 { 0.0 } else { f64::NAN };
    loop {
        // π-weighted elapsed time: each sojourn at x counts π_x per unit time.
        let d = chain.holding(x, rng);
        if !d.is_finite() {
            return Err(Error::Domain(format!("state {x} is absorbing")));
        }
        clock += pi[x] * d;
        x = chain.next_state(x, rng).expect("unkilled chain has no cemetery");
        if tau_hit[x].is_nan() {
            tau_hit[x] = clock;
            remaining -= 1;
            if remaining == 0 {
                tau_cov = clock;
            }
        }
        if remaining == 0 && x == start {
            return Ok(CoverFunctionals { tau_cov, tau_cov_plus: clock, tau_hit });
        }
    }
}
