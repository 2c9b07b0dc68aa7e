//! JSON experiment configurations and their resolution into numerical objects.
//!
//! Every optional field is filled in by [`Experiment::materialize`] so that the
//! echoed config in a result record reruns to the same numbers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::AngularGrid;
use crate::error::{Error, Result};
use crate::markov::{full_killing_kernel, ray_knight_kernel, KillingRates, MarkovModel, MarkovModelJson};
use crate::matrix::SquareMatrix;
use crate::samplers::{
    default_band, AcceptanceStats, ConditionedChi2Sampler, KPermanental, LoopSoupSampler, PermanentalSampler,
    Provenance, RejectionSampler,
};
use crate::testfn::TestFunction;
use crate::verify::{self, KernelPath, RayKnightEnsemble, Report};

/// A chain given inline, by file, or by a built-in family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Builtin { builtin: Builtin },
    File { file: PathBuf },
    Inline(MarkovModelJson),
}

impl PartialEq for MarkovModelJson {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.pi == other.pi && self.labels == other.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Builtin {
    TwoFlip,
    /// Walk on a cycle stepping forward with probability `forward`.
    Cycle {
        n: usize,
        forward: f64,
    },
}

impl ModelSpec {
    pub fn resolve(&self, base: &Path) -> Result<MarkovModel> {
        match self {
            ModelSpec::Builtin { builtin: Builtin::TwoFlip } => Ok(MarkovModel::two_flip()),
            ModelSpec::Builtin { builtin: Builtin::Cycle { n, forward } } => MarkovModel::cycle(*n, *forward),
            ModelSpec::File { file } => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path)?;
                if path.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str::<MarkovModelJson>(&text)?.into_model()
                } else {
                    MarkovModel::new(SquareMatrix::parse_csv(&text)?)
                }
            }
            ModelSpec::Inline(json) => json.clone().into_model(),
        }
    }
}

/// A kernel given as rows, by file, or as the Green kernel of a killed chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    File { file: PathBuf },
    Green { model: ModelSpec, killing: Vec<f64> },
    Rows(SquareMatrix),
}

impl KernelSpec {
    pub fn resolve(&self, base: &Path) -> Result<SquareMatrix> {
        match self {
            KernelSpec::File { file } => SquareMatrix::load(&base.join(file)),
            KernelSpec::Green { model, killing } => {
                let m = model.resolve(base)?;
                Ok(full_killing_kernel(&m.q, &KillingRates::new(killing.clone())?)?.g)
            }
            KernelSpec::Rows(m) => Ok(m.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    GaussianPsd,
    LoopSoup,
    ConditionedChi2,
    RejectionBand,
}

/// What to sample: a kernel (or killed chain) and a sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSetup {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killing: Option<Vec<f64>>,
    pub sampler: SamplerKind,
    #[serde(default = "one_usize")]
    pub k: usize,
    /// Conditioning state and level for the conditioned samplers.
    #[serde(default)]
    pub a: usize,
    #[serde(default)]
    pub r: f64,
    /// Killing rate at `a` for the rejection sampler.
    #[serde(default = "one_f64")]
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<f64>,
}

pub type Oracle = Box<dyn Fn(&[f64]) -> Result<f64> + Sync>;

/// A resolved sampler with the exact Laplace transform it should have.
pub struct ResolvedSampler {
    /// Proposal sampler when `rejection` is set.
    pub sampler: Box<dyn PermanentalSampler>,
    pub oracle: Oracle,
    /// Kernel whose diagonal sets the λ-grid scale.
    pub scale_kernel: SquareMatrix,
    pub dim: usize,
    pub rejection: Option<RejectionSampler>,
}

impl SamplerSetup {
    fn kernel(&self, base: &Path) -> Result<(SquareMatrix, Option<MarkovModel>)> {
        match (&self.kernel, &self.model) {
            (Some(k), _) => Ok((k.resolve(base)?, None)),
            (None, Some(m)) => {
                let model = m.resolve(base)?;
                let h = self.killing.clone().ok_or_else(|| Error::Config("a model needs killing rates".into()))?;
                let g = full_killing_kernel(&model.q, &KillingRates::new(h)?)?.g;
                Ok((g, Some(model)))
            }
            (None, None) => Err(Error::Config("sampler setup needs a kernel or a model".into())),
        }
    }

    fn materialize(&mut self, base: &Path) -> Result<()> {
        if self.sampler == SamplerKind::RejectionBand && self.band.is_none() {
            let model = self.model.as_ref().ok_or_else(|| Error::Config("rejection needs a model".into()))?;
            let m = model.resolve(base)?;
            let g = ray_knight_kernel(&m.q, self.a, self.h)?.g;
            self.band = Some(default_band(self.r, g[(self.a, self.a)]));
        }
        Ok(())
    }

    pub fn resolve(&self, base: &Path) -> Result<ResolvedSampler> {
        let k = self.k.max(1);
        match self.sampler {
            SamplerKind::GaussianPsd | SamplerKind::LoopSoup => {
                let (g, model) = self.kernel(base)?;
                let base_sampler: Box<dyn PermanentalSampler> = match (self.sampler, &model) {
                    (SamplerKind::GaussianPsd, _) => Box::new(crate::samplers::PsdSampler::new(&g)?),
                    (_, Some(m)) => Box::new(LoopSoupSampler::new(
                        m,
                        &KillingRates::new(self.killing.clone().unwrap_or_default())?,
                    )?),
                    (_, None) => Box::new(LoopSoupSampler::from_kernel(&g)?),
                };
                let dim = g.n();
                let gk = g.clone();
                let sampler: Box<dyn PermanentalSampler> =
                    if k == 1 { base_sampler } else { Box::new(KPermanental { base: base_sampler, k }) };
                Ok(ResolvedSampler {
                    sampler,
                    oracle: Box::new(move |lam| crate::density::laplace_transform_exact(&gk, lam, k as f64)),
                    scale_kernel: g,
                    dim,
                    rejection: None,
                })
            }
            SamplerKind::ConditionedChi2 => {
                let (g, _) = self.kernel(base)?;
                let s = ConditionedChi2Sampler::new(&g, self.a, self.r)?;
                let (gk, a, r) = (g.clone(), self.a, self.r);
                Ok(ResolvedSampler {
                    dim: g.n() - 1,
                    sampler: Box::new(s),
                    oracle: Box::new(move |lam| crate::density::conditional_laplace_exact(&gk, a, r, lam)),
                    scale_kernel: g.delete_index(self.a),
                    rejection: None,
                })
            }
            SamplerKind::RejectionBand => {
                let model = self
                    .model
                    .as_ref()
                    .ok_or_else(|| Error::Config("rejection needs a model".into()))?
                    .resolve(base)?;
                let s = RejectionSampler::new(&model, self.a, self.h, self.r, self.band, 1e-4)?;
                let g = ray_knight_kernel(&model.q, self.a, self.h)?.g;
                let (gk, a, lo, hi) = (g.clone(), self.a, self.r - s.band, self.r + s.band);
                let others: Vec<usize> = (0..g.n()).filter(|&i| i != a).collect();
                Ok(ResolvedSampler {
                    dim: g.n(),
                    sampler: Box::new(LoopSoupSampler::new(&model, &KillingRates::at(model.n(), a, self.h)?)?),
                    oracle: Box::new(move |lam| {
                        if lam[a] != 0.0 {
                            return Err(Error::Config(
                                "the band oracle needs lambda = 0 at the conditioned state".into(),
                            ));
                        }
                        let star: Vec<f64> = others.iter().map(|&i| lam[i]).collect();
                        crate::density::conditional_laplace_band(&gk, a, lo, hi, &star)
                    }),
                    scale_kernel: g,
                    rejection: Some(s),
                })
            }
        }
    }
}

impl ResolvedSampler {
    pub fn provenance(&self) -> Provenance {
        match self.rejection {
            Some(_) => Provenance::RejectionBand,
            None => self.sampler.provenance(),
        }
    }

    pub fn draw(&self, n: usize, seed: u64, tag: &str) -> Result<(Vec<Vec<f64>>, Option<AcceptanceStats>)> {
        match &self.rejection {
            Some(rej) => rej.sample_batch(n, seed, tag).map(|(s, a)| (s, Some(a))),
            None => Ok((crate::samplers::sample_batch(&*self.sampler, n, seed, tag), None)),
        }
    }
}

fn default_grid(r: &ResolvedSampler, setup: &SamplerSetup) -> Vec<Vec<f64>> {
    let mut grid = verify::default_lambda_grid(&r.scale_kernel);
    if r.rejection.is_some() {
        for lam in grid.iter_mut() {
            lam[setup.a] = 0.0;
        }
    }
    grid
}

fn one_usize() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn default_n() -> usize {
    100_000
}
fn default_inner() -> usize {
    32
}
fn default_t_max() -> f64 {
    1.0e4
}
fn default_true() -> bool {
    true
}
fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}
fn default_tail_grid() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn default_ks() -> f64 {
    0.02
}
fn one_fn() -> TestFunction {
    TestFunction::One
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Laplace {
        #[serde(flatten)]
        setup: SamplerSetup,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda_grid: Option<Vec<Vec<f64>>>,
        /// Negative control: compare against the oracle of (1 + perturb)·G.
        #[serde(default)]
        perturb: f64,
    },
    Lejan {
        kernel: KernelSpec,
        #[serde(default = "one_fn")]
        function: TestFunction,
        #[serde(default = "one_usize")]
        k: usize,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_true")]
        quadrature: bool,
    },
    Dynkin {
        model: ModelSpec,
        killing: Vec<f64>,
        a: usize,
        #[serde(default = "one_fn")]
        function: TestFunction,
        #[serde(default = "default_n")]
        n: usize,
    },
    Rayknight {
        model: ModelSpec,
        a: usize,
        #[serde(default = "one_f64")]
        h: f64,
        r: f64,
        #[serde(default)]
        ensemble: RayKnightEnsemble,
        #[serde(default = "default_ks")]
        ks_threshold: f64,
        #[serde(default = "default_n")]
        n: usize,
    },
    Eisenbaum {
        model: ModelSpec,
        killing: Vec<f64>,
        a: usize,
        r: f64,
        #[serde(default = "one_fn")]
        function: TestFunction,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_inner")]
        m_inner: usize,
    },
    Ward {
        model: ModelSpec,
        killing: Vec<f64>,
        a: usize,
        b: usize,
        #[serde(default = "one_fn")]
        function: TestFunction,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_inner")]
        m_inner: usize,
        #[serde(default = "default_t_max")]
        t_max: f64,
    },
    Kahane {
        path: KernelPath,
        function: TestFunction,
        #[serde(default = "one_usize")]
        k: usize,
        #[serde(default = "default_alpha_grid")]
        alpha_grid: Vec<f64>,
        #[serde(default = "default_n")]
        n: usize,
    },
    Slepian {
        g0: KernelSpec,
        g1: KernelSpec,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x_grid: Option<Vec<f64>>,
    },
    Tail {
        model: ModelSpec,
        #[serde(default)]
        a: usize,
        #[serde(default = "one_f64")]
        r: f64,
        #[serde(default = "default_tail_grid")]
        lambda_grid: Vec<f64>,
        #[serde(default = "default_n")]
        n: usize,
    },
    Cover {
        model: ModelSpec,
        #[serde(default = "default_n")]
        n: usize,
        /// Known cover time to check against, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_t_cov: Option<f64>,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Laplace { .. } => "laplace",
            Experiment::Lejan { .. } => "lejan",
            Experiment::Dynkin { .. } => "dynkin",
            Experiment::Rayknight { .. } => "rayknight",
            Experiment::Eisenbaum { .. } => "eisenbaum",
            Experiment::Ward { .. } => "ward",
            Experiment::Kahane { .. } => "kahane",
            Experiment::Slepian { .. } => "slepian",
            Experiment::Tail { .. } => "tail",
            Experiment::Cover { .. } => "cover",
        }
    }

    /// Fill in data-dependent defaults so the echo is complete.
    pub fn materialize(&mut self, base: &Path) -> Result<()> {
        match self {
            Experiment::Laplace { setup, lambda_grid, .. } => {
                setup.materialize(base)?;
                if lambda_grid.is_none() {
                    *lambda_grid = Some(default_grid(&setup.resolve(base)?, setup));
                }
            }
            Experiment::Slepian { g0, x_grid, .. } => {
                if x_grid.is_none() {
                    let g = g0.resolve(base)?;
                    let md = g.diagonal().iter().sum::<f64>() / g.n() as f64;
                    *x_grid = Some([0.25, 0.5, 1.0, 2.0, 3.0, 4.0].iter().map(|c| c * md).collect());
                }
            }
            Experiment::Rayknight { ensemble: RayKnightEnsemble::Rejection { band }, model, a, h, r, .. }
                if band.is_none() =>
            {
                let m = model.resolve(base)?;
                let g = ray_knight_kernel(&m.q, *a, *h)?.g;
                *band = Some(default_band(*r, g[(*a, *a)]));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn run(&self, base: &Path, seed: u64) -> Result<Report> {
        match self {
            Experiment::Laplace { setup, n, lambda_grid, perturb } => {
                let r = setup.resolve(base)?;
                let grid = match lambda_grid {
                    Some(g) => g.clone(),
                    None => default_grid(&r, setup),
                };
                for lam in &grid {
                    if lam.len() != r.dim {
                        return Err(Error::DimensionMismatch { expected: r.dim, got: lam.len() });
                    }
                }
                if *perturb != 0.0 && !matches!(setup.sampler, SamplerKind::GaussianPsd | SamplerKind::LoopSoup) {
                    return Err(Error::Config("perturb applies to unconditioned samplers only".into()));
                }
                let (samples, acceptance) = r.draw(*n, seed, "laplace")?;
                // the oracle of c·G is the oracle of G at c·λ
                let c = 1.0 + perturb;
                let mut report = verify::verify_laplace_samples("laplace", &samples, &grid, seed, |lam| {
                    let scaled: Vec<f64> = lam.iter().map(|x| x * c).collect();
                    (r.oracle)(&scaled)
                })?;
                if let Some(acc) = acceptance {
                    report.metric("acceptance_rate", acc.rate);
                    report.metric("acceptance_predicted", acc.predicted);
                }
                Ok(report)
            }
            Experiment::Lejan { kernel, function, k, n, quadrature } => {
                verify::verify_lejan(&kernel.resolve(base)?, function, *k, *n, seed, *quadrature)
            }
            Experiment::Dynkin { model, killing, a, function, n } => verify::verify_dynkin(
                &model.resolve(base)?,
                &KillingRates::new(killing.clone())?,
                *a,
                function,
                *n,
                seed,
            ),
            Experiment::Rayknight { model, a, h, r, ensemble, ks_threshold, n } => {
                verify::verify_ray_knight(&model.resolve(base)?, *a, *h, *r, *n, *ensemble, *ks_threshold, seed)
            }
            Experiment::Eisenbaum { model, killing, a, r, function, n, m_inner } => verify::verify_eisenbaum(
                &model.resolve(base)?,
                &KillingRates::new(killing.clone())?,
                *a,
                *r,
                function,
                *n,
                *m_inner,
                seed,
            ),
            Experiment::Ward { model, killing, a, b, function, n, m_inner, t_max } => verify::verify_ward(
                &model.resolve(base)?,
                &KillingRates::new(killing.clone())?,
                *a,
                *b,
                function,
                *n,
                *m_inner,
                *t_max,
                seed,
            ),
            Experiment::Kahane { path, function, k, alpha_grid, n } => {
                verify::check_kahane(path, function, *k, alpha_grid, *n, seed)
            }
            Experiment::Slepian { g0, g1, n, x_grid } => {
                verify::check_slepian(&g0.resolve(base)?, &g1.resolve(base)?, *n, x_grid.clone(), seed)
            }
            Experiment::Tail { model, a, r, lambda_grid, n } => {
                verify::check_tail_bound(&model.resolve(base)?, *a, *r, lambda_grid, *n, seed)
            }
            Experiment::Cover { model, n, expect_t_cov } => {
                let mut report = verify::estimate_cover_time(&model.resolve(base)?, *n, seed)?;
                if let Some(t) = expect_t_cov {
                    let est = crate::stats::MCEstimate {
                        mean: report.metrics["t_cov"],
                        stderr: report.metrics["t_cov_stderr"],
                        n_replicates: *n,
                        imag_residue: 0.0,
                        seed,
                    };
                    report.push(verify::Comparison::against("t_cov_vs_expected", &est, *t));
                    report = report.finish();
                }
                Ok(report)
            }
        }
    }
}

/// One named experiment with its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

/// A verify config: a single experiment or a suite of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VerifyConfig {
    Suite {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        experiments: Vec<ExperimentConfig>,
    },
    Single(Box<ExperimentConfig>),
}

pub const DEFAULT_SEED: u64 = 20240601;

impl VerifyConfig {
    pub fn parse(text: &str) -> Result<Self> {
        // parse into a Value first so an unknown kind gives a readable error
        let value: serde_json::Value = serde_json::from_str(text)?;
        let check = |v: &serde_json::Value| -> Result<()> {
            if let Some(kind) = v.get("kind") {
                let known = [
                    "laplace",
                    "lejan",
                    "dynkin",
                    "rayknight",
                    "eisenbaum",
                    "ward",
                    "kahane",
                    "slepian",
                    "tail",
                    "cover",
                ];
                match kind.as_str() {
                    Some(k) if known.contains(&k) => Ok(()),
                    _ => Err(Error::Config(format!("unknown verification kind {kind}"))),
                }
            } else {
                Err(Error::Config("experiment is missing \"kind\"".into()))
            }
        };
        if let Some(exps) = value.get("experiments").and_then(|e| e.as_array()) {
            exps.iter().try_for_each(check)?;
        } else {
            check(&value)?;
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Experiments with seeds and defaults filled in.
    pub fn materialize(self, base: &Path, seed_override: Option<u64>) -> Result<Vec<ExperimentConfig>> {
        let (top, mut exps) = match self {
            VerifyConfig::Suite { seed, experiments } => (seed, experiments),
            VerifyConfig::Single(e) => (None, vec![*e]),
        };
        for e in exps.iter_mut() {
            let seed = match (seed_override, e.seed, top) {
                (Some(s), _, _) => s,
                (None, Some(s), _) => s,
                (None, None, Some(s)) => s,
                (None, None, None) => DEFAULT_SEED,
            };
            e.seed = Some(seed);
            e.experiment.materialize(base)?;
        }
        Ok(exps)
    }
}

/// Density sweep config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub kernel: KernelSpec,
    /// Points l at which to evaluate; alternatively `axes` for a tensor grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_true")]
    pub reduced: bool,
    /// Degree of the series oracle. Left out, it is filled in for Markovian
    /// kernels with n ≤ 3 and the series is skipped otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_k() -> usize {
    crate::density::DEFAULT_K
}

impl DensityConfig {
    pub fn materialize(&mut self, g: &SquareMatrix) -> Result<()> {
        if self.series_degree.is_none()
            && g.n() <= 3
            && crate::kernel::is_certified_kernel(g, crate::kernel::DEFAULT_TOL)
            && crate::kernel::is_inverse_m_matrix(g, crate::kernel::DEFAULT_TOL)
        {
            self.series_degree = Some(crate::density::DEFAULT_DEGREE);
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<AngularGrid> {
        AngularGrid::new(self.k, self.reduced)
    }

    pub fn points(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        let pts = match (&self.points, &self.axes) {
            (Some(p), _) => p.clone(),
            (None, Some(axes)) => {
                if axes.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: axes.len() });
                }
                let mut out = vec![Vec::new()];
                for axis in axes {
                    out = out
                        .into_iter()
                        .flat_map(|p| {
                            axis.iter().map(move |x| {
                                let mut q = p.clone();
                                q.push(*x);
                                q
                            })
                        })
                        .collect();
                }
                out
            }
            (None, None) => return Err(Error::Config("density config needs points or axes".into())),
        };
        for p in &pts {
            if p.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: p.len() });
            }
        }
        Ok(pts)
    }
}

/// Sample batch config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    #[serde(flatten)]
    pub setup: SamplerSetup,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}
