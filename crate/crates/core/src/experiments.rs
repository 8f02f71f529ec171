//! Parameter sweeps over the delay, noise level and horizon, with Monte
//! Carlo averaging and the exact expectation side by side.
//!
//! Trials run on a rayon pool and are reduced in trial-index order, so a
//! table depends only on its [`SweepSpec`], never on the worker count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{exact_expected_suboptimality, tune_eta_strong, BoundKind, BoundParams};
use crate::dynamics::{
    run_dgd, run_idle_gd, run_minibatch_sgd, run_sdgd, theory_step, DelayedRunConfig, IterateStorage, NoiseModel,
};
use crate::format::g17;
use crate::quadratic::{random_instance, QuadraticProblem};
use crate::{Error, Result};

/// Upper limit on `rows × trials` for one sweep.
pub const MAX_RUNS: usize = 100_000;

/// Doubling schedule start for runs that stop at `ε`.
const FIRST_HORIZON: usize = 1024;

/// Values held in memory per reduction chunk.
const CHUNK_VALUES: usize = 4_000_000;

/// Smallest `k` with `values[k] <= ε`.
pub fn iterations_to_epsilon(values: &[f64], epsilon: f64) -> Option<usize> {
    values.iter().position(|&v| v <= epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    DeterministicTau,
    StochasticTau,
    Minibatch,
}

/// Arguments of [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub d: usize,
    pub mu: f64,
    pub lambda: f64,
    #[serde(default = "one")]
    pub e0_norm: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn build(&self) -> Result<(QuadraticProblem, Vec<f64>)> {
        random_instance(self.d, self.lambda, self.mu, self.e0_norm, self.seed)
    }

    pub fn kappa(&self) -> f64 {
        self.mu / self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// `1/(20 μ (τ+1))`.
    Theory,
    /// [`tune_eta_strong`] at the row's `(τ, σ², k)`.
    Tuned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Value(f64),
    Rule(StepRule),
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec::Rule(StepRule::Theory)
    }
}

/// Iteration count of a stochastic row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Fixed(usize),
    /// `⌈c · τ · κ · ln(2(τ+1))⌉`.
    Crossover(f64),
    /// `c · τ`.
    PerTau(usize),
}

impl Horizon {
    pub fn resolve(&self, tau: usize, kappa: f64) -> usize {
        let k = match *self {
            Horizon::Fixed(k) => k,
            Horizon::Crossover(c) => {
                let t = tau as f64;
                (c * t * kappa * (2.0 * (t + 1.0)).ln()).ceil() as usize
            }
            Horizon::PerTau(c) => c * tau,
        };
        k.max(1)
    }
}

fn default_sigma2s() -> Vec<f64> {
    vec![0.0]
}

fn default_epsilon() -> f64 {
    1e-6
}

fn default_budget() -> usize {
    1_000_000
}

/// A sweep, fully determined by its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub problem: ProblemSpec,
    pub taus: Vec<usize>,
    #[serde(default = "default_sigma2s")]
    pub sigma2s: Vec<f64>,
    #[serde(default)]
    pub horizons: Vec<Horizon>,
    #[serde(default)]
    pub eta: StepSpec,
    #[serde(default)]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Iteration cap for runs that stop at `ε`.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of simulated trajectories.
    pub fn run_count(&self) -> usize {
        let per_row = self.trials.max(1);
        match self.kind {
            SweepKind::DeterministicTau => 2 * self.taus.len(),
            SweepKind::StochasticTau => self.taus.len() * self.sigma2s.len() * self.horizons.len() * per_row,
            SweepKind::Minibatch => 2 * self.taus.len() * self.sigma2s.len() * self.horizons.len() * per_row,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.taus.is_empty() {
            return bad("taus must not be empty");
        }
        if self.kind != SweepKind::DeterministicTau {
            if self.horizons.is_empty() {
                return bad("horizons must not be empty");
            }
            if self.sigma2s.is_empty() {
                return bad("sigma2s must not be empty");
            }
        }
        if self.sigma2s.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("sigma2s must be non-negative");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.kind == SweepKind::DeterministicTau && self.eta == StepSpec::Rule(StepRule::Tuned) {
            return bad("eta = tuned applies to stochastic sweeps only");
        }
        if let StepSpec::Value(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad("eta must be positive");
            }
        }
        let runs = self.run_count();
        if runs > MAX_RUNS {
            return Err(Error::BudgetExceeded(format!("{runs} runs requested, at most {MAX_RUNS} allowed")));
        }
        Ok(())
    }

    fn step(&self, p: &QuadraticProblem, tau: usize, sigma2: f64, e0_sq: f64, k: usize) -> Result<f64> {
        match self.eta {
            StepSpec::Value(eta) => Ok(eta),
            StepSpec::Rule(StepRule::Theory) => Ok(theory_step(self.problem.mu, tau)),
            StepSpec::Rule(StepRule::Tuned) => tune_eta_strong(self.problem.mu, p.lambda(), tau, sigma2, e0_sq, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: String,
    pub tau: usize,
    pub batch: Option<usize>,
    pub eta: f64,
    pub sigma2: f64,
    pub k: usize,
    pub trials: usize,
    pub mean_subopt: Option<f64>,
    pub std_err: Option<f64>,
    pub exact: Option<f64>,
    pub bound: Option<f64>,
    pub bound_kind: Option<BoundKind>,
    pub iters_to_eps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub spec: SweepSpec,
    pub spec_hash: String,
    pub code_version: String,
    pub master_seed: u64,
    pub seeding: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub meta: SweepMeta,
    pub rows: Vec<ResultRow>,
}

const CSV_HEADER: [&str; 13] = [
    "algorithm",
    "tau",
    "batch",
    "eta",
    "sigma2",
    "k",
    "trials",
    "mean_subopt",
    "std_err",
    "exact",
    "bound",
    "bound_kind",
    "iters_to_eps",
];

fn opt_num(v: Option<f64>) -> String {
    v.map(g17).unwrap_or_default()
}

fn opt_int(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultTable {
    fn new(spec: &SweepSpec, rows: Vec<ResultRow>) -> Self {
        let mut notes = vec![
            "sweep designs are instantiations of qualitative convergence claims; constants are choices of this tool".to_string(),
        ];
        for h in &spec.horizons {
            if let Horizon::Crossover(c) = h {
                notes.push(format!("crossover horizon multiplier = {}", g17(*c)));
            }
        }
        if spec.kind == SweepKind::Minibatch {
            notes.push("budgets matched by stochastic-gradient evaluations, mini-batch b = tau + 1".to_string());
        }
        let meta = SweepMeta {
            spec: spec.clone(),
            spec_hash: spec.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: spec.seed,
            seeding: "ChaCha8 keyed by master seed; stream = trial index; block offset = step".to_string(),
            notes,
        };
        ResultTable { meta, rows }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.algorithm.clone(),
                r.tau.to_string(),
                opt_int(r.batch),
                g17(r.eta),
                g17(r.sigma2),
                r.k.to_string(),
                r.trials.to_string(),
                opt_num(r.mean_subopt),
                opt_num(r.std_err),
                opt_num(r.exact),
                opt_num(r.bound),
                r.bound_kind.map(|b| b.label().to_string()).unwrap_or_default(),
                r.iters_to_eps.map_or_else(|| "not_reached".to_string(), |k| k.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    pub fn write_meta_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.meta)?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Per-`k` sample mean and standard error over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloStats {
    pub trials: usize,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Runs `trial(t)` for `t = 0..trials` and averages the returned series.
/// Each series must have length `len`.
pub fn monte_carlo<F>(trials: usize, len: usize, threads: Option<usize>, trial: F) -> Result<MonteCarloStats>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let chunk = (CHUNK_VALUES / len.max(1)).clamp(1, trials);
    let mut mean = vec![0.0; len];
    let mut m2 = vec![0.0; len];
    let mut n = 0usize;
    for start in (0..trials).step_by(chunk) {
        let end = (start + chunk).min(trials);
        let batch: Vec<Result<Vec<f64>>> =
            with_pool(threads, || (start..end).into_par_iter().map(|t| trial(t as u64)).collect())?;
        for series in batch {
            let series = series?;
            if series.len() != len {
                return Err(Error::DimensionMismatch { expected: len, got: series.len() });
            }
            n += 1;
            for ((m, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(&series) {
                let delta = x - *m;
                *m += delta / n as f64;
                *s += delta * (x - *m);
            }
        }
    }
    let std_err = if n > 1 {
        m2.iter().map(|s| (s / (n - 1) as f64).sqrt() / (n as f64).sqrt()).collect()
    } else {
        vec![f64::NAN; len]
    };
    Ok(MonteCarloStats { trials: n, mean, std_err })
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs with horizons 1024, 2048, … up to `budget` until the series reaches `ε`.
fn run_until(budget: usize, epsilon: f64, run: impl Fn(usize) -> Result<Vec<f64>>) -> Result<(Option<usize>, Vec<f64>)> {
    let mut k = FIRST_HORIZON.min(budget);
    loop {
        let s = run(k)?;
        if let Some(i) = iterations_to_epsilon(&s, epsilon) {
            return Ok((Some(i), s));
        }
        if k >= budget {
            return Ok((None, s));
        }
        k = (2 * k).min(budget);
    }
}

fn e0_of(p: &QuadraticProblem, w0: &[f64]) -> Vec<f64> {
    w0.iter().zip(p.w_star()).map(|(a, b)| a - b).collect()
}

/// DGD with `η = 1/(20μ(τ+1))` and idle-GD with `η = 1/(20μ)` across the
/// delay grid; each row records the iterations needed to reach `ε`.
pub fn sweep_deterministic_tau(spec: &SweepSpec, threads: Option<usize>) -> Result<ResultTable> {
    if spec.kind != SweepKind::DeterministicTau {
        return Err(Error::InvalidParameter("spec kind is not deterministic_tau".into()));
    }
    spec.validate()?;
    let (p, w0) = spec.problem.build()?;
    let e0_sq: f64 = e0_of(&p, &w0).iter().map(|x| x * x).sum();
    let mu = spec.problem.mu;
    let jobs: Vec<(usize, bool)> = spec.taus.iter().flat_map(|&t| [(t, false), (t, true)]).collect();
    let rows: Vec<Result<ResultRow>> = with_pool(threads, || {
        jobs.par_iter()
            .map(|&(tau, idle)| {
                let (eta, label) = if idle {
                    (theory_step(mu, 0), "idle-gd")
                } else {
                    (spec.step(&p, tau, 0.0, e0_sq, spec.budget)?, "dgd")
                };
                let (hit, series) = run_until(spec.budget, spec.epsilon, |k| {
                    let t = if idle {
                        run_idle_gd(&p, &w0, eta, tau, k)?
                    } else {
                        run_dgd(&p, &w0, &DelayedRunConfig::new(tau, eta, k).with_iterates(IterateStorage::Never))?
                    };
                    Ok(t.subopt)
                })?;
                let k = hit.unwrap_or(series.len() - 1);
                let params = BoundParams { mu, lambda: p.lambda(), tau, eta, sigma2: 0.0, e0_sq, d: Some(p.dim()) };
                let bound = if idle { None } else { params.evaluate(BoundKind::Thm1Upper, k).ok() };
                Ok(ResultRow {
                    algorithm: label.to_string(),
                    tau,
                    batch: None,
                    eta,
                    sigma2: 0.0,
                    k,
                    trials: 1,
                    mean_subopt: Some(series[k]),
                    std_err: None,
                    exact: None,
                    bound,
                    bound_kind: bound.map(|_| BoundKind::Thm1Upper),
                    iters_to_eps: hit,
                })
            })
            .collect()
    })?;
    Ok(ResultTable::new(spec, rows.into_iter().collect::<Result<_>>()?))
}

/// SDGD with isotropic Gaussian noise over `(τ, σ², horizon)`: exact
/// expectation, Monte Carlo mean when `trials > 0`, and the stochastic bound.
pub fn sweep_stochastic_tau(spec: &SweepSpec, threads: Option<usize>) -> Result<ResultTable> {
    if spec.kind != SweepKind::StochasticTau {
        return Err(Error::InvalidParameter("spec kind is not stochastic_tau".into()));
    }
    spec.validate()?;
    let (p, w0) = spec.problem.build()?;
    let e0 = e0_of(&p, &w0);
    let e0_sq: f64 = e0.iter().map(|x| x * x).sum();
    let kappa = spec.problem.kappa();
    let mut rows = Vec::new();
    for &tau in &spec.taus {
        for &sigma2 in &spec.sigma2s {
            for h in &spec.horizons {
                let k = h.resolve(tau, kappa);
                let eta = spec.step(&p, tau, sigma2, e0_sq, k)?;
                let exact_series = if eta > 0.0 {
                    exact_expected_suboptimality(&p, &e0, eta, tau, sigma2, k)?
                } else {
                    vec![p.suboptimality(&w0); k + 1]
                };
                let exact = exact_series[k];
                let (mean, se) = if spec.trials > 0 && eta > 0.0 {
                    let noise = NoiseModel::IsotropicGaussian { sigma2 };
                    let stats = monte_carlo(spec.trials, 1, threads, |t| {
                        let cfg = DelayedRunConfig::new(tau, eta, k)
                            .with_noise(noise, spec.seed)
                            .with_trial(t)
                            .with_iterates(IterateStorage::Never);
                        Ok(vec![run_sdgd(&p, &w0, &cfg)?.subopt[k]])
                    })?;
                    (Some(stats.mean[0]), Some(stats.std_err[0]).filter(|s| s.is_finite()))
                } else {
                    (None, None)
                };
                let params = BoundParams { mu: spec.problem.mu, lambda: p.lambda(), tau, eta, sigma2, e0_sq, d: Some(p.dim()) };
                let bound = params.evaluate(BoundKind::Thm4StrongUpper, k).ok();
                rows.push(ResultRow {
                    algorithm: "sdgd".into(),
                    tau,
                    batch: None,
                    eta,
                    sigma2,
                    k,
                    trials: if mean.is_some() { spec.trials } else { 0 },
                    mean_subopt: mean,
                    std_err: se,
                    exact: Some(exact),
                    bound,
                    bound_kind: bound.map(|_| BoundKind::Thm4StrongUpper),
                    iters_to_eps: iterations_to_epsilon(&exact_series, spec.epsilon),
                });
            }
        }
    }
    Ok(ResultTable::new(spec, rows))
}

/// SDGD with delay `τ` against mini-batch SGD with `b = τ+1` at the same
/// number of stochastic gradients `k` (rounded down to a multiple of `b`).
/// Steps come from [`tune_eta_strong`]: `(τ, σ², k)` for SDGD and
/// `(1, σ²/b, k/b)` for mini-batch unless `eta` is a fixed value.
pub fn compare_minibatch(spec: &SweepSpec, threads: Option<usize>) -> Result<ResultTable> {
    if spec.kind != SweepKind::Minibatch {
        return Err(Error::InvalidParameter("spec kind is not minibatch".into()));
    }
    spec.validate()?;
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("minibatch comparison needs trials >= 1".into()));
    }
    let (p, w0) = spec.problem.build()?;
    let e0 = e0_of(&p, &w0);
    let e0_sq: f64 = e0.iter().map(|x| x * x).sum();
    let (mu, lambda) = (spec.problem.mu, p.lambda());
    let kappa = spec.problem.kappa();
    let mut rows = Vec::new();
    for &tau in &spec.taus {
        let b = tau + 1;
        for &sigma2 in &spec.sigma2s {
            for h in &spec.horizons {
                let k = h.resolve(tau.max(1), kappa) / b * b;
                if k == 0 {
                    return Err(Error::InvalidParameter(format!("horizon shorter than batch size {b}")));
                }
                let (eta_d, eta_b) = match spec.eta {
                    StepSpec::Value(v) => (v, v),
                    StepSpec::Rule(StepRule::Theory) => (theory_step(mu, tau), theory_step(mu, 0)),
                    StepSpec::Rule(StepRule::Tuned) => (
                        tune_eta_strong(mu, lambda, tau.max(1), sigma2, e0_sq, k)?,
                        tune_eta_strong(mu, lambda, 1, sigma2 / b as f64, e0_sq, k / b)?,
                    ),
                };
                let noise = NoiseModel::IsotropicGaussian { sigma2 };
                let at_k = |eta: f64, sdgd: bool| -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
                    if eta <= 0.0 {
                        return Ok((Some(p.suboptimality(&w0)), Some(0.0), Some(p.suboptimality(&w0))));
                    }
                    let stats = monte_carlo(spec.trials, 1, threads, |t| {
                        let s = if sdgd {
                            let cfg = DelayedRunConfig::new(tau, eta, k)
                                .with_noise(noise, spec.seed)
                                .with_trial(t)
                                .with_iterates(IterateStorage::Never);
                            run_sdgd(&p, &w0, &cfg)?.subopt[k]
                        } else {
                            run_minibatch_sgd(&p, &w0, eta, b, k, noise, spec.seed, t)?.subopt[k]
                        };
                        Ok(vec![s])
                    })?;
                    let exact = if sdgd {
                        exact_expected_suboptimality(&p, &e0, eta, tau, sigma2, k)?[k]
                    } else {
                        exact_expected_suboptimality(&p, &e0, eta, 0, sigma2 / b as f64, k / b)?[k / b]
                    };
                    Ok((Some(stats.mean[0]), Some(stats.std_err[0]).filter(|s| s.is_finite()), Some(exact)))
                };
                for (sdgd, eta) in [(true, eta_d), (false, eta_b)] {
                    let (mean, se, exact) = at_k(eta, sdgd)?;
                    rows.push(ResultRow {
                        algorithm: if sdgd { "sdgd".into() } else { "minibatch".into() },
                        tau,
                        batch: (!sdgd).then_some(b),
                        eta,
                        sigma2,
                        k,
                        trials: spec.trials,
                        mean_subopt: mean,
                        std_err: se,
                        exact,
                        bound: None,
                        bound_kind: None,
                        iters_to_eps: None,
                    });
                }
            }
        }
    }
    Ok(ResultTable::new(spec, rows))
}

/// Dispatches on `spec.kind`.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<ResultTable> {
    match spec.kind {
        SweepKind::DeterministicTau => sweep_deterministic_tau(spec, threads),
        SweepKind::StochasticTau => sweep_stochastic_tau(spec, threads),
        SweepKind::Minibatch => compare_minibatch(spec, threads),
    }
}
