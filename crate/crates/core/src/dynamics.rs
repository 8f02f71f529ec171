//! Iterative methods on quadratics: delayed GD (DGD), stochastic delayed GD
//! (SDGD), mini-batch SGD, and the "idle" baselines that take one
//! (accelerated) gradient step every `τ + 1` rounds.
//!
//! Noise is counter-based: the draw used at update `k` of trial `t` is a
//! pure function of `(seed, t, k)`, so trials can run in any order or on
//! any number of workers.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::format::g17;
use crate::quadratic::{unit_vector, QuadraticProblem};
use crate::{Error, Result};

/// Iterates are kept only while `d · (K+1)` stays below this many values.
pub const ITERATE_BUDGET: usize = 1_000_000;

/// Words of ChaCha output reserved for each step of a noise stream.
const STEP_STRIDE: u128 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    /// `ξ ~ N(0, σ²/d · I)`, so `E‖ξ‖² = σ²`.
    IsotropicGaussian { sigma2: f64 },
    /// `ξ = σ u` with `u` uniform on the unit sphere.
    SphericalFixedNorm { sigma: f64 },
}

impl NoiseModel {
    /// `E‖ξ‖²`.
    pub fn sigma2(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::IsotropicGaussian { sigma2 } => sigma2,
            NoiseModel::SphericalFixedNorm { sigma } => sigma * sigma,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseModel::None)
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            NoiseModel::None => 0.0,
            NoiseModel::IsotropicGaussian { sigma2 } => sigma2,
            NoiseModel::SphericalFixedNorm { sigma } => sigma,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise scale must be non-negative, got {v}")));
        }
        Ok(())
    }
}

/// Deterministic noise for one `(seed, trial)` pair, indexed by step.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    model: NoiseModel,
    base: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(model: NoiseModel, seed: u64, trial: u64) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(trial);
        NoiseStream { model, base }
    }

    /// Overwrites `out` with `ξ_step`.
    pub fn sample_into(&self, step: usize, out: &mut [f64]) {
        let d = out.len();
        match self.model {
            NoiseModel::None => out.fill(0.0),
            NoiseModel::IsotropicGaussian { sigma2 } => {
                let mut rng = self.rng_at(step);
                let sd = (sigma2 / d as f64).sqrt();
                for o in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = sd * z;
                }
            }
            NoiseModel::SphericalFixedNorm { sigma } => {
                let mut rng = self.rng_at(step);
                for (o, u) in out.iter_mut().zip(unit_vector(&mut rng, d)) {
                    *o = sigma * u;
                }
            }
        }
    }

    fn rng_at(&self, step: usize) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_word_pos(step as u128 * STEP_STRIDE);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IterateStorage {
    /// Keep iterates when `d · (K+1) <= ITERATE_BUDGET`.
    #[default]
    Auto,
    Always,
    Never,
}

impl IterateStorage {
    fn keep(self, d: usize, k_max: usize) -> bool {
        match self {
            IterateStorage::Auto => d.saturating_mul(k_max + 1) <= ITERATE_BUDGET,
            IterateStorage::Always => true,
            IterateStorage::Never => false,
        }
    }
}

/// Settings for a delayed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedRunConfig {
    pub tau: usize,
    pub eta: f64,
    pub k_max: usize,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trial: u64,
    #[serde(default)]
    pub iterates: IterateStorage,
}

impl DelayedRunConfig {
    pub fn new(tau: usize, eta: f64, k_max: usize) -> Self {
        DelayedRunConfig { tau, eta, k_max, noise: NoiseModel::None, seed: 0, trial: 0, iterates: IterateStorage::Auto }
    }

    pub fn with_noise(mut self, noise: NoiseModel, seed: u64) -> Self {
        self.noise = noise;
        self.seed = seed;
        self
    }

    pub fn with_trial(mut self, trial: u64) -> Self {
        self.trial = trial;
        self
    }

    pub fn with_iterates(mut self, iterates: IterateStorage) -> Self {
        self.iterates = iterates;
        self
    }

    /// `η <= 1/(20 μ (τ+1))`, the step range covered by the convergence bounds.
    pub fn in_theory_range(&self, mu: f64) -> bool {
        self.eta > 0.0 && self.eta <= theory_step(mu, self.tau)
    }

    /// Rejects steps outside the theory range.
    pub fn require_theory_range(&self, mu: f64) -> Result<()> {
        if !self.in_theory_range(mu) {
            return Err(Error::PreconditionViolated(format!(
                "eta = {} exceeds 1/(20 mu (tau+1)) = {}",
                self.eta,
                theory_step(mu, self.tau)
            )));
        }
        Ok(())
    }
}

/// `1/(20 μ (τ+1))`.
pub fn theory_step(mu: f64, tau: usize) -> f64 {
    1.0 / (20.0 * mu * (tau as f64 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgdVariant {
    /// Constant momentum `(√κ-1)/(√κ+1)`; needs `λ > 0`.
    StronglyConvex,
    /// `t_{j+1} = (1 + √(1 + 4 t_j²)) / 2` schedule.
    Convex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    Dgd,
    Sdgd,
    MiniBatch { batch: usize },
    IdleGd,
    IdleAgd { variant: AgdVariant },
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Algorithm::Dgd => "dgd".into(),
            Algorithm::Sdgd => "sdgd".into(),
            Algorithm::MiniBatch { batch } => format!("minibatch-{batch}"),
            Algorithm::IdleGd => "idle-gd".into(),
            Algorithm::IdleAgd { variant: AgdVariant::StronglyConvex } => "idle-agd-strong".into(),
            Algorithm::IdleAgd { variant: AgdVariant::Convex } => "idle-agd-convex".into(),
        }
    }
}

/// Suboptimality `F(w_k) - F*` for `k = 0..=K`, plus optional iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub tau: usize,
    pub eta: f64,
    pub sigma2: f64,
    pub seed: u64,
    pub subopt: Vec<f64>,
    pub iterates: Option<Vec<Vec<f64>>>,
    pub eta_in_theory_range: bool,
    pub wall_time: Duration,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.subopt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subopt.is_empty()
    }

    /// Writes `k,subopt,algorithm,tau,eta,sigma2,seed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["k", "subopt", "algorithm", "tau", "eta", "sigma2", "seed"])?;
        let (alg, tau, eta, s2, seed) =
            (self.algorithm.label(), self.tau.to_string(), g17(self.eta), g17(self.sigma2), self.seed.to_string());
        for (k, v) in self.subopt.iter().enumerate() {
            w.write_record([&k.to_string(), &g17(*v), &alg, &tau, &eta, &s2, &seed])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Recorder<'a> {
    p: &'a QuadraticProblem,
    subopt: Vec<f64>,
    iterates: Option<Vec<Vec<f64>>>,
}

impl<'a> Recorder<'a> {
    fn new(p: &'a QuadraticProblem, k_max: usize, keep: bool) -> Self {
        Recorder {
            p,
            subopt: Vec::with_capacity(k_max + 1),
            iterates: keep.then(|| Vec::with_capacity(k_max + 1)),
        }
    }

    fn push(&mut self, w: &[f64]) {
        self.subopt.push(self.p.suboptimality(w));
        if let Some(it) = self.iterates.as_mut() {
            it.push(w.to_vec());
        }
    }
}

fn check_start(p: &QuadraticProblem, w0: &[f64]) -> Result<()> {
    if w0.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: w0.len() });
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    Ok(())
}

/// Deterministic delayed gradient descent: `w_{k+1} = w_k - η ∇F(w_{k-τ})`
/// with `w_0 = … = w_τ`. Any noise in `cfg` is ignored.
pub fn run_dgd(p: &QuadraticProblem, w0: &[f64], cfg: &DelayedRunConfig) -> Result<Trajectory> {
    let cfg = DelayedRunConfig { noise: NoiseModel::None, ..cfg.clone() };
    let mut t = run_delayed(p, w0, &cfg)?;
    t.algorithm = Algorithm::Dgd;
    Ok(t)
}

/// Stochastic delayed gradient descent:
/// `w_{k+1} = w_k - η (A w_{k-τ} + b + ξ_k)` for `k >= τ`.
pub fn run_sdgd(p: &QuadraticProblem, w0: &[f64], cfg: &DelayedRunConfig) -> Result<Trajectory> {
    run_delayed(p, w0, cfg)
}

fn run_delayed(p: &QuadraticProblem, w0: &[f64], cfg: &DelayedRunConfig) -> Result<Trajectory> {
    check_start(p, w0)?;
    check_eta(cfg.eta)?;
    cfg.noise.validate()?;
    let started = Instant::now();
    let d = p.dim();
    let n = cfg.tau + 1;
    let stream = (!cfg.noise.is_none()).then(|| NoiseStream::new(cfg.noise, cfg.seed, cfg.trial));

    let mut rec = Recorder::new(p, cfg.k_max, cfg.iterates.keep(d, cfg.k_max));
    // ring[k % n] holds w_k; the slot of w_{k-τ} is the one w_{k+1} replaces.
    let mut ring = vec![w0.to_vec(); n];
    let mut g = vec![0.0; d];
    let mut xi = vec![0.0; d];
    for _ in 0..=cfg.k_max.min(cfg.tau) {
        rec.push(w0);
    }
    for k in cfg.tau..cfg.k_max {
        let stale = (k + 1) % n;
        let cur = k % n;
        p.gradient_into(&ring[stale], &mut g);
        if let Some(s) = &stream {
            s.sample_into(k, &mut xi);
            for (gi, x) in g.iter_mut().zip(&xi) {
                *gi += x;
            }
        }
        let next: Vec<f64> = ring[cur].iter().zip(&g).map(|(w, gi)| w - cfg.eta * gi).collect();
        ring[stale] = next;
        rec.push(&ring[stale]);
    }

    Ok(Trajectory {
        algorithm: if cfg.noise.is_none() { Algorithm::Dgd } else { Algorithm::Sdgd },
        tau: cfg.tau,
        eta: cfg.eta,
        sigma2: cfg.noise.sigma2(),
        seed: cfg.seed,
        subopt: rec.subopt,
        iterates: rec.iterates,
        eta_in_theory_range: cfg.in_theory_range(p.mu()),
        wall_time: started.elapsed(),
    })
}

/// Mini-batch SGD: for `k ∈ {0, b, 2b, …}`,
/// `w_{k+b} = w_k - η · (1/b) Σ_{i<b} (∇F(w_k) + ξ_{k+i})`; iterates are
/// held between block boundaries. `K` must be a multiple of `b`.
#[allow(clippy::too_many_arguments)]
pub fn run_minibatch_sgd(
    p: &QuadraticProblem,
    w0: &[f64],
    eta: f64,
    batch: usize,
    k_max: usize,
    noise: NoiseModel,
    seed: u64,
    trial: u64,
) -> Result<Trajectory> {
    check_start(p, w0)?;
    check_eta(eta)?;
    noise.validate()?;
    if batch == 0 {
        return Err(Error::InvalidParameter("batch size must be at least 1".into()));
    }
    if !k_max.is_multiple_of(batch) {
        return Err(Error::InvalidParameter(format!("K = {k_max} is not a multiple of the batch size {batch}")));
    }
    let started = Instant::now();
    let d = p.dim();
    let stream = (!noise.is_none()).then(|| NoiseStream::new(noise, seed, trial));
    let mut rec = Recorder::new(p, k_max, IterateStorage::Auto.keep(d, k_max));
    let mut w = w0.to_vec();
    let mut g = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut acc = vec![0.0; d];
    let scale = 1.0 / batch as f64;
    rec.push(&w);
    for k in (0..k_max).step_by(batch) {
        p.gradient_into(&w, &mut g);
        acc.fill(0.0);
        for i in 0..batch {
            match &stream {
                Some(s) => s.sample_into(k + i, &mut xi),
                None => xi.fill(0.0),
            }
            for ((a, gi), x) in acc.iter_mut().zip(&g).zip(&xi) {
                *a += gi + x;
            }
        }
        for _ in 1..batch {
            rec.push(&w);
        }
        for (wi, a) in w.iter_mut().zip(&acc) {
            *wi -= eta * (a * scale);
        }
        rec.push(&w);
    }
    Ok(Trajectory {
        algorithm: Algorithm::MiniBatch { batch },
        tau: 0,
        eta,
        sigma2: noise.sigma2(),
        seed,
        subopt: rec.subopt,
        iterates: rec.iterates,
        eta_in_theory_range: eta <= theory_step(p.mu(), 0),
        wall_time: started.elapsed(),
    })
}

/// One exact gradient step every `τ+1` rounds: `w_k = x_{⌊k/(τ+1)⌋}` where
/// `x` is plain gradient descent with step `η`.
pub fn run_idle_gd(p: &QuadraticProblem, w0: &[f64], eta: f64, tau: usize, k_max: usize) -> Result<Trajectory> {
    check_start(p, w0)?;
    check_eta(eta)?;
    let started = Instant::now();
    let d = p.dim();
    let mut rec = Recorder::new(p, k_max, IterateStorage::Auto.keep(d, k_max));
    let mut x = w0.to_vec();
    let mut g = vec![0.0; d];
    rec.push(&x);
    for k in 0..k_max {
        if (k + 1) % (tau + 1) == 0 {
            p.gradient_into(&x, &mut g);
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= eta * gi;
            }
        }
        rec.push(&x);
    }
    Ok(Trajectory {
        algorithm: Algorithm::IdleGd,
        tau,
        eta,
        sigma2: 0.0,
        seed: 0,
        subopt: rec.subopt,
        iterates: rec.iterates,
        eta_in_theory_range: eta <= theory_step(p.mu(), 0),
        wall_time: started.elapsed(),
    })
}

/// Nesterov's accelerated method with step `1/μ`, one step every `τ+1`
/// rounds; the reported iterate is the gradient-step sequence `x_j`.
pub fn run_idle_agd(p: &QuadraticProblem, w0: &[f64], tau: usize, k_max: usize, variant: AgdVariant) -> Result<Trajectory> {
    check_start(p, w0)?;
    let started = Instant::now();
    let (mu, lambda) = (p.mu(), p.lambda());
    let beta_strong = match variant {
        AgdVariant::StronglyConvex => {
            if !(lambda > 0.0) {
                return Err(Error::InvalidParameter("strongly convex AGD needs lambda > 0".into()));
            }
            let sk = (mu / lambda).sqrt();
            (sk - 1.0) / (sk + 1.0)
        }
        AgdVariant::Convex => 0.0,
    };
    let step = 1.0 / mu;
    let d = p.dim();
    let mut rec = Recorder::new(p, k_max, IterateStorage::Auto.keep(d, k_max));
    let mut x = w0.to_vec();
    let mut y = w0.to_vec();
    let mut g = vec![0.0; d];
    let mut t = 1.0f64;
    rec.push(&x);
    for k in 0..k_max {
        if (k + 1) % (tau + 1) == 0 {
            p.gradient_into(&y, &mut g);
            let x_next: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
            let beta = match variant {
                AgdVariant::StronglyConvex => beta_strong,
                AgdVariant::Convex => {
                    let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                    let b = (t - 1.0) / t_next;
                    t = t_next;
                    b
                }
            };
            for ((yi, xn), xo) in y.iter_mut().zip(&x_next).zip(&x) {
                *yi = xn + beta * (xn - xo);
            }
            x = x_next;
        }
        rec.push(&x);
    }
    Ok(Trajectory {
        algorithm: Algorithm::IdleAgd { variant },
        tau,
        eta: step,
        sigma2: 0.0,
        seed: 0,
        subopt: rec.subopt,
        iterates: rec.iterates,
        eta_in_theory_range: false,
        wall_time: started.elapsed(),
    })
}
