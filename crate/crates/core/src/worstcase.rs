//! Hard instances for span-respecting methods and the checks that go with
//! them: the support of the iterates, and the lower bounds on suboptimality.
//!
//! Both constructions are quadratics `s (½ wᵀAw - w_1) + (r/2)‖w‖²` with a
//! tridiagonal `A`, so one gradient step can move the support by at most one
//! coordinate. Starting from `w_0 = 0`, a delayed method that only combines
//! past gradients leaves coordinates above `⌊k/(τ+1)⌋` exactly zero.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundKind, BoundParams};
use crate::dynamics::{run_dgd, run_idle_agd, run_idle_gd, AgdVariant, DelayedRunConfig, IterateStorage, Trajectory};
use crate::quadratic::{Hessian, QuadraticProblem};
use crate::{Error, Result};

/// Slack on the spectral containment check.
pub const SPECTRUM_TOL: f64 = 1e-8;
/// Tolerance on `w* = (q, q², …, q^d)`.
pub const MINIMIZER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstCaseKind {
    StrongLan,
    ConvexNesterov,
}

#[derive(Debug, Clone)]
pub struct WorstCaseInstance {
    pub kind: WorstCaseKind,
    pub d: usize,
    pub mu: f64,
    pub lambda: f64,
    pub problem: QuadraticProblem,
    /// `(√κ-1)/(√κ+1)`; strong instances only.
    pub q: Option<f64>,
    /// Iteration the convex instance was sized for.
    pub k_target: Option<usize>,
    /// Delay the convex instance was sized for.
    pub tau: Option<usize>,
    /// Size of the active tridiagonal block (`d` for the strong instance).
    pub block: usize,
}

impl WorstCaseInstance {
    /// Largest `K` the strong instance supports at delay `τ`, from
    /// `⌊K/(τ+1)⌋ + 2⌈ln 2 / (-2 ln q)⌉ <= d`.
    pub fn strong_horizon(&self, tau: usize) -> Option<usize> {
        let q = self.q?;
        let reserve = strong_reserve(q);
        (self.d >= reserve).then(|| (self.d - reserve) * (tau + 1) + tau)
    }
}

fn strong_reserve(q: f64) -> usize {
    2 * (2f64.ln() / (-2.0 * q.ln())).ceil() as usize
}

/// Smallest `d` for which the strong instance supports `K` iterations at delay `τ`.
pub fn strong_dimension(mu: f64, lambda: f64, tau: usize, k_max: usize) -> usize {
    let sk = (mu / lambda).sqrt();
    let q = (sk - 1.0) / (sk + 1.0);
    (k_max / (tau + 1) + strong_reserve(q)).max(4)
}

/// Smallest `d` for which the convex instance admits `k` at delay `τ`.
pub fn convex_dimension(k: usize, tau: usize) -> usize {
    (2 * k).div_ceil(tau + 1) + 1
}

/// Tridiagonal `2, -1` matrix on the leading `m × m` block of a `d × d` zero
/// matrix, with the last diagonal entry of the block replaced by `corner`.
fn tridiagonal(d: usize, m: usize, corner: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(d, d);
    for i in 0..m {
        a[(i, i)] = 2.0;
        if i + 1 < m {
            a[(i, i + 1)] = -1.0;
            a[(i + 1, i)] = -1.0;
        }
    }
    a[(m - 1, m - 1)] = corner;
    a
}

/// `F(w) = (λ(κ-1)/4)(½⟨Aw,w⟩ - w_1) + (λ/2)‖w‖²` with last diagonal entry
/// `(√κ+3)/(√κ+1)`, whose minimizer is `(q, q², …, q^d)`.
pub fn build_strong_instance(mu: f64, lambda: f64, d: usize) -> Result<WorstCaseInstance> {
    if !(lambda > 0.0 && mu > lambda && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("need mu > lambda > 0, got mu = {mu}, lambda = {lambda}")));
    }
    if d < 4 {
        return Err(Error::DimensionTooSmall { d, required: 4 });
    }
    let kappa = mu / lambda;
    let sk = kappa.sqrt();
    let q = (sk - 1.0) / (sk + 1.0);
    let scale = lambda * (kappa - 1.0) / 4.0;
    let mut h = tridiagonal(d, d, strong_corner(kappa)) * scale;
    for i in 0..d {
        h[(i, i)] += lambda;
    }
    let mut b = vec![0.0; d];
    b[0] = -scale;
    let problem = QuadraticProblem::new(Hessian::Dense(h), b, 0.0)?;

    let mut qi = 1.0;
    for (i, w) in problem.w_star().iter().enumerate() {
        qi *= q;
        if (w - qi).abs() > MINIMIZER_TOL {
            return Err(Error::PreconditionViolated(format!(
                "minimizer coordinate {} is {w}, expected q^{} = {qi}",
                i + 1,
                i + 1
            )));
        }
    }
    Ok(WorstCaseInstance { kind: WorstCaseKind::StrongLan, d, mu, lambda, problem, q: Some(q), k_target: None, tau: None, block: d })
}

/// `(√κ+3)/(√κ+1)`.
pub fn strong_corner(kappa: f64) -> f64 {
    let sk = kappa.sqrt();
    (sk + 3.0) / (sk + 1.0)
}

/// `F(w) = (μ/4)(½⟨A_m w,w⟩ - w_1)` with `m = 2⌊k/(τ+1)⌋ + 1`, for
/// `τ+1 <= k <= ½(d-1)(τ+1)`.
pub fn build_convex_instance(mu: f64, d: usize, k: usize, tau: usize) -> Result<WorstCaseInstance> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    if k < tau + 1 {
        return Err(Error::InvalidParameter(format!("k = {k} must be at least tau+1 = {}", tau + 1)));
    }
    if 2 * k > d.saturating_sub(1) * (tau + 1) {
        return Err(Error::DimensionTooSmall { d, required: convex_dimension(k, tau) });
    }
    let m = 2 * (k / (tau + 1)) + 1;
    let h = tridiagonal(d, m, 2.0) * (mu / 4.0);
    let mut b = vec![0.0; d];
    b[0] = -mu / 4.0;
    let problem = QuadraticProblem::new(Hessian::Dense(h), b, 0.0)?;
    Ok(WorstCaseInstance {
        kind: WorstCaseKind::ConvexNesterov,
        d,
        mu,
        lambda: 0.0,
        problem,
        q: None,
        k_target: Some(k),
        tau: Some(tau),
        block: m,
    })
}

/// Highest nonzero coordinate (1-based, 0 for the zero vector) of each iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanProfile {
    pub tau: usize,
    pub max_nonzero: Vec<usize>,
    pub allowed: Vec<usize>,
    pub pass: bool,
}

impl SpanProfile {
    pub fn violations(&self) -> Vec<usize> {
        (0..self.max_nonzero.len()).filter(|&k| self.max_nonzero[k] > self.allowed[k]).collect()
    }
}

/// Checks `w_k ∈ span{e_1, …, e_{⌊k/(τ+1)⌋}}` exactly, with no tolerance.
pub fn span_profile(iterates: &[Vec<f64>], tau: usize) -> SpanProfile {
    let max_nonzero: Vec<usize> =
        iterates.iter().map(|w| w.iter().rposition(|&x| x != 0.0).map_or(0, |i| i + 1)).collect();
    let allowed: Vec<usize> = (0..iterates.len()).map(|k| k / (tau + 1)).collect();
    let pass = max_nonzero.iter().zip(&allowed).all(|(m, a)| m <= a);
    SpanProfile { tau, max_nonzero, allowed, pass }
}

/// Span-respecting methods that can be run on a hard instance from `w_0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SpanMethod {
    Dgd { eta: f64 },
    IdleGd { eta: f64 },
    IdleAgd,
}

impl SpanMethod {
    pub fn run(&self, inst: &WorstCaseInstance, tau: usize, k_max: usize) -> Result<Trajectory> {
        let p = &inst.problem;
        let w0 = vec![0.0; inst.d];
        match *self {
            SpanMethod::Dgd { eta } => {
                run_dgd(p, &w0, &DelayedRunConfig::new(tau, eta, k_max).with_iterates(IterateStorage::Always))
            }
            SpanMethod::IdleGd { eta } => run_idle_gd(p, &w0, eta, tau, k_max),
            SpanMethod::IdleAgd => {
                let variant = match inst.kind {
                    WorstCaseKind::StrongLan => AgdVariant::StronglyConvex,
                    WorstCaseKind::ConvexNesterov => AgdVariant::Convex,
                };
                run_idle_agd(p, &w0, tau, k_max, variant)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub k: usize,
    pub lower: f64,
    pub subopt: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm3Report {
    pub kind: WorstCaseKind,
    pub method: SpanMethod,
    pub d: usize,
    pub mu: f64,
    pub lambda: f64,
    pub tau: usize,
    pub w_star_sq: f64,
    pub rows: Vec<LowerBoundRow>,
    pub span: Option<SpanProfile>,
    pub all_hold: bool,
}

impl Thm3Report {
    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Runs `method` from `w_0 = 0` and compares `F(w_k) - F*` with the lower
/// bound: every `k ∈ [τ+1, K]` for the strong instance, the target `k` for
/// the convex one.
pub fn verify_thm3(inst: &WorstCaseInstance, method: SpanMethod, tau: usize, k_max: usize) -> Result<Thm3Report> {
    let (kind, ks) = match inst.kind {
        WorstCaseKind::StrongLan => {
            let required = strong_dimension(inst.mu, inst.lambda, tau, k_max);
            if inst.d < required {
                return Err(Error::DimensionTooSmall { d: inst.d, required });
            }
            (BoundKind::Thm3LowerStrong, (tau + 1..=k_max).collect::<Vec<_>>())
        }
        WorstCaseKind::ConvexNesterov => {
            let target = inst.k_target.expect("convex instance has a target");
            if inst.tau != Some(tau) {
                return Err(Error::InvalidParameter(format!(
                    "instance was built for tau = {:?}, not {tau}",
                    inst.tau
                )));
            }
            if k_max < target {
                return Err(Error::InvalidParameter(format!("K = {k_max} is below the instance target {target}")));
            }
            (BoundKind::Thm3LowerConvex, vec![target])
        }
    };
    let traj = method.run(inst, tau, k_max)?;
    let w_star_sq: f64 = inst.problem.w_star().iter().map(|x| x * x).sum();
    let params =
        BoundParams { mu: inst.mu, lambda: inst.lambda, tau, eta: 0.0, sigma2: 0.0, e0_sq: w_star_sq, d: Some(inst.d) };
    let mut rows = Vec::with_capacity(ks.len());
    for k in ks {
        let lower = params.evaluate(kind, k)?;
        let subopt = traj.subopt[k];
        rows.push(LowerBoundRow { k, lower, subopt, margin: subopt - lower });
    }
    let span = traj.iterates.as_ref().map(|it| span_profile(it, tau));
    let all_hold = rows.iter().all(|r| r.margin >= 0.0);
    Ok(Thm3Report { kind: inst.kind, method, d: inst.d, mu: inst.mu, lambda: inst.lambda, tau, w_star_sq, rows, span, all_hold })
}
