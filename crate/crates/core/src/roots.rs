//! Roots of the characteristic polynomial `π_α(z) = 1 - z + α z^{τ+1}`.
//!
//! The roots are obtained as reciprocals of the roots of the reversed
//! polynomial `p_α(z) = z^{τ+1} - z^τ + α`, computed as eigenvalues of its
//! companion matrix. `p_α` keeps every root within a unit-ish disc, while
//! the non-dominant roots of `π_α` grow like `α^{-1/τ}`. A few Newton steps
//! on `π_α` then polish each root.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = Complex<f64>;

/// Largest supported degree `τ + 1`.
pub const MAX_DEGREE: usize = 128;

/// Relative imaginary part below which a root counts as real.
pub const REAL_TOL: f64 = 1e-9;

/// Convergence threshold on the scaled residual.
pub const RESIDUAL_TOL: f64 = 1e-9;

const NEWTON_STEPS: usize = 3;

/// Slack for comparisons that are tight by construction (e.g. `τ = 0`,
/// where `1/ζ_1 = 1 - α` exactly).
const BOUND_SLACK: f64 = 1e-12;

/// `π_α(z)` by Horner's rule.
pub fn pi(alpha: f64, tau: usize, z: C64) -> C64 {
    C64::new(1.0, 0.0) - z + z.powu(tau as u32 + 1) * alpha
}

/// `π'_α(z) = -1 + α(τ+1) z^τ`.
pub fn pi_prime(alpha: f64, tau: usize, z: C64) -> C64 {
    z.powu(tau as u32) * (alpha * (tau as f64 + 1.0)) - C64::new(1.0, 0.0)
}

/// `p_α(z) = z^{τ+1} - z^τ + α`.
pub fn p_reversed(alpha: f64, tau: usize, z: C64) -> C64 {
    (z - 1.0) * z.powu(tau as u32) + alpha
}

/// All `τ+1` roots of `π_α`, sorted by modulus ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    pub alpha: f64,
    pub tau: usize,
    #[serde(with = "complex_list")]
    pub roots: Vec<C64>,
    /// `max_i |π_α(ζ_i)|`.
    pub residual: f64,
    /// `max_i |π_α(ζ_i)| / (1 + |ζ_i| + α|ζ_i|^{τ+1})`, the backward error
    /// used for the convergence test.
    pub scaled_residual: f64,
}

impl RootSet {
    /// The root of smallest modulus (largest reciprocal).
    pub fn dominant(&self) -> C64 {
        self.roots[0]
    }

    pub fn reciprocals(&self) -> Vec<C64> {
        self.roots.iter().map(|z| z.inv()).collect()
    }

    /// `min_{i<j} |ζ_i - ζ_j| / max_i |ζ_i|`; `+inf` for a single root.
    pub fn min_relative_separation(&self) -> f64 {
        let scale = self.roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut sep = f64::INFINITY;
        for (i, a) in self.roots.iter().enumerate() {
            for b in &self.roots[i + 1..] {
                sep = sep.min((a - b).norm());
            }
        }
        sep / scale
    }

    /// `max_i |p_α(1/ζ_i)|`.
    pub fn reciprocal_residual(&self) -> f64 {
        self.roots.iter().map(|z| p_reversed(self.alpha, self.tau, z.inv()).norm()).fold(0.0, f64::max)
    }
}

/// Finds the roots of `π_α` for `α > 0`, `τ + 1 <= 128`.
pub fn find_roots(alpha: f64, tau: usize) -> Result<RootSet> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let n = tau + 1;
    if n > MAX_DEGREE {
        return Err(Error::InvalidParameter(format!("degree tau+1 = {n} exceeds {MAX_DEGREE}")));
    }

    // Companion matrix of z^n - z^{n-1} + α: first row (1, 0, .., 0, -α).
    let recips: Vec<C64> = if n == 1 {
        vec![C64::new(1.0 - alpha, 0.0)]
    } else {
        let mut m = DMatrix::<f64>::zeros(n, n);
        m[(0, 0)] = 1.0;
        m[(0, n - 1)] -= alpha;
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        m.complex_eigenvalues().iter().copied().collect()
    };

    let mut roots: Vec<C64> = recips
        .into_iter()
        .map(|r| {
            let mut z = r.inv();
            let mut res = pi(alpha, tau, z).norm();
            for _ in 0..NEWTON_STEPS {
                let step = pi(alpha, tau, z) / pi_prime(alpha, tau, z);
                let cand = z - step;
                let cand_res = pi(alpha, tau, cand).norm();
                if !(cand_res.is_finite() && cand_res < res) {
                    break;
                }
                z = cand;
                res = cand_res;
            }
            z
        })
        .collect();
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));

    let mut residual = 0.0f64;
    let mut scaled_residual = 0.0f64;
    for z in &roots {
        let r = pi(alpha, tau, *z).norm();
        if !(z.norm().is_finite() && r.is_finite()) {
            // τ = 0, α = 1: π_α is constant and has no finite root.
            return Err(Error::NoConvergence { residual: f64::INFINITY });
        }
        let scale = 1.0 + z.norm() + alpha * z.norm().powi(n as i32);
        residual = residual.max(r);
        scaled_residual = scaled_residual.max(r / scale);
    }
    if !(scaled_residual < RESIDUAL_TOL) {
        return Err(Error::NoConvergence { residual: scaled_residual });
    }
    Ok(RootSet { alpha, tau, roots, residual, scaled_residual })
}

/// Outcome of checking every clause of the root lemma for one `(α, τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootCertificate {
    pub roots: RootSet,
    /// Whether `α ∈ (0, 1/(20(τ+1))]`, where all clauses are claimed.
    pub in_precondition: bool,
    /// The root of largest reciprocal is real.
    pub dominant_real: bool,
    /// `1/ζ_1 <= 1 - α`.
    pub dominant_bound: bool,
    /// `|1/ζ_i| <= 1 - 3/(2(τ+1))` for the other roots.
    pub nondominant_bound: bool,
    /// `|π'_α(ζ_i)| > 1/2` for every root.
    pub derivative_bound: bool,
    pub dominant_reciprocal: f64,
    pub max_nondominant_reciprocal: f64,
    pub min_derivative: f64,
}

impl RootCertificate {
    pub fn all_pass(&self) -> bool {
        self.dominant_real && self.dominant_bound && self.nondominant_bound && self.derivative_bound
    }
}

/// Evaluates the four clauses. Out-of-range `α` is reported, not rejected.
pub fn certify_lemma1(alpha: f64, tau: usize) -> Result<RootCertificate> {
    let roots = find_roots(alpha, tau)?;
    let cap = 1.0 / (20.0 * (tau as f64 + 1.0));
    let z1 = roots.dominant();
    let dominant_real = z1.im.abs() < REAL_TOL * z1.norm();
    let dominant_reciprocal = 1.0 / z1.re;
    let dominant_bound = dominant_reciprocal <= (1.0 - alpha) * (1.0 + BOUND_SLACK);
    let max_nondominant_reciprocal = roots.roots[1..].iter().map(|z| z.inv().norm()).fold(0.0, f64::max);
    let nondominant_cap = 1.0 - 3.0 / (2.0 * (tau as f64 + 1.0));
    let nondominant_bound = roots.roots[1..].iter().all(|z| z.inv().norm() <= nondominant_cap);
    let min_derivative = roots.roots.iter().map(|z| pi_prime(alpha, tau, *z).norm()).fold(f64::INFINITY, f64::min);
    let derivative_bound = min_derivative > 0.5;
    Ok(RootCertificate {
        in_precondition: alpha <= cap,
        dominant_real,
        dominant_bound,
        nondominant_bound,
        derivative_bound,
        dominant_reciprocal,
        max_nondominant_reciprocal,
        min_derivative,
        roots,
    })
}

/// The interval `(1 - 1/(2(τ+1)), 1 - α]` that must contain `1/ζ_1`.
/// Errors with [`Error::BracketViolation`] if the computed root is outside.
pub fn dominant_root_bracket(alpha: f64, tau: usize) -> Result<(f64, f64)> {
    let cap = 1.0 / (20.0 * (tau as f64 + 1.0));
    if !(alpha > 0.0 && alpha <= cap) {
        return Err(Error::PreconditionViolated(format!("alpha = {alpha} outside (0, {cap}]")));
    }
    let lo = 1.0 - 1.0 / (2.0 * (tau as f64 + 1.0));
    let hi = 1.0 - alpha;
    let roots = find_roots(alpha, tau)?;
    let z1 = roots.dominant();
    let value = 1.0 / z1.re;
    if z1.im.abs() >= REAL_TOL * z1.norm() || !(value > lo && value <= hi * (1.0 + BOUND_SLACK)) {
        return Err(Error::BracketViolation { value, lo, hi });
    }
    Ok((lo, hi))
}

mod complex_list {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Pair {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| Pair { re: z.re, im: z.im }).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Ok(Vec::<Pair>::deserialize(d)?.into_iter().map(|p| C64::new(p.re, p.im)).collect())
    }
}
