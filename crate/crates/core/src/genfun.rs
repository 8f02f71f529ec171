//! Coefficients `b_k = [z^k] 1/π_α(z)` of the delayed-GD scalar recurrence
//!
//! ```text
//! b_0 = … = b_τ = 1,   b_{k+1} = b_k - α b_{k-τ}  (k ≥ τ)
//! ```
//!
//! computed two ways: the literal recurrence (the reference) and the
//! partial-fraction sum `Σ_i -1 / (π'(ζ_i) ζ_i^{k+1})` over the roots of
//! `π_α`. Also holds the per-eigenvalue closed-form DGD error and grid
//! checks of the auxiliary inequalities behind the coefficient bounds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::format::g17;
use crate::quadratic::QuadraticProblem;
use crate::roots::{self, pi_prime, C64};
use crate::{Error, Result};

/// Minimum relative root separation accepted by the partial-fraction path.
pub const MIN_ROOT_SEPARATION: f64 = 1e-8;

/// Largest imaginary part tolerated in a partial-fraction coefficient.
pub const MAX_IMAGINARY_RESIDUE: f64 = 1e-8;

/// Absolute slack on `|b_k| <= 1` to absorb rounding when the bound is tight.
pub const UNIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMethod {
    Recurrence,
    PartialFractions,
}

/// `b_0..b_K` for `b_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSeries {
    pub alpha: f64,
    pub tau: usize,
    pub coeffs: Vec<f64>,
    pub method: CoefficientMethod,
}

impl CoefficientSeries {
    /// Coefficients for a general starting value `b_0` (the generating
    /// function is `b_0 / π_α`).
    pub fn scaled(&self, b0: f64) -> Vec<f64> {
        self.coeffs.iter().map(|b| b * b0).collect()
    }

    /// Writes `k,b_k,bound_regime,bound_value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k0 = regime_threshold(self.tau);
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["k", "b_k", "bound_regime", "bound_value"])?;
        for (k, b) in self.coeffs.iter().enumerate() {
            let (regime, bound) = if k < k0 {
                ("unit", 1.0)
            } else {
                ("geometric", geometric_bound(self.alpha, k))
            };
            w.write_record([k.to_string(), g17(*b), regime.to_string(), g17(bound)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `k₀ = ⌈(τ+1) ln(2(τ+1))⌉`, the first index of the geometric regime.
pub fn regime_threshold(tau: usize) -> usize {
    let t = tau as f64 + 1.0;
    (t * (2.0 * t).ln()).ceil() as usize
}

/// `3 (1-α)^{k+1}`.
pub fn geometric_bound(alpha: f64, k: usize) -> f64 {
    3.0 * (1.0 - alpha).powi(k as i32 + 1)
}

/// `α_max = 1/(20(τ+1))`, the largest step for which the two-regime bound holds.
pub fn alpha_cap(tau: usize) -> f64 {
    1.0 / (20.0 * (tau as f64 + 1.0))
}

pub fn coeffs_recurrence(alpha: f64, tau: usize, k_max: usize) -> CoefficientSeries {
    let mut b = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        if k <= tau {
            b.push(1.0);
        } else {
            let next = b[k - 1] - alpha * b[k - 1 - tau];
            b.push(next);
        }
    }
    CoefficientSeries { alpha, tau, coeffs: b, method: CoefficientMethod::Recurrence }
}

pub fn coeffs_partial_fractions(alpha: f64, tau: usize, k_max: usize) -> Result<CoefficientSeries> {
    let roots = roots::find_roots(alpha, tau)?;
    let separation = roots.min_relative_separation();
    if !(separation > MIN_ROOT_SEPARATION) {
        return Err(Error::NearlyRepeatedRoots { separation });
    }
    // b_k = Σ_i w_i r_i^k with r_i = 1/ζ_i and w_i = -1 / (π'(ζ_i) ζ_i).
    let ratios: Vec<C64> = roots.roots.iter().map(|z| z.inv()).collect();
    let mut terms: Vec<C64> = roots
        .roots
        .iter()
        .zip(&ratios)
        .map(|(z, r)| -(pi_prime(alpha, tau, *z).inv()) * r)
        .collect();
    let mut coeffs = Vec::with_capacity(k_max + 1);
    let mut worst_im = 0.0f64;
    for _ in 0..=k_max {
        let sum: C64 = terms.iter().sum();
        worst_im = worst_im.max(sum.im.abs());
        coeffs.push(sum.re);
        for (t, r) in terms.iter_mut().zip(&ratios) {
            *t *= r;
        }
    }
    if worst_im >= MAX_IMAGINARY_RESIDUE {
        return Err(Error::ImaginaryResidue(worst_im));
    }
    Ok(CoefficientSeries { alpha, tau, coeffs, method: CoefficientMethod::PartialFractions })
}

/// Partial fractions when the roots allow it, the recurrence otherwise
/// (`α = 0`, degree above the root-finder cap, or nearly repeated roots).
pub fn coeffs_auto(alpha: f64, tau: usize, k_max: usize) -> CoefficientSeries {
    if alpha > 0.0 && tau < roots::MAX_DEGREE {
        if let Ok(s) = coeffs_partial_fractions(alpha, tau, k_max) {
            return s;
        }
    }
    coeffs_recurrence(alpha, tau, k_max)
}

/// Closed-form DGD errors `e_0..e_K` on a spectral problem: coordinate `j`
/// of `e_k` is `[z^k] 1/π_{η a_j}(z) · e0_j`.
pub fn dgd_closed_form_error(
    p: &QuadraticProblem,
    e0: &[f64],
    eta: f64,
    tau: usize,
    k_max: usize,
) -> Result<Vec<Vec<f64>>> {
    let a = p
        .spectral()
        .ok_or_else(|| Error::InvalidParameter("closed form needs a spectral problem".into()))?;
    if a.len() != e0.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: e0.len() });
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    let series: Vec<CoefficientSeries> = a.iter().map(|&aj| coeffs_auto(eta * aj, tau, k_max)).collect();
    Ok((0..=k_max)
        .map(|k| series.iter().zip(e0).map(|(s, e)| s.coeffs[k] * e).collect())
        .collect())
}

/// Per-`k` outcomes of the coefficient bounds for one `(α, τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBoundCertificate {
    pub alpha: f64,
    pub tau: usize,
    /// `⌈(τ+1) ln(2(τ+1))⌉`.
    pub k0: usize,
    /// `α ∈ [0, 1/τ]` (`α ∈ [0, 1]` when `τ = 0`): `|b_k| <= 1` is claimed for all k.
    pub unit_bound_claimed: bool,
    /// `α ∈ (0, 1/(20(τ+1))]`: the two-regime bound is claimed.
    pub two_regime_claimed: bool,
    /// `|b_k| <= 1` for `k = 0..=K`.
    pub within_unit: Vec<bool>,
    /// `|b_k| <= 3(1-α)^{k+1}` for `k = k0..=K`.
    pub within_geometric: Vec<bool>,
}

impl CoefficientBoundCertificate {
    pub fn unit_bound_holds(&self) -> bool {
        self.within_unit.iter().all(|&ok| ok)
    }

    pub fn two_regime_holds(&self) -> bool {
        self.within_unit[..self.k0].iter().all(|&ok| ok) && self.within_geometric.iter().all(|&ok| ok)
    }

    /// Every claimed bound holds.
    pub fn passed(&self) -> bool {
        (!self.unit_bound_claimed || self.unit_bound_holds()) && (!self.two_regime_claimed || self.two_regime_holds())
    }
}

pub fn verify_coefficient_bounds(alpha: f64, tau: usize, k_max: usize) -> Result<CoefficientBoundCertificate> {
    let k0 = regime_threshold(tau);
    if k_max < k0 {
        return Err(Error::InvalidParameter(format!("K = {k_max} is below k0 = {k0}")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be non-negative, got {alpha}")));
    }
    let b = coeffs_recurrence(alpha, tau, k_max).coeffs;
    let unit_cap = if tau == 0 { 1.0 } else { 1.0 / tau as f64 };
    Ok(CoefficientBoundCertificate {
        alpha,
        tau,
        k0,
        unit_bound_claimed: alpha <= unit_cap,
        two_regime_claimed: alpha > 0.0 && alpha <= alpha_cap(tau),
        within_unit: b.iter().map(|x| x.abs() <= 1.0 + UNIT_SLACK).collect(),
        within_geometric: (k0..=k_max).map(|k| b[k].abs() <= geometric_bound(alpha, k)).collect(),
    })
}

/// `1 - 1/(x+1) >= exp(-1/x)` on `points` log-spaced values of `x` in
/// `[1e-3, 1e3]`. Returns the failing `x` values.
pub fn tech1_grid_check(points: usize) -> Vec<f64> {
    let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
    (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64).exp())
        .filter(|&x| x / (x + 1.0) < (-1.0 / x).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KRegimeFailure {
    pub tau: usize,
    pub alpha: f64,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KRegimeReport {
    pub checked: usize,
    /// Violations of `((1 - 3/(2(τ+1))) / (1-α))^{k+1} <= exp(-(k+1)/(τ+1))`.
    pub inequality_failures: Vec<KRegimeFailure>,
    /// Violations of `1 + τ((1 - 3/(2(τ+1))) / (1-α))^{k+1} <= 3/2` for
    /// `k >= (τ+1) ln(2(τ+1)) - 1`.
    pub consequence_failures: Vec<KRegimeFailure>,
}

impl KRegimeReport {
    pub fn passed(&self) -> bool {
        self.inequality_failures.is_empty() && self.consequence_failures.is_empty()
    }

    pub fn failing_taus(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.inequality_failures.iter().map(|f| f.tau).collect();
        t.dedup();
        t
    }
}

/// Grid check of the k-regime inequality and its consequence for
/// `α = i/n · 1/(20(τ+1))`, `i = 1..=n`, and `k = 0..=k_max`.
pub fn k_regime_grid_check(taus: impl IntoIterator<Item = usize>, alphas_per_tau: usize, k_max: usize) -> KRegimeReport {
    let mut report = KRegimeReport { checked: 0, inequality_failures: vec![], consequence_failures: vec![] };
    for tau in taus {
        let t = tau as f64 + 1.0;
        let start = t * (2.0 * t).ln() - 1.0;
        for i in 1..=alphas_per_tau {
            let alpha = alpha_cap(tau) * i as f64 / alphas_per_tau as f64;
            let base = (1.0 - 3.0 / (2.0 * t)) / (1.0 - alpha);
            for k in 0..=k_max {
                report.checked += 1;
                let lhs = base.powi(k as i32 + 1);
                let rhs = (-(k as f64 + 1.0) / t).exp();
                if lhs > rhs {
                    report.inequality_failures.push(KRegimeFailure { tau, alpha, k, lhs, rhs });
                }
                if k as f64 >= start {
                    let cons = 1.0 + tau as f64 * lhs;
                    if cons > 1.5 {
                        report.consequence_failures.push(KRegimeFailure { tau, alpha, k, lhs: cons, rhs: 1.5 });
                    }
                }
            }
        }
    }
    report
}
