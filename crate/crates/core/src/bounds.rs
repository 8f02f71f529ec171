//! Closed-form convergence bounds for DGD/SDGD, the matching lower bounds,
//! step-size tuning, and the exact expected suboptimality of SDGD under
//! isotropic Gaussian noise.
//!
//! Every bound has a checked entry point that returns
//! [`Error::PreconditionViolated`] outside its validity region and an
//! unchecked `formula` used for plotting with `force`.

use std::f64::consts::E;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::format::g17;
use crate::genfun::{coeffs_auto, regime_threshold};
use crate::quadratic::QuadraticProblem;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Thm1Upper,
    Thm2Upper,
    Thm3LowerStrong,
    Thm3LowerConvex,
    Thm4StrongUpper,
    Thm4ConvexUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    Strong,
    Convex,
}

impl BoundKind {
    pub const ALL: [BoundKind; 6] = [
        BoundKind::Thm1Upper,
        BoundKind::Thm2Upper,
        BoundKind::Thm3LowerStrong,
        BoundKind::Thm3LowerConvex,
        BoundKind::Thm4StrongUpper,
        BoundKind::Thm4ConvexUpper,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BoundKind::Thm1Upper => "thm1_upper",
            BoundKind::Thm2Upper => "thm2_upper",
            BoundKind::Thm3LowerStrong => "thm3_lower_strong",
            BoundKind::Thm3LowerConvex => "thm3_lower_convex",
            BoundKind::Thm4StrongUpper => "thm4_strong_upper",
            BoundKind::Thm4ConvexUpper => "thm4_convex_upper",
        }
    }

    pub fn is_lower(self) -> bool {
        matches!(self, BoundKind::Thm3LowerStrong | BoundKind::Thm3LowerConvex)
    }

    /// First admissible `k`: `τ+1` for lower bounds, `⌈(τ+1) ln(2(τ+1))⌉` otherwise.
    pub fn valid_from_k(self, tau: usize) -> usize {
        if self.is_lower() {
            tau + 1
        } else {
            regime_threshold(tau)
        }
    }
}

/// Problem and algorithm constants shared by all bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
    pub tau: usize,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub sigma2: f64,
    pub e0_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

impl BoundParams {
    /// `η ∈ (0, 1/(20 μ (τ+1))]`.
    pub fn eta_valid(&self) -> bool {
        self.eta > 0.0 && self.eta <= 1.0 / (20.0 * self.mu * (self.tau as f64 + 1.0))
    }

    /// The bare expression, with no domain checks.
    pub fn formula(&self, kind: BoundKind, k: usize) -> f64 {
        let BoundParams { mu, lambda, tau, eta, sigma2, e0_sq, .. } = *self;
        let kf = k as f64;
        let t1 = tau as f64 + 1.0;
        let warmup = mu * t1 * (2.0 * t1).ln();
        match kind {
            BoundKind::Thm1Upper => 5.0 * mu * (1.0 - eta * lambda).powf(2.0 * (kf + 1.0)) * e0_sq,
            BoundKind::Thm2Upper => 9.0 / (4.0 * E * eta * (kf + 1.0)) * e0_sq,
            BoundKind::Thm3LowerStrong => {
                let sk = (mu / lambda).sqrt();
                lambda / 4.0 * (-5.0 * kf / ((sk - 1.0) * t1)).exp() * e0_sq
            }
            BoundKind::Thm3LowerConvex => mu * t1 * t1 * e0_sq / (45.0 * kf * kf),
            BoundKind::Thm4StrongUpper => {
                let det = 5.0 * mu * (-2.0 * eta * lambda * (kf + 1.0)).exp() * e0_sq;
                if sigma2 == 0.0 {
                    return det;
                }
                let tail = (1.0 + E + (1.0 / (eta * lambda)).ln()) / (E * eta);
                det + eta * eta * sigma2 / 2.0 * (warmup + tail)
            }
            BoundKind::Thm4ConvexUpper => {
                let det = 9.0 * e0_sq / (4.0 * E * eta * (kf + 1.0));
                if sigma2 == 0.0 {
                    return det;
                }
                let tail = 9.0 / (2.0 * E * eta) * (1.0 + (kf + 1.0).ln());
                det + eta * eta * sigma2 * (warmup + tail)
            }
        }
    }

    /// Checks every precondition of `kind` at `k`; the message names the first failure.
    pub fn check(&self, kind: BoundKind, k: usize) -> Result<()> {
        let fail = |m: String| Err(Error::PreconditionViolated(m));
        if !(self.mu > 0.0) {
            return fail(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.e0_sq >= 0.0) {
            return fail(format!("|e0|^2 must be non-negative, got {}", self.e0_sq));
        }
        if !(self.lambda >= 0.0 && self.lambda <= self.mu) {
            return fail(format!("lambda must lie in [0, mu], got {}", self.lambda));
        }
        if !kind.is_lower() && !self.eta_valid() {
            return fail(format!(
                "eta = {} outside (0, 1/(20 mu (tau+1))] = (0, {}]",
                self.eta,
                1.0 / (20.0 * self.mu * (self.tau as f64 + 1.0))
            ));
        }
        if !(self.sigma2 >= 0.0) {
            return fail(format!("sigma2 must be non-negative, got {}", self.sigma2));
        }
        match kind {
            BoundKind::Thm4StrongUpper if !(self.lambda > 0.0) => {
                return fail("strongly convex bound needs lambda > 0".into());
            }
            BoundKind::Thm3LowerStrong if !(self.lambda > 0.0 && self.mu > self.lambda) => {
                return fail(format!("strong lower bound needs kappa > 1, got mu = {}, lambda = {}", self.mu, self.lambda));
            }
            _ => {}
        }
        let from = kind.valid_from_k(self.tau);
        if k < from {
            return fail(format!("k = {k} is below the first admissible iteration {from}"));
        }
        Ok(())
    }

    pub fn evaluate(&self, kind: BoundKind, k: usize) -> Result<f64> {
        self.check(kind, k)?;
        Ok(self.formula(kind, k))
    }
}

/// `5 μ (1-ηλ)^{2(k+1)} ‖e0‖²`.
pub fn thm1_upper(mu: f64, lambda: f64, eta: f64, tau: usize, e0_sq: f64, k: usize) -> Result<f64> {
    BoundParams { mu, lambda, tau, eta, sigma2: 0.0, e0_sq, d: None }.evaluate(BoundKind::Thm1Upper, k)
}

/// `9 ‖e0‖² / (4 e η (k+1))`.
pub fn thm2_upper(mu: f64, eta: f64, tau: usize, e0_sq: f64, k: usize) -> Result<f64> {
    BoundParams { mu, lambda: 0.0, tau, eta, sigma2: 0.0, e0_sq, d: None }.evaluate(BoundKind::Thm2Upper, k)
}

/// Strong: `(λ/4) exp(-5k/((√κ-1)(τ+1))) ‖e0‖²`; convex: `μ (τ+1)² ‖e0‖² / (45 k²)`.
pub fn thm3_lower(kind: Curvature, mu: f64, lambda: f64, tau: usize, k: usize, e0_sq: f64) -> Result<f64> {
    let (kind, lambda) = match kind {
        Curvature::Strong => (BoundKind::Thm3LowerStrong, lambda),
        Curvature::Convex => (BoundKind::Thm3LowerConvex, 0.0),
    };
    BoundParams { mu, lambda, tau, eta: 0.0, sigma2: 0.0, e0_sq, d: None }.evaluate(kind, k)
}

#[allow(clippy::too_many_arguments)]
pub fn thm4_upper(
    kind: Curvature,
    mu: f64,
    lambda: f64,
    eta: f64,
    tau: usize,
    sigma2: f64,
    e0_sq: f64,
    k: usize,
) -> Result<f64> {
    let (kind, lambda) = match kind {
        Curvature::Strong => (BoundKind::Thm4StrongUpper, lambda),
        Curvature::Convex => (BoundKind::Thm4ConvexUpper, lambda.max(0.0)),
    };
    BoundParams { mu, lambda, tau, eta, sigma2, e0_sq, d: None }.evaluate(kind, k)
}

fn check_tuning(mu: f64, tau: usize, k: usize) -> Result<()> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    if tau == 0 {
        return Err(Error::InvalidParameter("step tuning needs tau >= 1".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("step tuning needs k >= 1".into()));
    }
    Ok(())
}

/// Three-case step choice for the strongly convex stochastic bound.
pub fn tune_eta_strong(mu: f64, lambda: f64, tau: usize, sigma2: f64, e0_sq: f64, k: usize) -> Result<f64> {
    check_tuning(mu, tau, k)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let cap = 1.0 / (20.0 * mu * tau as f64);
    if sigma2 == 0.0 {
        return Ok(cap);
    }
    let kf = k as f64;
    let t = (lambda * mu * e0_sq * kf / sigma2).ln() / (2.0 * lambda * kf);
    Ok(if t.is_nan() || t < 0.0 {
        0.0
    } else if t > cap {
        cap
    } else {
        t
    })
}

/// Two-case step choice for the convex stochastic bound.
pub fn tune_eta_convex(mu: f64, tau: usize, sigma: f64, e0_norm: f64, k: usize) -> Result<f64> {
    check_tuning(mu, tau, k)?;
    let cap = 1.0 / (20.0 * mu * tau as f64);
    if sigma == 0.0 {
        return Ok(cap);
    }
    Ok((e0_norm / (sigma * (k as f64).sqrt())).min(cap))
}

/// `E[F(w_k) - F*]` for SDGD with `ξ_k ~ N(0, σ²/d · I)` injected at steps `k >= τ`:
/// `½ Σ_j a_j (c_k^{(j)} e0_j)² + (η²σ²/(2d)) Σ_{i=0}^{k-τ-1} Σ_j a_j (c_i^{(j)})²`
/// where `c^{(j)}` are the coefficients of `1/π_{η a_j}`.
pub fn exact_expected_suboptimality(
    p: &QuadraticProblem,
    e0: &[f64],
    eta: f64,
    tau: usize,
    sigma2: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    let a = p
        .spectral()
        .ok_or_else(|| Error::InvalidParameter("exact expectation needs a spectral problem".into()))?;
    if e0.len() != a.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: e0.len() });
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma2 must be non-negative, got {sigma2}")));
    }
    let d = a.len() as f64;
    let series: Vec<Vec<f64>> = a.iter().map(|&aj| coeffs_auto(eta * aj, tau, k_max).coeffs).collect();
    let noise_scale = eta * eta * sigma2 / (2.0 * d);
    let mut out = Vec::with_capacity(k_max + 1);
    let mut energy = 0.0;
    for k in 0..=k_max {
        let det: f64 = a.iter().zip(&series).zip(e0).map(|((aj, c), e)| aj * (c[k] * e).powi(2)).sum::<f64>() / 2.0;
        if k > tau {
            let i = k - tau - 1;
            energy += a.iter().zip(&series).map(|(aj, c)| aj * c[i] * c[i]).sum::<f64>();
        }
        out.push(det + noise_scale * energy);
    }
    Ok(out)
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    let ends = [(lo, f(lo)), (hi, f(hi)), (x1, f1), (x2, f2)];
    ends.into_iter().fold((lo, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

/// `max_{lo <= a < 1/η} a (1-ηa)^n` by golden section.
pub fn power_max(eta: f64, n: usize, lo: f64) -> (f64, f64) {
    golden_max(|a| a * (1.0 - eta * a).powi(n as i32), lo, 1.0 / eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBoundRow {
    pub k: usize,
    pub maximizer: f64,
    pub maximum: f64,
    pub bound: f64,
    pub harmonic_sum: f64,
    pub harmonic_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerBoundCertificate {
    pub eta: f64,
    pub rows: Vec<PowerBoundRow>,
    pub lambda: Option<f64>,
    pub restricted_sum: Option<f64>,
    pub restricted_bound: Option<f64>,
}

impl PowerBoundCertificate {
    pub fn max_holds(&self) -> bool {
        self.rows.iter().all(|r| r.maximum <= r.bound)
    }

    pub fn harmonic_holds(&self) -> bool {
        self.rows.iter().all(|r| r.harmonic_sum <= r.harmonic_bound)
    }

    pub fn restricted_holds(&self) -> bool {
        match (self.restricted_sum, self.restricted_bound) {
            (Some(s), Some(b)) => s <= b,
            _ => true,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_holds() && self.harmonic_holds() && self.restricted_holds()
    }
}

/// For `k = 1..=k_max`: `max_{0<a<1/η} a(1-ηa)^k <= 1/(eηk)` and
/// `Σ_{i=0}^k max_a a(1-ηa)^{2(i+1)} <= (1 + ln(k+1))/(2eη)`. With `lambda`,
/// also `Σ_{i=0}^{k_max} max_{λ<a<1/η} a(1-ηa)^{2(i+1)} <= (1+e+ln(1/(ηλ)))/(eη)`.
pub fn convex_power_bound_check(eta: f64, k_max: usize, lambda: Option<f64>) -> Result<PowerBoundCertificate> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if let Some(l) = lambda {
        if !(l > 0.0 && l < 1.0 / eta) {
            return Err(Error::InvalidParameter(format!("lambda must lie in (0, 1/eta), got {l}")));
        }
    }
    let mut rows = Vec::with_capacity(k_max);
    let mut sum = power_max(eta, 2, 0.0).1;
    for k in 1..=k_max {
        let (maximizer, maximum) = power_max(eta, k, 0.0);
        sum += power_max(eta, 2 * (k + 1), 0.0).1;
        rows.push(PowerBoundRow {
            k,
            maximizer,
            maximum,
            bound: 1.0 / (E * eta * k as f64),
            harmonic_sum: sum,
            harmonic_bound: (1.0 + (k as f64 + 1.0).ln()) / (2.0 * E * eta),
        });
    }
    let (restricted_sum, restricted_bound) = match lambda {
        Some(l) => {
            let s: f64 = (0..=k_max).map(|i| power_max(eta, 2 * (i + 1), l).1).sum();
            (Some(s), Some((1.0 + E + (1.0 / (eta * l)).ln()) / (E * eta)))
        }
        None => (None, None),
    };
    Ok(PowerBoundCertificate { eta, rows, lambda, restricted_sum, restricted_bound })
}

/// One bound evaluated over a range of iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub params: BoundParams,
    pub ks: Vec<usize>,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub valid_from_k: usize,
    pub eta_valid: bool,
    pub forced: bool,
}

impl BoundReport {
    /// Evaluates `kind` for `k ∈ [k_from, k_max]`. Without `force` any
    /// precondition failure is an error; with it, failures are flagged per row.
    pub fn evaluate(kind: BoundKind, params: BoundParams, k_from: usize, k_max: usize, force: bool) -> Result<Self> {
        if k_from > k_max {
            return Err(Error::InvalidParameter(format!("empty iteration range {k_from}..={k_max}")));
        }
        let mut ks = Vec::with_capacity(k_max - k_from + 1);
        let mut values = Vec::with_capacity(ks.capacity());
        let mut valid = Vec::with_capacity(ks.capacity());
        for k in k_from..=k_max {
            let ok = match params.check(kind, k) {
                Ok(()) => true,
                Err(e) if !force => return Err(e),
                Err(_) => false,
            };
            ks.push(k);
            values.push(params.formula(kind, k));
            valid.push(ok);
        }
        Ok(BoundReport {
            kind,
            params,
            ks,
            values,
            valid,
            valid_from_k: kind.valid_from_k(params.tau),
            eta_valid: params.eta_valid(),
            forced: force,
        })
    }

    /// Writes `k,value,valid,kind`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["k", "value", "valid", "kind"])?;
        for ((k, v), ok) in self.ks.iter().zip(&self.values).zip(&self.valid) {
            w.write_record([k.to_string(), g17(*v), ok.to_string(), self.kind.label().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}
