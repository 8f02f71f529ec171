//! Convex quadratic objectives `F(w) = ½ wᵀAw + bᵀw + c`.
//!
//! Most of the crate works in the eigenbasis of `A` ([`Hessian::Spectral`]),
//! where delayed gradient descent decouples into independent scalar
//! recurrences. Dense Hessians are kept for the tridiagonal lower-bound
//! instances, whose sparsity pattern matters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative threshold on `‖b‖` above which a kernel component of `b`
/// makes the objective unbounded below.
pub const KERNEL_TOL: f64 = 1e-9;

/// Eigenvalues below this (relative to the largest) count as zero.
const NULL_EIG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Hessian {
    /// `A = diag(a_1..a_d)`.
    Spectral(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Hessian {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Spectral(a) => a.len(),
            Hessian::Dense(m) => m.nrows(),
        }
    }

    /// `out = A v`. No dimension checks.
    pub(crate) fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Hessian::Spectral(a) => {
                for ((o, &ai), &vi) in out.iter_mut().zip(a).zip(v) {
                    *o = ai * vi;
                }
            }
            Hessian::Dense(m) => {
                let d = m.nrows();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += m[(i, j)] * v[j];
                    }
                    *o = acc;
                }
            }
        }
    }

    /// `vᵀ A v`.
    pub(crate) fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            Hessian::Spectral(a) => a.iter().zip(v).map(|(ai, vi)| ai * vi * vi).sum(),
            Hessian::Dense(_) => {
                let mut av = vec![0.0; v.len()];
                self.apply_into(v, &mut av);
                av.iter().zip(v).map(|(x, y)| x * y).sum()
            }
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut eig = match self {
            Hessian::Spectral(a) => a.clone(),
            Hessian::Dense(m) => SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect(),
        };
        eig.sort_by(f64::total_cmp);
        eig
    }
}

/// A PSD quadratic with its spectral range and a minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    hessian: Hessian,
    b: Vec<f64>,
    c: f64,
    mu: f64,
    lambda: f64,
    w_star: Vec<f64>,
    f_star: f64,
}

impl QuadraticProblem {
    /// Builds a problem from `(A, b, c)`, computing the minimum-norm minimizer.
    pub fn new(hessian: Hessian, b: Vec<f64>, c: f64) -> Result<Self> {
        let d = hessian.dim();
        check_dim(d, b.len())?;
        let (lambda, mu) = spectral_range(&hessian)?;
        let w_star = minimizer(&hessian, &b)?;
        let mut p = QuadraticProblem { hessian, b, c, mu, lambda, w_star, f_star: 0.0 };
        p.f_star = p.evaluate_unchecked(&p.w_star);
        Ok(p)
    }

    /// Spectral problem with a prescribed minimizer and minimum value.
    ///
    /// `b = -A w*` so the gradient at `w*` vanishes exactly.
    pub fn spectral_with_minimizer(eigenvalues: Vec<f64>, w_star: Vec<f64>, f_star: f64) -> Result<Self> {
        check_dim(eigenvalues.len(), w_star.len())?;
        let hessian = Hessian::Spectral(eigenvalues);
        let (lambda, mu) = spectral_range(&hessian)?;
        let Hessian::Spectral(a) = &hessian else { unreachable!() };
        let b: Vec<f64> = a.iter().zip(&w_star).map(|(ai, wi)| -(ai * wi)).collect();
        let c = f_star + 0.5 * hessian.quad_form(&w_star);
        Ok(QuadraticProblem { hessian, b, c, mu, lambda, w_star, f_star })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn hessian(&self) -> &Hessian {
        &self.hessian
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Smoothness: the largest eigenvalue of `A`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Strong convexity: the smallest eigenvalue of `A` (0 when singular).
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// Spectral eigenvalues, if the problem is in the eigenbasis.
    pub fn spectral(&self) -> Option<&[f64]> {
        match &self.hessian {
            Hessian::Spectral(a) => Some(a),
            Hessian::Dense(_) => None,
        }
    }

    pub fn evaluate(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        Ok(self.evaluate_unchecked(w))
    }

    fn evaluate_unchecked(&self, w: &[f64]) -> f64 {
        let lin: f64 = self.b.iter().zip(w).map(|(b, w)| b * w).sum();
        0.5 * self.hessian.quad_form(w) + lin + self.c
    }

    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), w.len())?;
        let mut g = vec![0.0; w.len()];
        self.gradient_into(w, &mut g);
        Ok(g)
    }

    /// `g = A w + b`. No dimension checks.
    pub(crate) fn gradient_into(&self, w: &[f64], g: &mut [f64]) {
        self.hessian.apply_into(w, g);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi += bi;
        }
    }

    /// `F(w) - F*` computed as `½ eᵀAe` with `e = w - w*`, which avoids the
    /// cancellation in `evaluate(w) - f_star`.
    pub fn suboptimality(&self, w: &[f64]) -> f64 {
        let e: Vec<f64> = w.iter().zip(&self.w_star).map(|(w, s)| w - s).collect();
        0.5 * self.hessian.quad_form(&e)
    }

    /// `½‖√A e‖²` for an error vector `e`.
    pub fn error_energy(&self, e: &[f64]) -> f64 {
        0.5 * self.hessian.quad_form(e)
    }

    pub fn to_file(&self) -> ProblemFile {
        match &self.hessian {
            Hessian::Spectral(a) => ProblemFile::Spectral {
                eigenvalues: a.clone(),
                b: self.b.clone(),
                c: self.c,
                w_star: Some(self.w_star.clone()),
            },
            Hessian::Dense(m) => ProblemFile::Dense {
                dense_a: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
                b: self.b.clone(),
                c: self.c,
                w_star: Some(self.w_star.clone()),
            },
        }
    }

    /// Rebuilds a problem from its JSON form. A supplied `w_star` is kept if
    /// the gradient vanishes there (to 1e-9 relative), otherwise rejected.
    pub fn from_file(file: ProblemFile) -> Result<Self> {
        let (hessian, b, c, w_star) = match file {
            ProblemFile::Spectral { eigenvalues, b, c, w_star } => (Hessian::Spectral(eigenvalues), b, c, w_star),
            ProblemFile::Dense { dense_a, b, c, w_star } => {
                let d = dense_a.len();
                if dense_a.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidParameter("dense_A must be square".into()));
                }
                let m = DMatrix::from_fn(d, d, |i, j| dense_a[i][j]);
                if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::InvalidParameter("dense_A must be symmetric".into()));
                }
                (Hessian::Dense(m), b, c, w_star)
            }
        };
        let mut p = QuadraticProblem::new(hessian, b, c)?;
        if let Some(ws) = w_star {
            let g = p.gradient(&ws)?;
            let scale = 1.0 + p.b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if gmax > 1e-9 * scale {
                return Err(Error::InvalidParameter(format!("w_star is not a minimizer (gradient {gmax:e})")));
            }
            p.f_star = p.evaluate_unchecked(&ws);
            p.w_star = ws;
        }
        Ok(p)
    }
}

/// JSON layout of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemFile {
    Spectral {
        eigenvalues: Vec<f64>,
        b: Vec<f64>,
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_star: Option<Vec<f64>>,
    },
    Dense {
        #[serde(rename = "dense_A")]
        dense_a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_star: Option<Vec<f64>>,
    },
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn spectral_range(h: &Hessian) -> Result<(f64, f64)> {
    let eig = h.eigenvalues();
    let (Some(&lo), Some(&hi)) = (eig.first(), eig.last()) else {
        return Err(Error::InvalidParameter("empty problem".into()));
    };
    if eig.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite eigenvalue".into()));
    }
    let floor = match h {
        Hessian::Spectral(_) => 0.0,
        Hessian::Dense(_) => -1e-10 * hi.abs().max(1.0),
    };
    if lo < floor {
        return Err(Error::InvalidParameter(format!("A is not PSD (eigenvalue {lo})")));
    }
    if hi <= 0.0 {
        return Err(Error::InvalidParameter("A must have a positive eigenvalue".into()));
    }
    Ok((lo.max(0.0), hi))
}

/// Minimum-norm solution of `A w = -b`, or [`Error::UnboundedBelow`] when `b`
/// has a component in `ker(A)` larger than `1e-9 ‖b‖`.
pub fn minimizer(hessian: &Hessian, b: &[f64]) -> Result<Vec<f64>> {
    check_dim(hessian.dim(), b.len())?;
    let b_norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match hessian {
        Hessian::Spectral(a) => {
            let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let null = NULL_EIG_TOL * amax.max(f64::MIN_POSITIVE);
            let kernel_sq: f64 = a.iter().zip(b).filter(|(ai, _)| ai.abs() <= null).map(|(_, bi)| bi * bi).sum();
            let kernel_norm = kernel_sq.sqrt();
            if kernel_norm > KERNEL_TOL * b_norm {
                return Err(Error::UnboundedBelow { kernel_norm });
            }
            Ok(a.iter().zip(b).map(|(&ai, &bi)| if ai.abs() <= null { 0.0 } else { -bi / ai }).collect())
        }
        Hessian::Dense(m) => {
            let eig = SymmetricEigen::new(m.clone());
            let amax = eig.eigenvalues.amax();
            let null = NULL_EIG_TOL * amax.max(f64::MIN_POSITIVE);
            let bv = DVector::from_column_slice(b);
            let mut w = DVector::zeros(b.len());
            let mut kernel_sq = 0.0;
            for (i, &ev) in eig.eigenvalues.iter().enumerate() {
                let v = eig.eigenvectors.column(i);
                let coef = v.dot(&bv);
                if ev.abs() <= null {
                    kernel_sq += coef * coef;
                } else {
                    w -= v * (coef / ev);
                }
            }
            let kernel_norm = kernel_sq.sqrt();
            if kernel_norm > KERNEL_TOL * b_norm {
                return Err(Error::UnboundedBelow { kernel_norm });
            }
            Ok(w.iter().copied().collect())
        }
    }
}

/// Random spectral instance and starting point.
///
/// Eigenvalues are uniform in `[lambda, mu]` with both endpoints present,
/// sorted ascending; `w*` is uniform on the unit sphere, `F* = 0`, and
/// `‖w0 - w*‖ = e0_norm`.
pub fn random_instance(d: usize, lambda: f64, mu: f64, e0_norm: f64, seed: u64) -> Result<(QuadraticProblem, Vec<f64>)> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("d must be at least 2, got {d}")));
    }
    if !(lambda >= 0.0 && lambda <= mu && mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 0 <= lambda <= mu, mu > 0 (got lambda={lambda}, mu={mu})")));
    }
    if !(e0_norm >= 0.0 && e0_norm.is_finite()) {
        return Err(Error::InvalidParameter(format!("e0_norm must be non-negative, got {e0_norm}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eig = vec![lambda, mu];
    eig.extend((2..d).map(|_| rng.random_range(lambda..=mu)));
    eig.sort_by(f64::total_cmp);
    let w_star = unit_vector(&mut rng, d);
    let dir = unit_vector(&mut rng, d);
    let w0: Vec<f64> = w_star.iter().zip(&dir).map(|(s, u)| s + e0_norm * u).collect();
    let p = QuadraticProblem::spectral_with_minimizer(eig, w_star, 0.0)?;
    Ok((p, w0))
}

pub(crate) fn unit_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
