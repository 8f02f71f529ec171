use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use dgd_core::bounds::{self, BoundKind, BoundParams, BoundReport};
use dgd_core::dynamics::{
    self, AgdVariant, DelayedRunConfig, NoiseModel, Trajectory, theory_step,
};
use dgd_core::experiments::{self, StepRule, StepSpec, SweepSpec};
use dgd_core::format::g17;
use dgd_core::quadratic::{ProblemFile, QuadraticProblem, random_instance};
use dgd_core::worstcase::{self, SpanMethod};
use dgd_core::{Error, genfun, roots};
use serde::Serialize;

use crate::args::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            _ => 2,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

type Res<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(CliError::Usage(msg.into()))
}

fn read_input(flag: &str, path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{flag} {}: {e}", path.display())))
}

fn load_problem_file(path: &Path) -> Res<ProblemFile> {
    serde_json::from_str(&read_input("--problem", path)?)
        .map_err(|e| CliError::Usage(format!("--problem {}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Res<SweepSpec> {
    SweepSpec::from_json(&read_input("--spec", path)?)
        .map_err(|e| CliError::Usage(format!("--spec {}: {e}", path.display())))
}

/// Replaces file references by their contents so a dumped config is self-contained.
pub fn inline_inputs(mut cfg: RunConfig) -> Res<RunConfig> {
    match &mut cfg.command {
        Command::Simulate(a) => {
            if let Some(path) = a.problem.problem.take() {
                a.problem.problem_data = Some(load_problem_file(&path)?);
            }
        }
        Command::Sweep(a) => {
            if let Some(path) = a.spec.take() {
                a.inline = Some(load_spec(&path)?);
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn sink(out: Option<&Path>) -> Res<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Usage(format!("--out {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Res<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn emit_csv(out: Option<&Path>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Res<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink(out)?);
    w.write_record(header).map_err(|e| CliError::Internal(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::Internal(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cfg: RunConfig) -> Res<()> {
    let o = &cfg.output;
    let out = o.out.as_deref();
    if o.threads == Some(0) {
        return usage("--threads must be at least 1");
    }
    match &cfg.command {
        Command::Simulate(a) => simulate(a, o.format.unwrap_or(Format::Csv), out, o.threads),
        Command::Coeffs(a) => coeffs(a, o.format.unwrap_or(Format::Csv), out),
        Command::Roots(a) => roots_cmd(a, o.format.unwrap_or(Format::Json), out),
        Command::Bounds(a) => bounds_cmd(a, o.format.unwrap_or(Format::Csv), out),
        Command::Tune(a) => tune(a, o.format.unwrap_or(Format::Json), out),
        Command::Lowerbound(a) => lowerbound(a, o.format.unwrap_or(Format::Csv), out),
        Command::Sweep(a) => sweep(a, o.format.unwrap_or(Format::Csv), out, o.threads),
    }
}

fn problem(a: &ProblemArgs) -> Res<(QuadraticProblem, Vec<f64>)> {
    let file = match (&a.problem_data, &a.problem) {
        (Some(f), _) => Some(f.clone()),
        (None, Some(path)) => Some(load_problem_file(path)?),
        (None, None) => None,
    };
    Ok(match file {
        Some(f) => {
            let p = QuadraticProblem::from_file(f)?;
            let w0 = vec![0.0; p.dim()];
            (p, w0)
        }
        None => random_instance(a.d, a.lambda, a.mu, a.e0, a.problem_seed)?,
    })
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    algorithm: String,
    tau: usize,
    eta: f64,
    sigma2: f64,
    seed: u64,
    trials: usize,
    eta_in_theory_range: bool,
    subopt: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    std_err: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    /// `None` with `epsilon` set means the target was not reached.
    #[serde(skip_serializing_if = "Option::is_none")]
    iters_to_epsilon: Option<Option<usize>>,
}

fn simulate(a: &SimulateArgs, format: Format, out: Option<&Path>, threads: Option<usize>) -> Res<()> {
    if a.k == 0 {
        return usage("--k must be at least 1");
    }
    if a.trials == 0 {
        return usage("--trials must be at least 1");
    }
    if a.epsilon.is_some_and(|e| !(e > 0.0)) {
        return usage("--epsilon must be positive");
    }
    if !(a.sigma2 >= 0.0 && a.sigma2.is_finite()) {
        return usage(format!("--sigma2 must be non-negative, got {}", a.sigma2));
    }
    let (p, w0) = problem(&a.problem)?;
    let (mu, lambda) = (p.mu(), p.lambda());
    let e0_sq: f64 = w0.iter().zip(p.w_star()).map(|(x, y)| (x - y) * (x - y)).sum();
    let stochastic = matches!(a.alg, Alg::Sdgd | Alg::Sgd | Alg::Minibatch);
    let tau = match a.alg {
        Alg::Gd | Alg::Sgd | Alg::Minibatch => {
            if a.tau != 0 {
                return usage(format!("--tau {} has no effect with --alg {:?}; omit it", a.tau, a.alg).to_lowercase());
            }
            0
        }
        _ => a.tau,
    };
    if !stochastic && a.sigma2 > 0.0 {
        eprintln!("warning: --sigma2 is ignored by deterministic algorithms");
    }
    if a.alg != Alg::Minibatch && a.batch != 1 {
        return usage("--batch applies to --alg minibatch only");
    }
    let sigma2 = if stochastic { a.sigma2 } else { 0.0 };
    let noise = match (sigma2 > 0.0, a.noise) {
        (false, _) => NoiseModel::None,
        (true, NoiseKind::Gaussian) => NoiseModel::IsotropicGaussian { sigma2 },
        (true, NoiseKind::Spherical) => NoiseModel::SphericalFixedNorm { sigma: sigma2.sqrt() },
    };

    let eta = match a.alg {
        Alg::IdleAgd => 1.0 / mu,
        _ => resolve_step(a, mu, lambda, tau, sigma2, e0_sq)?,
    };
    let effective_tau = if a.alg == Alg::IdleGd { 0 } else { tau };
    let cap = theory_step(mu, effective_tau);
    if a.alg != Alg::IdleAgd && eta > cap {
        if a.paper_valid {
            return Err(Error::PreconditionViolated(format!("--eta {eta} exceeds 1/(20 mu (tau+1)) = {cap}")).into());
        }
        eprintln!("warning: --eta {eta} exceeds 1/(20 mu (tau+1)) = {cap}; the bounds do not apply");
    }

    let agd = match a.agd {
        AgdKind::Strong => AgdVariant::StronglyConvex,
        AgdKind::Convex => AgdVariant::Convex,
    };
    let one = |trial: u64| -> Result<Trajectory, Error> {
        match a.alg {
            Alg::Dgd | Alg::Gd => dynamics::run_dgd(&p, &w0, &DelayedRunConfig::new(tau, eta, a.k)),
            Alg::Sdgd | Alg::Sgd => dynamics::run_sdgd(
                &p,
                &w0,
                &DelayedRunConfig::new(tau, eta, a.k).with_noise(noise, a.seed).with_trial(trial),
            ),
            Alg::Minibatch => dynamics::run_minibatch_sgd(&p, &w0, eta, a.batch, a.k, noise, a.seed, trial),
            Alg::IdleGd => dynamics::run_idle_gd(&p, &w0, eta, tau, a.k),
            Alg::IdleAgd => dynamics::run_idle_agd(&p, &w0, tau, a.k, agd),
        }
    };

    let first = one(0)?;
    let label = first.algorithm.label();
    let in_range = first.eta_in_theory_range;
    let (mean, std_err) = if a.trials > 1 && !noise.is_none() {
        let stats = experiments::monte_carlo(a.trials, first.len(), threads, |t| one(t).map(|t| t.subopt))?;
        (stats.mean, Some(stats.std_err))
    } else {
        (first.subopt, None)
    };
    let trials = if std_err.is_some() { a.trials } else { 1 };
    let reached = a.epsilon.map(|e| experiments::iterations_to_epsilon(&mean, e));
    if let (Some(e), Some(r)) = (a.epsilon, reached) {
        match r {
            Some(k) => eprintln!("reached epsilon {e} at k = {k}"),
            None => eprintln!("epsilon {e} not reached within k = {}", a.k),
        }
    }
    if a.trials > 1 && std_err.is_none() {
        eprintln!("warning: run is deterministic; --trials {} reduced to 1", a.trials);
    }

    match format {
        Format::Json => emit_json(
            out,
            &SimulateOutput {
                algorithm: label,
                tau,
                eta,
                sigma2,
                seed: a.seed,
                trials,
                eta_in_theory_range: in_range,
                subopt: &mean,
                std_err: std_err.as_deref(),
                epsilon: a.epsilon,
                iters_to_epsilon: reached,
            },
        ),
        Format::Csv => match std_err {
            None => {
                let t = Trajectory { subopt: mean, ..first };
                let mut w = sink(out)?;
                t.write_csv(&mut w)?;
                w.flush()?;
                Ok(())
            }
            Some(se) => {
                let (t, e, s, sd) = (tau.to_string(), g17(eta), g17(sigma2), a.seed.to_string());
                emit_csv(
                    out,
                    &["k", "mean_subopt", "std_err", "algorithm", "tau", "eta", "sigma2", "seed", "trials"],
                    mean.iter().zip(&se).enumerate().map(|(k, (m, v))| {
                        vec![k.to_string(), g17(*m), g17(*v), label.clone(), t.clone(), e.clone(), s.clone(), sd.clone(), trials.to_string()]
                    }),
                )
            }
        },
    }
}

fn resolve_step(a: &SimulateArgs, mu: f64, lambda: f64, tau: usize, sigma2: f64, e0_sq: f64) -> Res<f64> {
    match a.eta {
        StepSpec::Value(v) => Ok(v),
        StepSpec::Rule(StepRule::Theory) => Ok(theory_step(mu, if a.alg == Alg::IdleGd { 0 } else { tau })),
        StepSpec::Rule(StepRule::Tuned) => {
            // Tuning needs a delay of at least one; undelayed runs use the τ = 1 rule.
            let (t, s2, k) = match a.alg {
                Alg::Sdgd | Alg::Sgd => (tau.max(1), sigma2, a.k),
                Alg::Minibatch => (1, sigma2 / a.batch as f64, a.k / a.batch.max(1)),
                _ => return usage("--eta tuned applies to sdgd, sgd and minibatch only"),
            };
            let eta = if lambda > 0.0 {
                bounds::tune_eta_strong(mu, lambda, t, s2, e0_sq, k)?
            } else {
                bounds::tune_eta_convex(mu, t, s2.sqrt(), e0_sq.sqrt(), k)?
            };
            if eta == 0.0 {
                return usage("--eta tuned gives a zero step for this horizon; increase --k or pass a number");
            }
            Ok(eta)
        }
    }
}

fn coeffs(a: &CoeffsArgs, format: Format, out: Option<&Path>) -> Res<()> {
    if !(a.alpha > 0.0 && a.alpha.is_finite()) {
        return usage(format!("--alpha must be positive, got {}", a.alpha));
    }
    let series = match a.method {
        CoeffMethod::Auto => genfun::coeffs_auto(a.alpha, a.tau, a.k),
        CoeffMethod::Recurrence => genfun::coeffs_recurrence(a.alpha, a.tau, a.k),
        CoeffMethod::PartialFractions => genfun::coeffs_partial_fractions(a.alpha, a.tau, a.k)?,
    };
    match format {
        Format::Json => emit_json(out, &series),
        Format::Csv => {
            let mut w = sink(out)?;
            series.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn roots_cmd(a: &RootsArgs, format: Format, out: Option<&Path>) -> Res<()> {
    if !(a.alpha > 0.0 && a.alpha.is_finite()) {
        return usage(format!("--alpha must be positive, got {}", a.alpha));
    }
    let (set, cert) = if a.certify {
        let c = roots::certify_lemma1(a.alpha, a.tau)?;
        if !c.in_precondition {
            eprintln!("warning: --alpha {} exceeds 1/(20(tau+1)); the clauses are not claimed there", a.alpha);
        }
        (c.roots.clone(), Some(c))
    } else {
        (roots::find_roots(a.alpha, a.tau)?, None)
    };
    match (format, cert) {
        (Format::Json, Some(c)) => emit_json(out, &c),
        (Format::Json, None) => emit_json(out, &set),
        (Format::Csv, _) => emit_csv(
            out,
            &["index", "re", "im", "reciprocal_modulus"],
            set.roots.iter().enumerate().map(|(i, z)| {
                vec![(i + 1).to_string(), g17(z.re), g17(z.im), g17(z.inv().norm())]
            }),
        ),
    }
}

fn bound_kind(k: BoundArg) -> BoundKind {
    match k {
        BoundArg::Thm1 => BoundKind::Thm1Upper,
        BoundArg::Thm2 => BoundKind::Thm2Upper,
        BoundArg::Thm3Strong => BoundKind::Thm3LowerStrong,
        BoundArg::Thm3Convex => BoundKind::Thm3LowerConvex,
        BoundArg::Thm4Strong => BoundKind::Thm4StrongUpper,
        BoundArg::Thm4Convex => BoundKind::Thm4ConvexUpper,
    }
}

fn bounds_cmd(a: &BoundsArgs, format: Format, out: Option<&Path>) -> Res<()> {
    let kind = bound_kind(a.kind);
    let eta = match a.eta {
        StepSpec::Value(v) => v,
        StepSpec::Rule(StepRule::Theory) => theory_step(a.mu, a.tau),
        StepSpec::Rule(StepRule::Tuned) => match kind {
            BoundKind::Thm4StrongUpper => bounds::tune_eta_strong(a.mu, a.lambda, a.tau, a.sigma2, a.e0_sq, a.k)?,
            BoundKind::Thm4ConvexUpper => bounds::tune_eta_convex(a.mu, a.tau, a.sigma2.sqrt(), a.e0_sq.sqrt(), a.k)?,
            _ => return usage("--eta tuned applies to thm4-strong and thm4-convex only"),
        },
    };
    let params = BoundParams { mu: a.mu, lambda: a.lambda, tau: a.tau, eta, sigma2: a.sigma2, e0_sq: a.e0_sq, d: None };
    let k_from = a.k_from.unwrap_or_else(|| kind.valid_from_k(a.tau).min(a.k));
    let report = BoundReport::evaluate(kind, params, k_from, a.k, a.force)?;
    let invalid = report.valid.iter().filter(|v| !**v).count();
    if invalid > 0 {
        eprintln!("warning: --force: {invalid} of {} rows lie outside the bound's preconditions", report.ks.len());
    }
    let mut w = sink(out)?;
    match format {
        Format::Json => {
            report.write_json(&mut w)?;
            writeln!(w)?;
        }
        Format::Csv => report.write_csv(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TuneOutput {
    curvature: &'static str,
    eta: f64,
    cap: f64,
    case: &'static str,
}

fn tune(a: &TuneArgs, format: Format, out: Option<&Path>) -> Res<()> {
    if !(a.sigma2 >= 0.0) {
        return usage(format!("--sigma2 must be non-negative, got {}", a.sigma2));
    }
    let (curvature, eta) = match a.curvature {
        AgdKind::Strong => ("strong", bounds::tune_eta_strong(a.mu, a.lambda, a.tau, a.sigma2, a.e0_sq, a.k)?),
        AgdKind::Convex => ("convex", bounds::tune_eta_convex(a.mu, a.tau, a.sigma2.sqrt(), a.e0_sq.sqrt(), a.k)?),
    };
    let cap = 1.0 / (20.0 * a.mu * a.tau as f64);
    let case = if eta == 0.0 {
        "zero"
    } else if eta == cap {
        "cap"
    } else {
        "interior"
    };
    let r = TuneOutput { curvature, eta, cap, case };
    match format {
        Format::Json => emit_json(out, &r),
        Format::Csv => emit_csv(out, &["curvature", "eta", "cap", "case"], [vec![
            curvature.to_string(),
            g17(eta),
            g17(cap),
            case.to_string(),
        ]]),
    }
}

fn lowerbound(a: &LowerboundArgs, format: Format, out: Option<&Path>) -> Res<()> {
    let inst = match a.kind {
        AgdKind::Strong => {
            if !(a.lambda > 0.0 && a.mu > a.lambda) {
                return usage(format!("--mu must exceed --lambda > 0, got mu = {}, lambda = {}", a.mu, a.lambda));
            }
            let d = a.d.unwrap_or_else(|| worstcase::strong_dimension(a.mu, a.lambda, a.tau, a.k));
            worstcase::build_strong_instance(a.mu, a.lambda, d)?
        }
        AgdKind::Convex => {
            let d = a.d.unwrap_or_else(|| worstcase::convex_dimension(a.k, a.tau));
            worstcase::build_convex_instance(a.mu, d, a.k, a.tau)?
        }
    };
    let step = |undelayed: bool| match a.eta {
        StepSpec::Value(v) => Ok(v),
        StepSpec::Rule(StepRule::Theory) => Ok(theory_step(a.mu, if undelayed { 0 } else { a.tau })),
        StepSpec::Rule(StepRule::Tuned) => usage("--eta tuned does not apply to lowerbound"),
    };
    let method = match a.method {
        SpanAlg::Dgd => SpanMethod::Dgd { eta: step(false)? },
        SpanAlg::IdleGd => SpanMethod::IdleGd { eta: step(true)? },
        SpanAlg::IdleAgd => SpanMethod::IdleAgd,
    };
    let report = worstcase::verify_thm3(&inst, method, a.tau, a.k)?;
    if !report.all_hold {
        eprintln!("warning: the lower bound fails at some iterations (min margin {})", report.min_margin());
    }
    if let Some(span) = report.span.as_ref().filter(|s| !s.pass) {
        eprintln!("warning: span condition violated at iterations {:?}", span.violations());
    }
    match format {
        Format::Json => emit_json(out, &report),
        Format::Csv => emit_csv(
            out,
            &["k", "lower", "subopt", "margin", "d", "tau"],
            report.rows.iter().map(|r| {
                vec![r.k.to_string(), g17(r.lower), g17(r.subopt), g17(r.margin), report.d.to_string(), report.tau.to_string()]
            }),
        ),
    }
}

fn sweep(a: &SweepArgs, format: Format, out: Option<&Path>, threads: Option<usize>) -> Res<()> {
    let spec = match (&a.inline, &a.spec) {
        (Some(s), _) => s.clone(),
        (None, Some(path)) => load_spec(path)?,
        (None, None) => return usage("--spec is required"),
    };
    let table = experiments::run_sweep(&spec, threads)?;
    let out: Option<PathBuf> = out.map(Path::to_path_buf).or_else(|| spec.output.as_ref().map(PathBuf::from));
    let mut w = sink(out.as_deref())?;
    match format {
        Format::Json => {
            table.write_json(&mut w)?;
            writeln!(w)?;
        }
        Format::Csv => table.write_csv(&mut w)?,
    }
    w.flush()?;
    if let Some(path) = out {
        let mut meta_path = path.into_os_string();
        meta_path.push(".meta.json");
        let mut m = sink(Some(Path::new(&meta_path)))?;
        table.write_meta_json(&mut m)?;
        writeln!(m)?;
        m.flush()?;
    }
    Ok(())
}
