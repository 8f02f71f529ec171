use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dgd_core::experiments::{StepRule, StepSpec, SweepSpec};
use dgd_core::quadratic::ProblemFile;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "dgd", version, about = "Delayed gradient descent on quadratics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    /// Replay a configuration written by --dump-config.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,

    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Write results here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Worker threads for Monte Carlo trials; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Run one algorithm and print its suboptimality trajectory.
    Simulate(SimulateArgs),
    /// Coefficients of 1/π_α(z).
    Coeffs(CoeffsArgs),
    /// Roots of π_α(z), optionally with the root-lemma certificate.
    Roots(RootsArgs),
    /// Evaluate a convergence bound over a range of iterations.
    Bounds(BoundsArgs),
    /// Step size for the stochastic bounds.
    Tune(TuneArgs),
    /// Run a span-respecting method on a hard instance against the lower bound.
    Lowerbound(LowerboundArgs),
    /// Run a parameter sweep described by a JSON spec.
    Sweep(SweepArgs),
}

pub fn parse_step(s: &str) -> Result<StepSpec, String> {
    match s {
        "theory" => Ok(StepSpec::Rule(StepRule::Theory)),
        "tuned" => Ok(StepSpec::Rule(StepRule::Tuned)),
        _ => match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(StepSpec::Value(v)),
            Ok(_) => Err("step must be positive".into()),
            Err(_) => Err("expected a positive number, 'theory' or 'tuned'".into()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ProblemArgs {
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// Initial distance ‖w0 - w*‖.
    #[arg(long, default_value_t = 1.0)]
    pub e0: f64,
    #[arg(long, default_value_t = 0)]
    pub problem_seed: u64,
    /// Problem JSON (eigenvalues or dense_A, b, c); the run starts at w0 = 0.
    #[arg(long, value_name = "FILE")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<PathBuf>,
    /// Contents of `problem`, embedded by --dump-config.
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_data: Option<ProblemFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alg {
    Dgd,
    Sdgd,
    Gd,
    Sgd,
    Minibatch,
    IdleGd,
    IdleAgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian,
    Spherical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgdKind {
    Strong,
    Convex,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Alg::Dgd)]
    pub alg: Alg,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 0)]
    pub tau: usize,
    /// Positive number, 'theory' (1/(20μ(τ+1))) or 'tuned'.
    #[arg(long, default_value = "theory", value_parser = parse_step)]
    pub eta: StepSpec,
    /// E‖ξ‖²; zero means no noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma2: f64,
    #[arg(long, value_enum, default_value_t = NoiseKind::Gaussian)]
    pub noise: NoiseKind,
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Report the first iteration with suboptimality at most this value.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Average this many independent trials.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reject steps above 1/(20μ(τ+1)).
    #[arg(long)]
    pub paper_valid: bool,
    #[arg(long, value_enum, default_value_t = AgdKind::Strong)]
    pub agd: AgdKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoeffMethod {
    Auto,
    Recurrence,
    PartialFractions,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CoeffsArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub tau: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = CoeffMethod::Auto)]
    pub method: CoeffMethod,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RootsArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub tau: usize,
    #[arg(long)]
    pub certify: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundArg {
    Thm1,
    Thm2,
    Thm3Strong,
    Thm3Convex,
    Thm4Strong,
    Thm4Convex,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BoundsArgs {
    #[arg(long, value_enum)]
    pub kind: BoundArg,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub tau: usize,
    /// Positive number or 'theory'.
    #[arg(long, default_value = "theory", value_parser = parse_step)]
    pub eta: StepSpec,
    #[arg(long, default_value_t = 0.0)]
    pub sigma2: f64,
    /// ‖w0 - w*‖².
    #[arg(long, default_value_t = 1.0)]
    pub e0_sq: f64,
    /// Last iteration.
    #[arg(long)]
    pub k: usize,
    /// First iteration; defaults to the first admissible one.
    #[arg(long)]
    pub k_from: Option<usize>,
    /// Evaluate outside the preconditions, flagging rows as invalid.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TuneArgs {
    #[arg(long, value_enum, default_value_t = AgdKind::Strong)]
    pub curvature: AgdKind,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long)]
    pub tau: usize,
    #[arg(long)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub e0_sq: f64,
    #[arg(long)]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanAlg {
    Dgd,
    IdleGd,
    IdleAgd,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LowerboundArgs {
    #[arg(long, value_enum, default_value_t = AgdKind::Strong)]
    pub kind: AgdKind,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub tau: usize,
    /// Horizon (strong) or target iteration (convex).
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Dimension; defaults to the smallest admissible one.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, value_enum, default_value_t = SpanAlg::Dgd)]
    pub method: SpanAlg,
    /// Positive number or 'theory'.
    #[arg(long, default_value = "theory", value_parser = parse_step)]
    pub eta: StepSpec,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Sweep spec JSON.
    #[arg(long, value_name = "FILE", required = true)]
    #[serde(skip)]
    pub spec: Option<PathBuf>,
    /// Contents of `spec`, embedded by --dump-config.
    #[arg(skip)]
    #[serde(rename = "spec")]
    pub inline: Option<SweepSpec>,
}
