//! Acceptance suite. One line per criterion; the process exits non-zero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use dgd_core::bounds::{
    convex_power_bound_check, exact_expected_suboptimality, tune_eta_strong, BoundKind, BoundParams,
};
use dgd_core::dynamics::{run_dgd, run_sdgd, theory_step, DelayedRunConfig, IterateStorage, NoiseModel};
use dgd_core::experiments::{
    monte_carlo, run_sweep, sweep_deterministic_tau, Horizon, ProblemSpec, StepRule, StepSpec, SweepKind, SweepSpec,
};
use dgd_core::genfun::{
    alpha_cap, coeffs_partial_fractions, coeffs_recurrence, dgd_closed_form_error, k_regime_grid_check,
    tech1_grid_check, verify_coefficient_bounds,
};
use dgd_core::quadratic::{random_instance, QuadraticProblem};
use dgd_core::roots::{certify_lemma1, dominant_root_bracket};
use dgd_core::worstcase::{
    build_convex_instance, build_strong_instance, convex_dimension, span_profile, strong_dimension, verify_thm3,
    SpanMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and limits.
const PF_REL_TOL: f64 = 1e-9;
const PF_K: usize = 2000;
const PF_CASES: usize = 200;
const ROOT_CASES: usize = 500;
const UNIT_SLACK: f64 = 1e-12;
const BOUND1_ALPHAS: usize = 50;
const BOUND1_K: usize = 10_000;
const CLOSED_FORM_TOL: f64 = 1e-10;
const DOMINATION_INSTANCES: usize = 50;
const DOMINATION_K: usize = 3000;
const MC_TRIALS: usize = 10_000;
const MC_SIGMAS: f64 = 3.0;
const SLOWDOWN_FACTOR: f64 = 2.0;
const NEGLIGIBLE_RATIO: f64 = 2.0;
const CROSSOVER_MULTIPLIER: f64 = 100.0;
const POWER_K: usize = 1000;
const FAST_LIMIT: Duration = Duration::from_secs(30);
const STOCHASTIC_LIMIT: Duration = Duration::from_secs(120);

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let el = started.elapsed();
    ensure(el <= limit, || format!("took {:.1}s, limit {}s", el.as_secs_f64(), limit.as_secs()))
}

fn random_alpha(rng: &mut ChaCha8Rng, tau: usize) -> f64 {
    // (0, cap], log-uniform over six decades.
    let u: f64 = rng.random_range(-6.0..=0.0);
    alpha_cap(tau) * 10f64.powf(u)
}

fn pf_grid() -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    (0..PF_CASES)
        .map(|_| {
            let tau = rng.random_range(0..=32usize);
            (tau, random_alpha(&mut rng, tau))
        })
        .collect()
}

fn c1_partial_fractions() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for (tau, alpha) in pf_grid() {
        let pf = coeffs_partial_fractions(alpha, tau, PF_K).map_err(|e| format!("tau={tau} alpha={alpha}: {e}"))?;
        let rec = coeffs_recurrence(alpha, tau, PF_K);
        for (k, (a, b)) in pf.coeffs.iter().zip(&rec.coeffs).enumerate() {
            let rel = (a - b).abs() / b.abs();
            worst = worst.max(rel);
            ensure(rel <= PF_REL_TOL, || format!("tau={tau} alpha={alpha} k={k}: {a} vs {b}"))?;
        }
    }
    within(FAST_LIMIT, started)?;
    Ok(format!("{PF_CASES} cases, worst relative error {worst:.2e}"))
}

fn c2_roots() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    for _ in 0..ROOT_CASES {
        let tau = rng.random_range(0..=32usize);
        let alpha = random_alpha(&mut rng, tau);
        let cert = certify_lemma1(alpha, tau).map_err(|e| format!("tau={tau} alpha={alpha}: {e}"))?;
        ensure(cert.in_precondition && cert.all_pass(), || format!("tau={tau} alpha={alpha}: {cert:?}"))?;
        dominant_root_bracket(alpha, tau).map_err(|e| format!("tau={tau} alpha={alpha}: {e}"))?;
    }
    within(FAST_LIMIT, started)?;
    Ok(format!("{ROOT_CASES} pairs, four clauses and bracket"))
}

fn c3_coefficient_bounds() -> Outcome {
    for (tau, alpha) in pf_grid() {
        let cert = verify_coefficient_bounds(alpha, tau, PF_K).map_err(|e| e.to_string())?;
        ensure(cert.two_regime_claimed && cert.two_regime_holds(), || format!("two-regime: tau={tau} alpha={alpha}"))?;
    }
    let mut checked = 0usize;
    for tau in 1..=32usize {
        for i in 0..BOUND1_ALPHAS {
            let alpha = i as f64 / (BOUND1_ALPHAS - 1) as f64 / tau as f64;
            let b = coeffs_recurrence(alpha, tau, BOUND1_K).coeffs;
            checked += 1;
            if let Some(k) = b.iter().position(|x| x.abs() > 1.0 + UNIT_SLACK) {
                return Err(format!("unit bound: tau={tau} alpha={alpha} k={k} b={}", b[k]));
            }
        }
    }
    Ok(format!("{PF_CASES} two-regime cases, {checked} unit-bound cases"))
}

fn c4_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let d = rng.random_range(2..=10usize);
        let tau = rng.random_range(0..=8usize);
        let k_max = rng.random_range(50..=500usize);
        let mu = rng.random_range(0.5..4.0);
        let lambda = mu * rng.random_range(0.0..0.5);
        let (p, w0) = random_instance(d, lambda, mu, rng.random_range(0.1..3.0), 400 + i).map_err(|e| e.to_string())?;
        let eta = theory_step(mu, tau) * rng.random_range(0.05..=1.0);
        let t = run_dgd(&p, &w0, &DelayedRunConfig::new(tau, eta, k_max).with_iterates(IterateStorage::Always))
            .map_err(|e| e.to_string())?;
        let e0: Vec<f64> = w0.iter().zip(p.w_star()).map(|(a, b)| a - b).collect();
        let closed = dgd_closed_form_error(&p, &e0, eta, tau, k_max).map_err(|e| e.to_string())?;
        for (w, e) in t.iterates.unwrap().iter().zip(&closed) {
            for ((wi, ei), si) in w.iter().zip(e).zip(p.w_star()) {
                worst = worst.max((wi - si - ei).abs());
            }
        }
    }
    ensure(worst <= CLOSED_FORM_TOL, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("20 instances, max deviation {worst:.2e}"))
}

fn domination_instance(rng: &mut ChaCha8Rng, seed: u64, strong: bool) -> (QuadraticProblem, Vec<f64>, usize, f64) {
    let d = rng.random_range(2..=10usize);
    let tau = rng.random_range(0..=8usize);
    let mu = rng.random_range(0.5..4.0);
    let lambda = if strong { mu / rng.random_range(2.0..=100.0) } else { 0.0 };
    let (p, w0) = random_instance(d, lambda, mu, rng.random_range(0.1..3.0), seed).unwrap();
    (p, w0, tau, mu)
}

fn c5_deterministic_domination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC5);
    let mut checked = 0usize;
    for (strong, kind) in [(true, BoundKind::Thm1Upper), (false, BoundKind::Thm2Upper)] {
        for i in 0..DOMINATION_INSTANCES as u64 {
            let (p, w0, tau, mu) = domination_instance(&mut rng, 500 + i, strong);
            let eta = theory_step(mu, tau);
            let t = run_dgd(&p, &w0, &DelayedRunConfig::new(tau, eta, DOMINATION_K)).map_err(|e| e.to_string())?;
            let e0_sq: f64 = w0.iter().zip(p.w_star()).map(|(a, b)| (a - b).powi(2)).sum();
            let params = BoundParams { mu, lambda: p.lambda(), tau, eta, sigma2: 0.0, e0_sq, d: Some(p.dim()) };
            for k in kind.valid_from_k(tau)..=DOMINATION_K {
                let bound = params.evaluate(kind, k).map_err(|e| e.to_string())?;
                checked += 1;
                ensure(t.subopt[k] <= bound, || {
                    format!("{}: instance {i} tau={tau} k={k}: {} > {bound}", kind.label(), t.subopt[k])
                })?;
            }
        }
    }
    Ok(format!("{checked} (instance, k) pairs, zero violations"))
}

fn c6_stochastic() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
    let mut checked = 0usize;
    for (strong, kind) in [(true, BoundKind::Thm4StrongUpper), (false, BoundKind::Thm4ConvexUpper)] {
        for i in 0..DOMINATION_INSTANCES as u64 {
            let (p, w0, tau, mu) = domination_instance(&mut rng, 600 + i, strong);
            let eta = theory_step(mu, tau);
            let e0: Vec<f64> = w0.iter().zip(p.w_star()).map(|(a, b)| a - b).collect();
            let e0_sq: f64 = e0.iter().map(|x| x * x).sum();
            for sigma2 in [0.01, 1.0, 100.0] {
                let exact = exact_expected_suboptimality(&p, &e0, eta, tau, sigma2, DOMINATION_K).map_err(|e| e.to_string())?;
                let params = BoundParams { mu, lambda: p.lambda(), tau, eta, sigma2, e0_sq, d: Some(p.dim()) };
                for k in kind.valid_from_k(tau)..=DOMINATION_K {
                    let bound = params.evaluate(kind, k).map_err(|e| e.to_string())?;
                    checked += 1;
                    ensure(exact[k] <= bound, || {
                        format!("{}: instance {i} tau={tau} sigma2={sigma2} k={k}: {} > {bound}", kind.label(), exact[k])
                    })?;
                }
            }
        }
    }

    let (d, tau, k) = (5usize, 2usize, 200usize);
    let (p, w0) = random_instance(d, 0.1, 1.0, 1.0, 66).map_err(|e| e.to_string())?;
    let (eta, sigma2) = (theory_step(1.0, tau), 1.0);
    let e0: Vec<f64> = w0.iter().zip(p.w_star()).map(|(a, b)| a - b).collect();
    let exact = exact_expected_suboptimality(&p, &e0, eta, tau, sigma2, k).map_err(|e| e.to_string())?[k];
    let noise = NoiseModel::IsotropicGaussian { sigma2 };
    let stats = monte_carlo(MC_TRIALS, 1, None, |t| {
        let cfg = DelayedRunConfig::new(tau, eta, k).with_noise(noise, 2024).with_trial(t).with_iterates(IterateStorage::Never);
        Ok(vec![run_sdgd(&p, &w0, &cfg)?.subopt[k]])
    })
    .map_err(|e| e.to_string())?;
    let z = (stats.mean[0] - exact) / stats.std_err[0];
    ensure(z.abs() <= MC_SIGMAS, || format!("Monte Carlo mean {} vs exact {exact}: z = {z:.2}", stats.mean[0]))?;
    within(STOCHASTIC_LIMIT, started)?;
    Ok(format!("{checked} (instance, sigma2, k) triples; Monte Carlo z = {z:+.2}"))
}

fn c7_lower_bounds() -> Outcome {
    let mut runs = 0usize;
    let k_max = 200usize;
    let mut min_ratio = f64::INFINITY;
    for tau in [0usize, 1, 2, 4] {
        for kappa in [4.0, 100.0] {
            let (mu, lambda) = (1.0, 1.0 / kappa);
            let inst = build_strong_instance(mu, lambda, strong_dimension(mu, lambda, tau, k_max) + 2)
                .map_err(|e| e.to_string())?;
            for method in [SpanMethod::Dgd { eta: theory_step(mu, tau) }, SpanMethod::IdleGd { eta: 1.0 / mu }, SpanMethod::IdleAgd] {
                let rep = verify_thm3(&inst, method, tau, k_max).map_err(|e| e.to_string())?;
                let span = span_profile(method.run(&inst, tau, k_max).map_err(|e| e.to_string())?.iterates.as_ref().unwrap(), tau);
                runs += 1;
                min_ratio = rep.rows.iter().map(|r| r.subopt / r.lower).fold(min_ratio, f64::min);
                ensure(rep.all_hold, || format!("strong kappa={kappa} tau={tau} {method:?}: margin {}", rep.min_margin()))?;
                ensure(span.pass, || format!("span: strong kappa={kappa} tau={tau} {method:?} at {:?}", span.violations()))?;
            }
        }
        for k in [tau + 1, 10, 25, 50, 100, 200] {
            if k < tau + 1 {
                continue;
            }
            let mu = 1.0;
            let inst = build_convex_instance(mu, convex_dimension(k, tau) + 2, k, tau).map_err(|e| e.to_string())?;
            for method in [SpanMethod::Dgd { eta: theory_step(mu, tau) }, SpanMethod::IdleGd { eta: 1.0 / mu }, SpanMethod::IdleAgd] {
                let rep = verify_thm3(&inst, method, tau, k).map_err(|e| e.to_string())?;
                let span = span_profile(method.run(&inst, tau, k).map_err(|e| e.to_string())?.iterates.as_ref().unwrap(), tau);
                runs += 1;
                min_ratio = rep.rows.iter().map(|r| r.subopt / r.lower).fold(min_ratio, f64::min);
                ensure(rep.all_hold, || format!("convex k={k} tau={tau} {method:?}: margin {}", rep.min_margin()))?;
                ensure(span.pass, || format!("span: convex k={k} tau={tau} {method:?} at {:?}", span.violations()))?;
            }
        }
    }
    Ok(format!("{runs} runs, min subopt/lower {min_ratio:.3}, span exact"))
}

fn kappa10() -> ProblemSpec {
    ProblemSpec { d: 10, mu: 1.0, lambda: 0.1, e0_norm: 1.0, seed: 10 }
}

fn c8_linear_slowdown() -> Outcome {
    let spec = SweepSpec {
        kind: SweepKind::DeterministicTau,
        problem: kappa10(),
        taus: vec![0, 1, 2, 4, 8, 16],
        sigma2s: vec![0.0],
        horizons: vec![],
        eta: StepSpec::Rule(StepRule::Theory),
        trials: 0,
        seed: 0,
        epsilon: 1e-6,
        budget: 1_000_000,
        output: None,
    };
    let table = sweep_deterministic_tau(&spec, None).map_err(|e| e.to_string())?;
    let iters = |alg: &str, tau: usize| {
        table.rows.iter().find(|r| r.algorithm == alg && r.tau == tau).and_then(|r| r.iters_to_eps)
    };
    let base = iters("dgd", 0).ok_or("tau=0 run did not reach epsilon")? as f64;
    let mut ratios = Vec::new();
    for tau in [1usize, 2, 4, 8, 16] {
        let dgd = iters("dgd", tau).ok_or(format!("tau={tau} did not reach epsilon"))? as f64;
        let idle = iters("idle-gd", tau).ok_or(format!("idle tau={tau} did not reach epsilon"))? as f64;
        let r = dgd / ((tau as f64 + 1.0) * base);
        ratios.push(r);
        ensure((1.0 / SLOWDOWN_FACTOR..=SLOWDOWN_FACTOR).contains(&r), || format!("tau={tau}: ratio {r:.3}"))?;
        let q = dgd / idle;
        ensure((1.0 / SLOWDOWN_FACTOR..=SLOWDOWN_FACTOR).contains(&q), || format!("tau={tau}: dgd/idle {q:.3}"))?;
    }
    Ok(format!("iters(0) = {base}, ratios {}", ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ")))
}

fn c9_negligibility() -> Outcome {
    let ps = kappa10();
    let (p, w0) = ps.build().map_err(|e| e.to_string())?;
    let e0: Vec<f64> = w0.iter().zip(p.w_star()).map(|(a, b)| a - b).collect();
    let e0_sq: f64 = e0.iter().map(|x| x * x).sum();
    let sigma2 = 1.0;
    let expectation = |tau: usize, k: usize| -> Result<f64, String> {
        let eta = tune_eta_strong(ps.mu, ps.lambda, tau, sigma2, e0_sq, k).map_err(|e| e.to_string())?;
        if eta == 0.0 {
            return Ok(p.suboptimality(&w0));
        }
        Ok(exact_expected_suboptimality(&p, &e0, eta, tau, sigma2, k).map_err(|e| e.to_string())?[k])
    };
    let mut worst = 0.0f64;
    for tau in 1..=16usize {
        let k = Horizon::Crossover(CROSSOVER_MULTIPLIER).resolve(tau, ps.kappa());
        let r = expectation(tau, k)? / expectation(1, k)?;
        worst = worst.max(r);
        ensure(r <= NEGLIGIBLE_RATIO, || format!("large k: tau={tau} k={k} ratio {r:.3}"))?;
    }
    let tau = 16usize;
    let k = Horizon::PerTau(2).resolve(tau, ps.kappa());
    let small = expectation(tau, k)? / expectation(1, k)?;
    ensure(small > NEGLIGIBLE_RATIO, || format!("small k: tau={tau} k={k} ratio {small:.3}"))?;
    Ok(format!("max large-k ratio {worst:.3}, small-k ratio at tau=16 {small:.3}"))
}

fn c10_auxiliary() -> Outcome {
    for eta in [1e-3, 1e-2, 1e-1] {
        let cert = convex_power_bound_check(eta, POWER_K, Some(0.05 / eta)).map_err(|e| e.to_string())?;
        ensure(cert.passed(), || format!("power bound fails at eta={eta}"))?;
    }
    let tech1 = tech1_grid_check(1001);
    ensure(tech1.is_empty(), || format!("tech1 fails at {tech1:?}"))?;
    let rep = k_regime_grid_check(0..=32, 50, POWER_K);
    ensure(rep.passed(), || {
        format!(
            "k-regime inequality fails for tau {:?} ({} of {} grid points, e.g. alpha={:.4} k={}: {:.4} > {:.4}); consequence failures: {}",
            rep.failing_taus(),
            rep.inequality_failures.len(),
            rep.checked,
            rep.inequality_failures[0].alpha,
            rep.inequality_failures[0].k,
            rep.inequality_failures[0].lhs,
            rep.inequality_failures[0].rhs,
            rep.consequence_failures.len()
        )
    })?;
    Ok(format!("power bound, tech1 and k-regime over {} grid points", rep.checked))
}

fn c11_determinism() -> Outcome {
    let base = SweepSpec {
        kind: SweepKind::StochasticTau,
        problem: ProblemSpec { d: 5, mu: 1.0, lambda: 0.1, e0_norm: 1.0, seed: 11 },
        taus: vec![1, 2, 4],
        sigma2s: vec![0.5, 2.0],
        horizons: vec![Horizon::Fixed(150)],
        eta: StepSpec::Rule(StepRule::Tuned),
        trials: 300,
        seed: 99,
        epsilon: 1e-3,
        budget: 10_000,
        output: None,
    };
    let specs = [
        base.clone(),
        SweepSpec { kind: SweepKind::Minibatch, taus: vec![0, 1, 3], horizons: vec![Horizon::Fixed(120)], ..base.clone() },
        SweepSpec {
            kind: SweepKind::DeterministicTau,
            taus: vec![0, 1, 4],
            trials: 0,
            eta: StepSpec::Rule(StepRule::Theory),
            ..base
        },
    ];
    for spec in &specs {
        let reference = run_sweep(spec, Some(1)).and_then(|t| t.csv_string()).map_err(|e| e.to_string())?;
        for threads in [Some(1), Some(3), Some(8), None] {
            let again = run_sweep(spec, threads).and_then(|t| t.csv_string()).map_err(|e| e.to_string())?;
            ensure(again == reference, || format!("{:?} sweep differs with threads {threads:?}", spec.kind))?;
        }
    }
    Ok("three sweep kinds, threads 1/3/8/default, byte-identical CSV".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("generating-function equivalence", c1_partial_fractions),
        ("root lemma certification", c2_roots),
        ("two-regime and unit coefficient bounds", c3_coefficient_bounds),
        ("closed-form trajectory oracle", c4_closed_form),
        ("deterministic upper-bound domination", c5_deterministic_domination),
        ("stochastic bound and Monte Carlo oracle", c6_stochastic),
        ("lower-bound domination and span", c7_lower_bounds),
        ("linear-in-delay slowdown", c8_linear_slowdown),
        ("delay negligibility under noise", c9_negligibility),
        ("auxiliary inequalities", c10_auxiliary),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
