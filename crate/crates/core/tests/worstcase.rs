use dgd_core::bounds::{thm3_lower, Curvature};
use dgd_core::dynamics::theory_step;
use dgd_core::worstcase::{
    build_convex_instance, build_strong_instance, convex_dimension, span_profile, strong_dimension, verify_thm3,
    SpanMethod, MINIMIZER_TOL, SPECTRUM_TOL,
};

#[test]
fn strong_spectrum_and_minimizer() {
    for kappa in [2.0f64, 4.0, 25.0, 100.0] {
        for d in [20usize, 50, 200] {
            let (mu, lambda) = (3.0, 3.0 / kappa);
            let inst = build_strong_instance(mu, lambda, d).unwrap();
            let eig = inst.problem.hessian().eigenvalues();
            assert!(eig[0] >= lambda - SPECTRUM_TOL, "kappa={kappa} d={d} min {}", eig[0]);
            assert!(eig[d - 1] <= mu + SPECTRUM_TOL, "kappa={kappa} d={d} max {}", eig[d - 1]);
            let q = inst.q.unwrap();
            for (i, w) in inst.problem.w_star().iter().enumerate() {
                assert!((w - q.powi(i as i32 + 1)).abs() <= MINIMIZER_TOL);
            }
        }
    }
}

#[test]
fn span_lemma_all_methods() {
    let k_max = 200;
    for tau in 0..=4usize {
        let strong = build_strong_instance(1.0, 0.01, strong_dimension(1.0, 0.01, tau, k_max) + 3).unwrap();
        let convex = build_convex_instance(1.0, convex_dimension(k_max, tau) + 3, k_max, tau).unwrap();
        for inst in [&strong, &convex] {
            for m in [SpanMethod::Dgd { eta: theory_step(1.0, tau) }, SpanMethod::IdleGd { eta: 1.0 }, SpanMethod::IdleAgd] {
                let t = m.run(inst, tau, k_max).unwrap();
                let prof = span_profile(t.iterates.as_ref().unwrap(), tau);
                assert!(prof.pass, "{:?} tau={tau} {m:?}", inst.kind);
                assert!(prof.max_nonzero[..=tau].iter().all(|&m| m == 0));
            }
        }
    }
}

#[test]
fn spec_examples() {
    let inst = build_strong_instance(100.0, 1.0, 200).unwrap();
    let rep = verify_thm3(&inst, SpanMethod::Dgd { eta: 1.0 / (20.0 * 100.0 * 2.0) }, 1, 100).unwrap();
    assert!(rep.all_hold);
    assert_eq!(rep.rows.len(), 99);
    let js = serde_json::to_string(&rep).unwrap();
    assert!(js.contains("\"margin\""));

    let inst = build_convex_instance(1.0, 100, 20, 1).unwrap();
    let rep = verify_thm3(&inst, SpanMethod::Dgd { eta: 0.025 }, 1, 20).unwrap();
    assert!(rep.all_hold);
    let w_sq: f64 = inst.problem.w_star().iter().map(|x| x * x).sum();
    assert_eq!(rep.rows[0].lower, thm3_lower(Curvature::Convex, 1.0, 0.0, 1, 20, w_sq).unwrap());
    for m in [SpanMethod::IdleGd { eta: 1.0 }, SpanMethod::IdleAgd] {
        assert!(verify_thm3(&inst, m, 1, 20).unwrap().all_hold);
    }
}

#[test]
fn convex_minimizer_is_nesterov_profile() {
    // Active block of size m: w*_i = 1 - i/(m+1) on the block, zero after.
    let inst = build_convex_instance(2.0, 40, 12, 2).unwrap();
    let m = inst.block;
    assert_eq!(m, 9);
    for (i, w) in inst.problem.w_star().iter().enumerate() {
        let expect = if i < m { 1.0 - (i + 1) as f64 / (m + 1) as f64 } else { 0.0 };
        assert!((w - expect).abs() < 1e-10);
    }
}
