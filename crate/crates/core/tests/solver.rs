use std::path::PathBuf;

use hessolve_core::discretize::hessian_fd;
use hessolve_core::problem::{ProblemConfig, ProblemSpec};
use hessolve_core::solver::{continuity_solve, newton_solve, prepare};
use hessolve_core::verify::{admissibility_check, comparison_check, ellipticity_check};
use hessolve_core::{Grid, GridField, HessolveError};

fn config(name: &str, m: usize) -> ProblemSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    let mut cfg = ProblemConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    cfg.grid.m = m;
    cfg.to_problem().unwrap()
}

#[test]
fn bundled_configs_converge_with_checks() {
    for name in [
        "ma_smooth.json",
        "degenerate_ball.json",
        "affine_zero.json",
        "quotient_smooth.json",
        "sigma1_linear.json",
    ] {
        let p = config(name, 33);
        let run = continuity_solve(&p).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut prev_iters = None;
        for rec in &run.records {
            let d = rec.diagnostics.as_ref().unwrap();
            assert!(d.pass, "{name} eps {}: {d:?}", rec.eps);
            assert!(rec.final_residual <= p.newton.tol);
            let res: Vec<f64> = rec.log.iter().map(|l| l.residual_norm).collect();
            assert!(res.windows(2).all(|w| w[1] < w[0]), "{name}: {res:?}");
            if let Some(prev) = prev_iters {
                assert!(
                    rec.iterations <= prev + 5,
                    "{name}: warm start {prev} -> {}",
                    rec.iterations
                );
            }
            prev_iters = Some(rec.iterations);
            if p.gamma > 0.0 {
                assert!(d.ellipticity.lambda0 > 0.0);
            }
        }
    }
}

#[test]
fn manufactured_quadratic_is_recovered() {
    for gamma in [0.0, 0.5] {
        let mut p = config("ma_smooth.json", 33);
        p.gamma = gamma;
        p.allow_gamma_zero = true;
        // u* = |x|^2 / 2 has U = (1 + 2 gamma) I.
        p.psi = p.psi.map(|_| 1.0 + 2.0 * gamma);
        let run = continuity_solve(&p).unwrap();
        let err = run
            .last()
            .diagnostics
            .as_ref()
            .unwrap()
            .exact_error
            .unwrap();
        assert!(err < 1e-8, "gamma {gamma}: {err}");
        assert!(run.records[0].iterations <= 12);
    }
}

#[test]
fn affine_data_with_zero_right_hand_side() {
    let p = config("affine_zero.json", 17);
    let run = continuity_solve(&p).unwrap();
    let last = run.last();
    assert_eq!(last.eps, 0.0);
    assert!(last.u.max_diff(p.exact.as_ref().unwrap()).unwrap() <= 1e-10);
    let d = last.diagnostics.as_ref().unwrap();
    assert!(d.comparison.min_u_minus_sub.abs() <= 1e-10);
    assert!(d.comparison.min_h_minus_u.abs() <= 1e-10);
}

#[test]
fn every_accepted_iterate_is_admissible() {
    let p = config("degenerate_ball.json", 33);
    let (sub, h, reg, eps) = prepare(&p).unwrap();
    let mut u = sub.field.clone();
    for &e in &eps {
        let mut q = p.clone();
        // One iteration at a time so each accepted iterate can be inspected.
        q.newton.max_iter = 1;
        loop {
            match newton_solve(&q, &reg, e, &u) {
                Ok(rec) => {
                    u = rec.u;
                    break;
                }
                Err(HessolveError::NonConvergence { best: Some(b), .. }) => u = *b,
                Err(err) => panic!("{err}"),
            }
            let a = admissibility_check(&p.fspec, p.gamma, &u).unwrap();
            assert_eq!(a.inadmissible_count, 0);
        }
        let c = comparison_check(&u, &sub.field, &h, p.comparison_slack()).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(ellipticity_check(&p.fspec, p.gamma, &u).unwrap().pass);
    }
}

#[test]
fn hessian_error_is_second_order() {
    let f = |x: &[f64]| (1.3 * x[0]).sin() * (0.7 * x[1]).exp();
    let exact = |x: &[f64]| {
        let (s, c, e) = ((1.3 * x[0]).sin(), (1.3 * x[0]).cos(), (0.7 * x[1]).exp());
        [-1.69 * s * e, 0.91 * c * e, 0.49 * s * e]
    };
    let err = |m: usize| {
        let u = GridField::from_fn(Grid::unit(2, m).unwrap(), f);
        let mut worst = 0.0f64;
        for i in u.grid.interior_nodes() {
            let h = hessian_fd(&u, i).unwrap();
            let x = u.grid.coords(i);
            let e = exact(&x[..2]);
            worst = worst
                .max((h.get(0, 0) - e[0]).abs())
                .max((h.get(0, 1) - e[1]).abs())
                .max((h.get(1, 1) - e[2]).abs());
        }
        worst
    };
    let (a, b, c) = (err(17), err(33), err(65));
    for order in [(a / b).log2(), (b / c).log2()] {
        assert!((order - 2.0).abs() <= 0.3, "{a} {b} {c}");
    }
}

#[test]
fn config_round_trip() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/degenerate_ball.json");
    let cfg = ProblemConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    let again = ProblemConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(cfg, again);
    let bad = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/ma_smooth.json"),
    )
    .unwrap()
    .replacen("\"n\": 2", "\"n\": 2, \"bogus\": 1", 1);
    assert!(matches!(
        ProblemConfig::from_json(&bad),
        Err(HessolveError::Config(_))
    ));
}
