use std::fs;
use std::path::{Path, PathBuf};

use hessolve_cli::{cmd_solve, cmd_sweep, cmd_verify, exit, parse_gammas, RunManifest};
use hessolve_core::GridField;
use serde_json::{json, Value};

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// Bundled config with `edit` applied, written into `dir`.
fn variant(dir: &Path, name: &str, edit: impl Fn(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(bundled(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(format!("variant_{name}"));
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn small(v: &mut Value) {
    v["grid"]["m"] = json!(17);
}

#[test]
fn solve_writes_fields_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "ma_smooth.json", small);
    let out = tmp.path().join("run");
    assert_eq!(cmd_solve(&cfg, &out), exit::OK);
    let m: RunManifest =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.steps.len(), 7);
    assert_eq!(m.exit_code, 0);
    assert_eq!(m.subsolution_a, 1.0);
    assert_eq!(m.config_sha256.len(), 64);
    for f in &m.files {
        assert!(out.join(f).exists(), "{f}");
    }
    let h = 1.0 / 16.0;
    assert!(m
        .steps
        .iter()
        .all(|s| s.exact_error.unwrap() < 10.0 * h * h));
}

#[test]
fn validation_failures_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let g0 = variant(tmp.path(), "degenerate_ball.json", |v| {
        small(v);
        v["gamma"] = json!(0.0);
    });
    assert_eq!(cmd_solve(&g0, &out), exit::CONFIG);
    let neg = variant(tmp.path(), "sigma1_linear.json", |v| {
        v["psi"] = json!({"kind": "constant", "params": {"value": -1.0}});
    });
    assert_eq!(cmd_solve(&neg, &out), exit::CONFIG);
    let garbage = tmp.path().join("garbage.json");
    fs::write(&garbage, "{ \"n\": 2,\n  oops }").unwrap();
    assert_eq!(cmd_solve(&garbage, &out), exit::CONFIG);
    assert!(!out.exists());
}

#[test]
fn newton_budget_exhaustion_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "degenerate_ball.json", |v| {
        small(v);
        v["newton"]["max_iter"] = json!(1);
    });
    let out = tmp.path().join("run");
    assert_eq!(cmd_solve(&cfg, &out), exit::NON_CONVERGENCE);
    let m: RunManifest =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(!m.steps[0].converged);
    assert!(m.steps[0].error.as_ref().unwrap().contains("eps"));
}

#[test]
fn unreachable_subsolution_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "sigma1_linear.json", |v| {
        small(v);
        v["psi"] = json!({"kind": "constant", "params": {"value": 1e12}});
    });
    assert_eq!(cmd_solve(&cfg, &tmp.path().join("run")), exit::SUBSOLUTION);
}

#[test]
fn sweep_row_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "degenerate_ball.json", small);
    let out = tmp.path().join("sweep");
    assert_eq!(
        cmd_sweep(&cfg, &parse_gammas("0.25,0.5,1.0").unwrap(), &out),
        exit::OK
    );
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 21);
    let out = tmp.path().join("sweep_default");
    assert_eq!(cmd_sweep(&cfg, &parse_gammas("").unwrap(), &out), exit::OK);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7);
    assert!(csv
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2) == Some("converged")));
}

#[test]
fn sweep_tolerates_a_failed_cell() {
    let tmp = tempfile::tempdir().unwrap();
    // Ten cells; 7 Newton steps are too few for the first eps only.
    let cfg = variant(tmp.path(), "degenerate_ball.json", |v| {
        small(v);
        v["schedule"]["steps"] = json!(10);
        v["newton"]["max_iter"] = json!(7);
    });
    let out = tmp.path().join("sweep");
    assert_eq!(cmd_sweep(&cfg, &[0.5], &out), exit::OK);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let status: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(status.len(), 10);
    assert_eq!(status[0], "failed");
    assert!(status[1..].iter().all(|s| *s == "converged"));
}

#[test]
fn verify_solution_corruption_and_affine() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "ma_smooth.json", small);
    let out = tmp.path().join("run");
    assert_eq!(cmd_solve(&cfg, &out), exit::OK);
    let sol = out.join("u_eps06.json");
    let mut table = Vec::new();
    assert_eq!(cmd_verify(&sol, &cfg, &mut table), exit::OK);
    let table = String::from_utf8(table).unwrap();
    assert!(!table.contains("FAIL"), "{table}");

    let mut u = GridField::from_json(&fs::read_to_string(&sol).unwrap()).unwrap();
    let mid = u.grid.index_of(&[8, 8]);
    u.values[mid] += 1e3;
    let bad = tmp.path().join("corrupt.json");
    fs::write(&bad, u.to_json().unwrap()).unwrap();
    let mut table = Vec::new();
    assert_eq!(cmd_verify(&bad, &cfg, &mut table), exit::CHECKS_FAILED);
    let table = String::from_utf8(table).unwrap();
    for name in ["comparison", "admissibility"] {
        let line = table.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(line.contains("FAIL"), "{line}");
    }

    let affine_cfg = variant(tmp.path(), "affine_zero.json", small);
    let g = hessolve_core::Grid::unit(2, 17).unwrap();
    let affine = GridField::from_fn(g, |x| 0.2 + x[0] - 0.5 * x[1]);
    let path = tmp.path().join("affine.json");
    fs::write(&path, affine.to_json().unwrap()).unwrap();
    let mut table = Vec::new();
    assert_eq!(cmd_verify(&path, &affine_cfg, &mut table), exit::OK);
    assert!(!String::from_utf8(table).unwrap().contains("FAIL"));
    let (p, _) = hessolve_cli::load_config(&affine_cfg).unwrap();
    let (sub, h, _, _) = hessolve_core::solver::prepare(&p).unwrap();
    let c = hessolve_core::verify::comparison_check(&affine, &sub.field, &h, 0.0).unwrap();
    assert!(
        c.min_u_minus_sub.abs() < 1e-12 && c.min_h_minus_u.abs() < 1e-12,
        "{c:?}"
    );
}

#[test]
fn verify_rejects_grid_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(tmp.path(), "ma_smooth.json", small);
    let u = GridField::from_fn(hessolve_core::Grid::unit(2, 9).unwrap(), |x| x[0]);
    let path = tmp.path().join("u.json");
    fs::write(&path, u.to_json().unwrap()).unwrap();
    assert_eq!(cmd_verify(&path, &cfg, &mut Vec::new()), exit::CONFIG);
    fs::write(&path, "{\"not\": \"a field\"}").unwrap();
    assert_eq!(cmd_verify(&path, &cfg, &mut Vec::new()), exit::CONFIG);
}

#[test]
fn gamma_list_parsing() {
    assert_eq!(parse_gammas("0.25, 0.5,1").unwrap(), vec![0.25, 0.5, 1.0]);
    assert!(parse_gammas("").unwrap().is_empty());
    assert!(parse_gammas("0.5,x").is_err());
}
