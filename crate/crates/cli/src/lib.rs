//! Solve, sweep and verify commands behind the `hessolve` binary.
//!
//! Every command returns an exit code; see [`exit`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hessolve_core::problem::{ProblemConfig, ProblemSpec, Schedule};
use hessolve_core::solver::{continuity_solve_all, prepare, SolveRecord};
use hessolve_core::verify::{
    admissibility_check, c10_field_check, comparison_check, ellipticity_check, estimate_sweep,
    skew_fields, tau_concavity_check, SCHEMA,
};
use hessolve_core::{GridField, HessolveError};

pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECKS_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
    pub const SUBSOLUTION: i32 = 4;
}

/// Converged fraction of sweep cells required for a zero exit.
pub const SWEEP_PASS_FRACTION: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub index: usize,
    pub eps: f64,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub checks_pass: Option<bool>,
    pub exact_error: Option<f64>,
    pub error: Option<String>,
}

/// Written as `manifest.json` by [`cmd_solve`]. Wall time is reported on
/// stderr only, so the manifest is reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub config_sha256: String,
    pub schedule: Schedule,
    pub epsilons: Vec<f64>,
    pub eps0: f64,
    pub subsolution_a: f64,
    pub steps: Vec<StepSummary>,
    pub files: Vec<String>,
    pub exit_code: i32,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Reads and validates a config; the error string is meant for the user.
pub fn load_config(path: &Path) -> Result<(ProblemSpec, Vec<u8>), String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg = ProblemConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let p = cfg
        .to_problem()
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((p, bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}

fn write_field(
    dir: &Path,
    stem: &str,
    u: &GridField,
    files: &mut Vec<String>,
) -> Result<(), HessolveError> {
    fs::write(dir.join(format!("{stem}.json")), u.to_json()?)?;
    u.write_csv(fs::File::create(dir.join(format!("{stem}.csv")))?)?;
    files.push(format!("{stem}.json"));
    files.push(format!("{stem}.csv"));
    Ok(())
}

fn write_newton_log(path: &Path, records: &[(usize, &SolveRecord)]) -> std::io::Result<()> {
    let mut out = String::from("eps_index,eps,iteration,residual_norm,damping,inadmissible\n");
    for (j, rec) in records {
        for l in &rec.log {
            out.push_str(&format!(
                "{j},{},{},{},{},{}\n",
                rec.eps, l.iteration, l.residual_norm, l.damping, l.inadmissible
            ));
        }
    }
    fs::write(path, out)
}

/// Runs the continuation for `config`, writing per-eps fields, the final
/// diagnostics, a Newton log and the manifest into `out`.
pub fn cmd_solve(config: &Path, out: &Path) -> i32 {
    let (p, bytes) = match load_config(config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            return exit::CONFIG;
        }
    };
    match solve_into(&p, &bytes, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e.root() {
                HessolveError::SubsolutionFailed { .. } => exit::SUBSOLUTION,
                HessolveError::Io(_) => exit::CONFIG,
                _ => exit::NON_CONVERGENCE,
            }
        }
    }
}

fn solve_into(p: &ProblemSpec, config_bytes: &[u8], out: &Path) -> Result<i32, HessolveError> {
    let started = std::time::Instant::now();
    let (sub, _, cells) = continuity_solve_all(p)?;
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut steps = Vec::new();
    let mut converged: Vec<(usize, &SolveRecord)> = Vec::new();
    let mut failure = None;
    for (j, (eps, res)) in cells.iter().enumerate() {
        match res {
            Ok(rec) if failure.is_none() => {
                write_field(out, &format!("u_eps{j:02}"), &rec.u, &mut files)?;
                let d = rec.diagnostics.as_ref();
                steps.push(StepSummary {
                    index: j,
                    eps: *eps,
                    converged: true,
                    iterations: Some(rec.iterations),
                    final_residual: Some(rec.final_residual),
                    checks_pass: d.map(|d| d.pass),
                    exact_error: d.and_then(|d| d.exact_error),
                    error: None,
                });
                converged.push((j, rec));
            }
            // Steps after a failure warm-start from an older state; they are
            // not part of the continuation and are not written.
            Ok(_) => steps.push(StepSummary {
                index: j,
                eps: *eps,
                converged: false,
                iterations: None,
                final_residual: None,
                checks_pass: None,
                exact_error: None,
                error: Some("skipped after an earlier failure".into()),
            }),
            Err(e) => {
                eprintln!("error: {e}");
                failure.get_or_insert(j);
                steps.push(StepSummary {
                    index: j,
                    eps: *eps,
                    converged: false,
                    iterations: None,
                    final_residual: None,
                    checks_pass: None,
                    exact_error: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    if let Some((_, last)) = converged.last() {
        if let Some(d) = &last.diagnostics {
            write_json(&out.join("diagnostics.json"), d)?;
            files.push("diagnostics.json".into());
        }
    }
    write_newton_log(&out.join("newton_log.csv"), &converged)?;
    files.push("newton_log.csv".into());
    let code = if failure.is_some() {
        exit::NON_CONVERGENCE
    } else if converged
        .iter()
        .all(|(_, r)| r.diagnostics.as_ref().is_some_and(|d| d.pass))
    {
        exit::OK
    } else {
        exit::CHECKS_FAILED
    };
    let manifest = RunManifest {
        schema: SCHEMA.to_string(),
        config_sha256: sha256_hex(config_bytes),
        schedule: p.schedule.clone(),
        epsilons: cells.iter().map(|(e, _)| *e).collect(),
        eps0: sub.eps0,
        subsolution_a: sub.a,
        steps,
        files,
        exit_code: code,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    eprintln!(
        "solve finished in {:.2?} (eps0 = {:.6e}, A = {}, exit {code})",
        started.elapsed(),
        sub.eps0,
        sub.a
    );
    Ok(code)
}

/// Parses `"a,b,c"`; an empty string gives an empty list.
pub fn parse_gammas(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| format!("bad gamma {t:?}: {e}"))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema: String,
    pub config_sha256: String,
    pub converged_fraction: f64,
    pub summaries: Vec<hessolve_core::verify::GammaSummary>,
}

/// Writes `sweep.csv` and `sweep_summary.json`; exit 0 iff at least 90% of
/// the (gamma, eps) cells converged.
pub fn cmd_sweep(config: &Path, gammas: &[f64], out: &Path) -> i32 {
    let (p, bytes) = match load_config(config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            return exit::CONFIG;
        }
    };
    let table = estimate_sweep(&p, gammas);
    let write = || -> Result<(), HessolveError> {
        fs::create_dir_all(out)?;
        table.write_csv(fs::File::create(out.join("sweep.csv"))?)?;
        write_json(
            &out.join("sweep_summary.json"),
            &SweepSummary {
                schema: SCHEMA.to_string(),
                config_sha256: sha256_hex(&bytes),
                converged_fraction: table.converged_fraction(),
                summaries: table.summaries.clone(),
            },
        )?;
        Ok(())
    };
    if let Err(e) = write() {
        eprintln!("error: {e}");
        return exit::CONFIG;
    }
    for r in table.rows.iter().filter(|r| !r.converged) {
        eprintln!(
            "cell gamma = {} eps = {:e} failed: {}",
            r.gamma,
            r.eps,
            r.error.as_deref().unwrap_or("")
        );
    }
    if table.converged_fraction() >= SWEEP_PASS_FRACTION {
        exit::OK
    } else {
        exit::NON_CONVERGENCE
    }
}

/// One row of the verify table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub mandatory: bool,
    /// `None` for informational rows.
    pub pass: Option<bool>,
    pub detail: String,
}

/// Runs the checks on a stored field; the mandatory ones are comparison,
/// admissibility and ellipticity.
pub fn verify_field(p: &ProblemSpec, u: &GridField) -> Result<Vec<CheckRow>, HessolveError> {
    let (sub, h, _, _) = prepare(p)?;
    let mut rows = Vec::new();
    let c = comparison_check(u, &sub.field, &h, p.comparison_slack())?;
    rows.push(CheckRow {
        name: "comparison".into(),
        mandatory: true,
        pass: Some(c.pass),
        detail: format!(
            "min(u - sub) = {:.3e}, min(h - u) = {:.3e}, slack = {:.3e}",
            c.min_u_minus_sub, c.min_h_minus_u, c.slack
        ),
    });
    let a = admissibility_check(&p.fspec, p.gamma, u)?;
    rows.push(CheckRow {
        name: "admissibility".into(),
        mandatory: true,
        pass: Some(a.pass),
        detail: format!(
            "outside = {}, closure = {}, min laplacian term = {:.3e}",
            a.inadmissible_count, a.closure_count, a.laplacian_min
        ),
    });
    let e = ellipticity_check(&p.fspec, p.gamma, u)?;
    rows.push(CheckRow {
        name: "ellipticity".into(),
        mandatory: true,
        pass: Some(e.pass),
        detail: format!(
            "lambda0 = {:.3e}, Lambda0 = {:.3e}, skipped = {}",
            e.lambda0, e.big_lambda0, e.skipped
        ),
    });
    let g = c10_field_check(&p.fspec, p.gamma, u, &sub.field)?;
    rows.push(CheckRow {
        name: "c10".into(),
        mandatory: false,
        pass: Some(g.pass),
        detail: format!(
            "active = {}/{}, min theta = {}",
            g.active_count,
            g.evaluated,
            g.min_theta.map_or("-".into(), |t| format!("{t:.3e}"))
        ),
    });
    if a.inadmissible_count == 0 && p.grid.n() == 2 && p.grid.m() > 6 {
        let hh = p.grid.min_spacing().powi(2);
        let mut worst = f64::INFINITY;
        for (t, off) in skew_fields() {
            worst = worst.min(tau_concavity_check(&p.fspec, p.gamma, u, &t, &off, 3)?.min_margin);
        }
        rows.push(CheckRow {
            name: "tau".into(),
            mandatory: false,
            pass: None,
            detail: format!("min margin = {worst:.3e} ({:.3e} h^2)", worst / hh),
        });
    }
    if let Some(exact) = &p.exact {
        rows.push(CheckRow {
            name: "exact_error".into(),
            mandatory: false,
            pass: None,
            detail: format!("{:.3e}", u.max_diff(exact)?),
        });
    }
    Ok(rows)
}

pub fn print_table<W: Write>(w: &mut W, rows: &[CheckRow]) -> std::io::Result<()> {
    writeln!(
        w,
        "{:<14} {:<9} {:<6} detail",
        "check", "required", "result"
    )?;
    for r in rows {
        let result = match r.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "info",
        };
        let req = if r.mandatory { "yes" } else { "no" };
        writeln!(w, "{:<14} {:<9} {:<6} {}", r.name, req, result, r.detail)?;
    }
    Ok(())
}

/// Verifies a solution file written by [`cmd_solve`] against its config.
pub fn cmd_verify<W: Write>(solution: &Path, config: &Path, out: &mut W) -> i32 {
    let (p, _) = match load_config(config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            return exit::CONFIG;
        }
    };
    let u = match fs::read_to_string(solution)
        .map_err(HessolveError::from)
        .and_then(|s| GridField::from_json(&s))
    {
        Ok(u) => u,
        Err(e) => {
            eprintln!("solution error: {}: {e}", solution.display());
            return exit::CONFIG;
        }
    };
    if u.grid != p.grid {
        eprintln!(
            "solution grid (n = {}, m = {}) does not match the config grid (n = {}, m = {})",
            u.grid.n(),
            u.grid.m(),
            p.grid.n(),
            p.grid.m()
        );
        return exit::CONFIG;
    }
    let rows = match verify_field(&p, &u) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return match e.root() {
                HessolveError::SubsolutionFailed { .. } => exit::SUBSOLUTION,
                _ => exit::CHECKS_FAILED,
            };
        }
    };
    if print_table(out, &rows).is_err() {
        return exit::CHECKS_FAILED;
    }
    if rows
        .iter()
        .filter(|r| r.mandatory)
        .all(|r| r.pass == Some(true))
    {
        exit::OK
    } else {
        exit::CHECKS_FAILED
    }
}

/// Applies `HESSOLVE_THREADS` to the global rayon pool when set.
pub fn configure_threads() -> Result<(), String> {
    match std::env::var("HESSOLVE_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|e| format!("HESSOLVE_THREADS={v:?}: {e}"))?;
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        }
        Err(_) => Ok(()),
    }
}

/// Sorted list of the files in `dir`, for comparing two runs.
pub fn list_outputs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    v.sort();
    Ok(v)
}
