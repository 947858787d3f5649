//! Damped Newton iteration with an admissibility-preserving line search and
//! the continuation over the epsilon schedule.

pub mod linear;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use linear::linear_solve;

use crate::discretize::{harmonic_solve, hessian_at, GridField};
use crate::error::{HessolveError, Result};
use crate::problem::{
    auto_subsolution, build_eta, cone_tolerance, regularized_rhs, ProblemSpec, Regularizer,
    Subsolution,
};
use crate::spectral::{self, SymMatrix};
use crate::symfunc::ConeStatus;
use crate::verify::{diagnose, DiagnosticsReport};

/// Smallest accepted line-search step.
pub const MIN_DAMPING: f64 = 1.0 / (1u64 << 20) as f64;
/// Sufficient decrease: accept when `|R_new| <= (1 - s * DECREASE) |R_old|`.
pub const DECREASE: f64 = 0.25;

/// One accepted Newton step (iteration 0 records the starting state).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub residual_norm: f64,
    pub damping: f64,
    /// Interior nodes that left the closed cone, or fell from the open cone
    /// onto its boundary, under the full step.
    pub inadmissible: usize,
}

/// Iterate state inside [`newton_solve`].
#[derive(Clone, Debug)]
pub struct NewtonState {
    pub u: GridField,
    pub residual_norm: f64,
    pub iteration: usize,
    pub step_damping: f64,
    pub admissible: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveRecord {
    pub eps: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub u: GridField,
    pub log: Vec<IterationLog>,
    pub diagnostics: Option<DiagnosticsReport>,
}

struct Evaluated {
    values: Vec<f64>,
    status: Vec<Option<ConeStatus>>,
    coeffs: Option<Vec<SymMatrix>>,
}

impl Evaluated {
    fn outside(&self) -> usize {
        self.status
            .iter()
            .filter(|s| matches!(s, Some(ConeStatus::Outside)))
            .count()
    }

    /// Outside nodes, plus nodes that drop from the open cone to its
    /// boundary where the target is positive.
    fn lost(&self, prev: &Evaluated, rhs: &GridField) -> usize {
        self.status
            .iter()
            .zip(&prev.status)
            .zip(&rhs.values)
            .filter(|((s, p), &t)| match s {
                Some(ConeStatus::Outside) => true,
                Some(ConeStatus::Closure) => *p == &Some(ConeStatus::Open) && t > 0.0,
                _ => false,
            })
            .count()
    }
}

fn evaluate(p: &ProblemSpec, u: &GridField, with_coefficients: bool) -> Result<Evaluated> {
    let grid = u.grid;
    let tol = cone_tolerance(u);
    let nodes: Vec<Result<Option<spectral::NodeEvaluation>>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if grid.is_boundary(i) {
                return Ok(None);
            }
            let h = hessian_at(&grid, &u.values, i);
            spectral::evaluate_node(&p.fspec, &h, p.gamma, tol, with_coefficients).map(Some)
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    let mut status = vec![None; grid.len()];
    let mut coeffs = with_coefficients.then(|| vec![SymMatrix::identity(grid.n()); grid.len()]);
    for (i, e) in nodes.into_iter().enumerate() {
        if let Some(ev) = e? {
            values[i] = ev.value;
            status[i] = Some(ev.status);
            if let (Some(c), Some(a)) = (coeffs.as_mut(), ev.coefficients) {
                c[i] = a;
            }
        }
    }
    Ok(Evaluated {
        values,
        status,
        coeffs,
    })
}

fn sup_residual(ev: &Evaluated, rhs: &GridField) -> (GridField, f64) {
    let mut r = GridField::zeros(rhs.grid);
    let mut norm = 0.0f64;
    for (i, s) in ev.status.iter().enumerate() {
        if s.is_some() {
            r.values[i] = ev.values[i] - rhs.values[i];
            norm = norm.max(r.values[i].abs());
        }
    }
    (r, norm)
}

/// `F_h[u] - (psi + eps eta(psi))` at interior nodes, 0 on the boundary.
pub fn residual(p: &ProblemSpec, reg: &Regularizer, eps: f64, u: &GridField) -> Result<GridField> {
    p.psi.ensure_same_grid(u)?;
    let rhs = regularized_rhs(&p.psi, eps, reg)?;
    let ev = evaluate(p, u, false)?;
    Ok(sup_residual(&ev, &rhs).0)
}

fn with_boundary(p: &ProblemSpec, u: &GridField) -> Result<GridField> {
    p.phi.ensure_same_grid(u)?;
    let mut u = u.clone();
    let scale = 1e-12 * (1.0 + p.phi_boundary_max());
    for i in p.grid.boundary_nodes() {
        if (u.values[i] - p.phi.values[i]).abs() > scale {
            return Err(HessolveError::InvalidInput(format!(
                "initial guess differs from the boundary data at node {i}"
            )));
        }
        u.values[i] = p.phi.values[i];
    }
    Ok(u)
}

/// Damped Newton for `F_h[u] = psi + eps eta(psi)` starting from an
/// admissible `u_init` carrying the boundary data.
pub fn newton_solve(
    p: &ProblemSpec,
    reg: &Regularizer,
    eps: f64,
    u_init: &GridField,
) -> Result<SolveRecord> {
    let rhs = regularized_rhs(&p.psi, eps, reg)?;
    let mut state = NewtonState {
        u: with_boundary(p, u_init)?,
        residual_norm: f64::INFINITY,
        iteration: 0,
        step_damping: 1.0,
        admissible: true,
    };
    let mut ev = evaluate(p, &state.u, true)?;
    let bad = ev.outside();
    if bad > 0 {
        return Err(HessolveError::InvalidInput(format!(
            "initial guess is inadmissible at {bad} interior nodes"
        )));
    }
    let (mut r, mut rnorm) = sup_residual(&ev, &rhs);
    state.residual_norm = rnorm;
    let mut log = vec![IterationLog {
        iteration: 0,
        residual_norm: rnorm,
        damping: 0.0,
        inadmissible: 0,
    }];
    let history = |log: &[IterationLog]| log.iter().map(|l| l.residual_norm).collect::<Vec<_>>();
    while rnorm >= p.newton.tol {
        if state.iteration >= p.newton.max_iter {
            return Err(HessolveError::NonConvergence {
                context: format!("newton_solve at eps = {eps:.6e}"),
                iterations: state.iteration,
                residual: rnorm,
                history: history(&log),
                best: Some(Box::new(state.u)),
            });
        }
        let coeffs = ev.coeffs.clone().expect("coefficients requested");
        let neg_r = r.map(|v| -v);
        let delta = linear_solve(&coeffs, &neg_r)?;
        let mut s = 1.0;
        let mut first_bad = None;
        let accepted = loop {
            let trial = state.u.zip_map(&delta, |a, d| a + s * d)?;
            let tev = evaluate(p, &trial, true)?;
            let bad = tev.lost(&ev, &rhs);
            first_bad.get_or_insert(bad);
            if bad == 0 {
                let (tr, tnorm) = sup_residual(&tev, &rhs);
                if tnorm <= (1.0 - DECREASE * s) * rnorm {
                    break Some((trial, tev, tr, tnorm));
                }
            }
            s *= 0.5;
            if s < MIN_DAMPING {
                break None;
            }
        };
        let Some((trial, tev, tr, tnorm)) = accepted else {
            return Err(HessolveError::LineSearchStalled {
                iteration: state.iteration + 1,
                residual: rnorm,
                history: history(&log),
                best: Some(Box::new(state.u)),
            });
        };
        state.iteration += 1;
        state.u = trial;
        state.step_damping = s;
        state.residual_norm = tnorm;
        ev = tev;
        r = tr;
        rnorm = tnorm;
        log.push(IterationLog {
            iteration: state.iteration,
            residual_norm: rnorm,
            damping: s,
            inadmissible: first_bad.unwrap_or(0),
        });
    }
    Ok(SolveRecord {
        eps,
        iterations: state.iteration,
        final_residual: rnorm,
        u: state.u,
        log,
        diagnostics: None,
    })
}

/// Everything produced by a continuation run.
#[derive(Clone, Debug)]
pub struct Continuation {
    pub subsolution: Subsolution,
    pub harmonic: GridField,
    pub regularizer: Regularizer,
    pub epsilons: Vec<f64>,
    pub records: Vec<SolveRecord>,
}

impl Continuation {
    pub fn last(&self) -> &SolveRecord {
        self.records.last().expect("at least one record")
    }
}

/// Subsolution, harmonic bound, `eps0` and the schedule for a problem.
pub fn prepare(p: &ProblemSpec) -> Result<(Subsolution, GridField, Regularizer, Vec<f64>)> {
    let sub = auto_subsolution(p)?;
    let harmonic = harmonic_solve(&p.grid, &p.phi)?;
    let reg = build_eta(sub.eps0)?;
    let eps = p.schedule.epsilons(sub.eps0);
    Ok((sub, harmonic, reg, eps))
}

/// Solves along the schedule, warm-starting each step from the previous
/// solution (the first from the subsolution). Errors carry the failing eps.
pub fn continuity_solve(p: &ProblemSpec) -> Result<Continuation> {
    let (subsolution, harmonic, regularizer, epsilons) = prepare(p)?;
    let mut records: Vec<SolveRecord> = Vec::with_capacity(epsilons.len());
    for &eps in &epsilons {
        let start = records.last().map_or(&subsolution.field, |r| &r.u);
        let mut rec =
            newton_solve(p, &regularizer, eps, start).map_err(|e| HessolveError::AtEpsilon {
                eps,
                source: Box::new(e),
            })?;
        rec.diagnostics = Some(diagnose(p, &rec.u, &subsolution.field, &harmonic)?);
        records.push(rec);
    }
    Ok(Continuation {
        subsolution,
        harmonic,
        regularizer,
        epsilons,
        records,
    })
}

/// Like [`continuity_solve`] but keeps going after a failed step, warm-starting
/// from the failed step's last accepted iterate (still admissible). One entry
/// per eps.
pub fn continuity_solve_all(
    p: &ProblemSpec,
) -> Result<(Subsolution, GridField, Vec<(f64, Result<SolveRecord>)>)> {
    let (subsolution, harmonic, regularizer, epsilons) = prepare(p)?;
    let mut out = Vec::with_capacity(epsilons.len());
    let mut start = subsolution.field.clone();
    for &eps in &epsilons {
        let res = newton_solve(p, &regularizer, eps, &start).and_then(|mut rec| {
            rec.diagnostics = Some(diagnose(p, &rec.u, &subsolution.field, &harmonic)?);
            Ok(rec)
        });
        match &res {
            Ok(rec) => start = rec.u.clone(),
            Err(
                HessolveError::NonConvergence { best: Some(b), .. }
                | HessolveError::LineSearchStalled { best: Some(b), .. },
            ) => start = (**b).clone(),
            Err(_) => {}
        }
        let res = res.map_err(|e| HessolveError::AtEpsilon {
            eps,
            source: Box::new(e),
        });
        out.push((eps, res));
    }
    Ok((subsolution, harmonic, out))
}
