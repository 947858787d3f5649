//! Estimate sweeps over gamma and the epsilon schedule.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::problem::ProblemSpec;
use crate::solver::continuity_solve_all;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub eps: f64,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub c1_norm: Option<f64>,
    pub c2_interior: Option<f64>,
    pub c2_global: Option<f64>,
    pub c2_boundary: Option<f64>,
    pub error: Option<String>,
}

/// Per-gamma derived columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    pub gamma: f64,
    /// `c2_global` at the smallest eps over the second smallest.
    pub c2_stability_ratio: Option<f64>,
    /// Same for `c1_norm`.
    pub c1_stability_ratio: Option<f64>,
    /// `c2_global / (1 + c2_boundary)` at the smallest converged eps.
    pub boundary_ratio: Option<f64>,
    pub converged_cells: usize,
    pub cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema: String,
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<GammaSummary>,
}

impl SweepTable {
    pub fn converged_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.converged).count() as f64 / self.rows.len() as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "gamma",
            "eps",
            "status",
            "iterations",
            "c1_norm",
            "c2_interior",
            "c2_global",
            "c2_boundary",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            wtr.write_record([
                r.gamma.to_string(),
                r.eps.to_string(),
                if r.converged { "converged" } else { "failed" }.to_string(),
                r.iterations.map_or(String::new(), |i| i.to_string()),
                opt(r.c1_norm),
                opt(r.c2_interior),
                opt(r.c2_global),
                opt(r.c2_boundary),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn ratio(rows: &[&SweepRow], pick: impl Fn(&SweepRow) -> Option<f64>) -> Option<f64> {
    let n = rows.len();
    if n < 2 || !rows[n - 1].converged || !rows[n - 2].converged {
        return None;
    }
    Some(pick(rows[n - 1])? / pick(rows[n - 2])?)
}

fn rows_for_gamma(p: &ProblemSpec, gamma: f64) -> Vec<SweepRow> {
    let mut q = p.clone();
    q.gamma = gamma;
    let failed = |eps: f64, msg: String| SweepRow {
        gamma,
        eps,
        converged: false,
        iterations: None,
        c1_norm: None,
        c2_interior: None,
        c2_global: None,
        c2_boundary: None,
        error: Some(msg),
    };
    match continuity_solve_all(&q) {
        Err(e) => {
            // No subsolution: every cell of this gamma fails.
            let msg = e.to_string();
            (0..q.schedule.epsilons(1.0).len())
                .map(|_| failed(f64::NAN, msg.clone()))
                .collect()
        }
        Ok((_, _, cells)) => cells
            .into_iter()
            .map(|(eps, res)| match res {
                Ok(rec) => {
                    let d = rec.diagnostics.as_ref();
                    SweepRow {
                        gamma,
                        eps,
                        converged: true,
                        iterations: Some(rec.iterations),
                        c1_norm: d.map(|d| d.c1_norm),
                        c2_interior: d.map(|d| d.c2_interior),
                        c2_global: d.map(|d| d.c2_global),
                        c2_boundary: d.map(|d| d.c2_boundary),
                        error: None,
                    }
                }
                Err(e) => failed(eps, e.to_string()),
            })
            .collect(),
    }
}

/// Runs the continuation for every gamma (in parallel) and tabulates the
/// C1/C2 surrogates per (gamma, eps). Failed cells are recorded, not fatal.
/// An empty `gammas` uses the problem's own gamma.
pub fn estimate_sweep(p: &ProblemSpec, gammas: &[f64]) -> SweepTable {
    let gammas: Vec<f64> = if gammas.is_empty() {
        vec![p.gamma]
    } else {
        gammas.to_vec()
    };
    let per_gamma: Vec<Vec<SweepRow>> = gammas.par_iter().map(|&g| rows_for_gamma(p, g)).collect();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (g, block) in gammas.iter().zip(per_gamma) {
        let refs: Vec<&SweepRow> = block.iter().collect();
        let last_ok = refs.iter().rev().find(|r| r.converged);
        summaries.push(GammaSummary {
            gamma: *g,
            c2_stability_ratio: ratio(&refs, |r| r.c2_global),
            c1_stability_ratio: ratio(&refs, |r| r.c1_norm),
            boundary_ratio: last_ok.and_then(|r| Some(r.c2_global? / (1.0 + r.c2_boundary?))),
            converged_cells: block.iter().filter(|r| r.converged).count(),
            cells: block.len(),
        });
        rows.extend(block);
    }
    SweepTable {
        schema: super::SCHEMA.to_string(),
        rows,
        summaries,
    }
}
