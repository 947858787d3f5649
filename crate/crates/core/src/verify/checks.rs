//! Pointwise checks on solved fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{hessian_at, laplacian_at, GridField};
use crate::error::{HessolveError, Result};
use crate::problem::cone_tolerance;
use crate::spectral::{self, gamma_shift};
use crate::symfunc::{self, ConeStatus, SymmetricFunctionSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pass: bool,
    pub slack: f64,
    /// `min (u - ul u)` over all nodes.
    pub min_u_minus_sub: f64,
    pub worst_sub_node: usize,
    /// `min (h - u)` over all nodes.
    pub min_h_minus_u: f64,
    pub worst_h_node: usize,
}

/// `ul u - slack <= u <= h + slack` at every node.
pub fn comparison_check(
    u: &GridField,
    sub: &GridField,
    h: &GridField,
    slack: f64,
) -> Result<ComparisonReport> {
    u.ensure_same_grid(sub)?;
    u.ensure_same_grid(h)?;
    let mut lo = (f64::INFINITY, 0);
    let mut hi = (f64::INFINITY, 0);
    for i in 0..u.values.len() {
        let a = u.values[i] - sub.values[i];
        let b = h.values[i] - u.values[i];
        if a < lo.0 {
            lo = (a, i);
        }
        if b < hi.0 {
            hi = (b, i);
        }
    }
    Ok(ComparisonReport {
        pass: lo.0 >= -slack && hi.0 >= -slack,
        slack,
        min_u_minus_sub: lo.0,
        worst_sub_node: lo.1,
        min_h_minus_u: hi.0,
        worst_h_node: hi.1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub pass: bool,
    pub tol_cone: f64,
    pub inadmissible_count: usize,
    pub closure_count: usize,
    /// `min_x sigma_j(lambda(U))` for `j = 1..=k`.
    pub worst_sigma: Vec<f64>,
    /// `min (1 + n gamma) Delta_h u` over interior nodes.
    pub laplacian_min: f64,
}

/// Closed-cone membership of `lambda(U_h)` and positivity of `(1 + n gamma) Delta_h u`.
pub fn admissibility_check(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    u: &GridField,
) -> Result<AdmissibilityReport> {
    let grid = u.grid;
    let k = spec.cone_order();
    let tol = cone_tolerance(u);
    let per_node: Vec<Result<(ConeStatus, Vec<f64>, f64)>> = grid
        .interior_nodes()
        .into_par_iter()
        .map(|i| {
            let h = hessian_at(&grid, &u.values, i);
            let lam = spectral::eigenvalues(&gamma_shift(&h, gamma)?)?;
            let status = symfunc::cone_status(&lam, k, tol)?;
            let sig = symfunc::elementary(&lam, k);
            let lap = (1.0 + grid.n() as f64 * gamma) * laplacian_at(&grid, &u.values, i);
            Ok((status, sig[1..].to_vec(), lap))
        })
        .collect();
    let mut worst_sigma = vec![f64::INFINITY; k];
    let mut laplacian_min = f64::INFINITY;
    let mut inadmissible_count = 0;
    let mut closure_count = 0;
    for r in per_node {
        let (status, sig, lap) = r?;
        match status {
            ConeStatus::Outside => inadmissible_count += 1,
            ConeStatus::Closure => closure_count += 1,
            ConeStatus::Open => {}
        }
        for (w, s) in worst_sigma.iter_mut().zip(sig) {
            *w = w.min(s);
        }
        laplacian_min = laplacian_min.min(lap);
    }
    Ok(AdmissibilityReport {
        pass: inadmissible_count == 0 && laplacian_min >= -tol,
        tol_cone: tol,
        inadmissible_count,
        closure_count,
        worst_sigma,
        laplacian_min,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub pass: bool,
    /// Smallest eigenvalue of the linearised coefficients over interior nodes.
    pub lambda0: f64,
    /// Largest eigenvalue.
    pub big_lambda0: f64,
    /// `min sum_i f_i` over interior nodes.
    pub min_f_sum: f64,
    /// Nodes off the closed cone, where no coefficients exist.
    pub skipped: usize,
}

/// Eigenvalue window of `{F^ij + gamma sum F^kk delta_ij}`; passes iff
/// `lambda0 > 0` whenever `gamma > 0`.
pub fn ellipticity_check(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    u: &GridField,
) -> Result<EllipticityReport> {
    let grid = u.grid;
    let tol = cone_tolerance(u);
    let per_node: Vec<Result<Option<(f64, f64, f64)>>> = grid
        .interior_nodes()
        .into_par_iter()
        .map(|i| {
            let h = hessian_at(&grid, &u.values, i);
            let ev = spectral::evaluate_node(spec, &h, gamma, tol, true)?;
            match ev.coefficients {
                Some(a) => {
                    let e = spectral::eigenvalues(&a)?;
                    Ok(Some((e[0], e[e.len() - 1], ev.f_sum)))
                }
                None => Ok(None),
            }
        })
        .collect();
    let mut lambda0 = f64::INFINITY;
    let mut big_lambda0 = f64::NEG_INFINITY;
    let mut min_f_sum = f64::INFINITY;
    let mut skipped = 0;
    for r in per_node {
        match r? {
            Some((lo, hi, fs)) => {
                lambda0 = lambda0.min(lo);
                big_lambda0 = big_lambda0.max(hi);
                min_f_sum = min_f_sum.min(fs);
            }
            None => skipped += 1,
        }
    }
    Ok(EllipticityReport {
        pass: skipped == 0 && (gamma == 0.0 || lambda0 > 0.0),
        lambda0,
        big_lambda0,
        min_f_sum,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C10Report {
    pub pass: bool,
    /// Nodes where both eigenvalue tuples could be evaluated.
    pub evaluated: usize,
    pub active_count: usize,
    pub active_fraction: f64,
    /// `min lhs / (1 + sum f_i)` over active nodes; `None` when none is active.
    pub min_theta: Option<f64>,
}

/// Normal-gap statistic between `u` and its subsolution at every interior node.
pub fn c10_field_check(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    u: &GridField,
    sub: &GridField,
) -> Result<C10Report> {
    u.ensure_same_grid(sub)?;
    let grid = u.grid;
    let tol = cone_tolerance(u);
    let per_node: Vec<Result<Option<symfunc::C10Gap>>> = grid
        .interior_nodes()
        .into_par_iter()
        .map(|i| {
            let mu =
                spectral::eigenvalues(&gamma_shift(&hessian_at(&grid, &sub.values, i), gamma)?)?;
            let lam =
                spectral::eigenvalues(&gamma_shift(&hessian_at(&grid, &u.values, i), gamma)?)?;
            match symfunc::c10_gap_closure(spec, &mu, &lam, tol) {
                Ok(g) => Ok(Some(g)),
                Err(HessolveError::NotInCone { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut evaluated = 0;
    let mut active_count = 0;
    let mut min_theta: Option<f64> = None;
    for r in per_node {
        if let Some(g) = r? {
            evaluated += 1;
            if g.hypothesis_active {
                active_count += 1;
                let t = g.theta();
                min_theta = Some(min_theta.map_or(t, |m| m.min(t)));
            }
        }
    }
    Ok(C10Report {
        pass: min_theta.is_none_or(|t| t > 0.0),
        evaluated,
        active_count,
        active_fraction: if evaluated > 0 {
            active_count as f64 / evaluated as f64
        } else {
            0.0
        },
        min_theta,
    })
}
