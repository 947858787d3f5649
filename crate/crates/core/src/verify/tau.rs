//! Second derivatives along the affine skew fields `tau = T x + a` and the
//! inequality `L(u_(tau)(tau)) >= (F[U])_(tau)(tau)`.

use serde::{Deserialize, Serialize};

use crate::discretize::{apply_operator, hessian_at, Grid, GridField};
use crate::error::{HessolveError, Result};
use crate::problem::cone_tolerance;
use crate::spectral;
use crate::symfunc::SymmetricFunctionSpec;

/// Tolerance constant for the analytic suite: margins must stay above
/// `-TAU_C_TEST * h^2`.
pub const TAU_C_TEST: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauReport {
    /// `min (LHS - RHS)` over the checked nodes.
    pub min_margin: f64,
    pub worst_node: usize,
    pub nodes: usize,
    pub h: f64,
}

impl TauReport {
    /// `max(0, -min_margin)`.
    pub fn violation(&self) -> f64 {
        (-self.min_margin).max(0.0)
    }
}

fn check_skew(t: &[Vec<f64>], a: &[f64], n: usize) -> Result<()> {
    if t.len() != n || t.iter().any(|r| r.len() != n) || a.len() != n {
        return Err(HessolveError::InvalidInput(format!(
            "T must be {n}x{n} and a of length {n}"
        )));
    }
    let scale = 1.0 + t.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..n {
            if (t[i][j] + t[j][i]).abs() > 1e-12 * scale {
                return Err(HessolveError::InvalidInput(
                    "T must be skew-symmetric (T + T^t = 0)".into(),
                ));
            }
        }
    }
    Ok(())
}

fn tau_at(t: &[Vec<f64>], a: &[f64], x: &[f64]) -> Vec<f64> {
    (0..a.len())
        .map(|i| a[i] + (0..a.len()).map(|j| t[i][j] * x[j]).sum::<f64>())
        .collect()
}

/// `tau_i tau_j v_ij + T_ij tau_j v_i` at every node of depth `>= layer`.
fn along_tau(grid: &Grid, v: &[f64], t: &[Vec<f64>], a: &[f64], layer: usize) -> Vec<f64> {
    let n = grid.n();
    let mut out = vec![0.0; grid.len()];
    for i in grid.nodes_at_depth(layer) {
        let x = grid.coords(i);
        let tau = tau_at(t, a, &x[..n]);
        let hs = hessian_at(grid, v, i);
        let mut s = 0.0;
        for p in 0..n {
            let st = grid.stride(p);
            let vp = (v[i + st] - v[i - st]) / (2.0 * grid.spacing(p));
            for q in 0..n {
                s += tau[p] * tau[q] * hs.get(p, q) + t[p][q] * tau[q] * vp;
            }
        }
        out[i] = s;
    }
    out
}

/// Minimum of `L(u_(tau)(tau)) - (F[U])_(tau)(tau)` over nodes at least
/// `layers >= 3` from the boundary, with `L` linearised at `u`.
pub fn tau_concavity_check(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    u: &GridField,
    t: &[Vec<f64>],
    a: &[f64],
    layers: usize,
) -> Result<TauReport> {
    let grid = u.grid;
    let n = grid.n();
    check_skew(t, a, n)?;
    if layers < 3 {
        return Err(HessolveError::InvalidInput(
            "the check needs a margin of at least 3 node layers".into(),
        ));
    }
    let tol = cone_tolerance(u);
    let f_u = apply_operator(spec, gamma, u, tol)?;
    if f_u.outside_count() > 0 {
        return Err(HessolveError::InvalidInput(format!(
            "u is inadmissible at {} nodes",
            f_u.outside_count()
        )));
    }
    let w = along_tau(&grid, &u.values, t, a, 1);
    let rhs = along_tau(&grid, &f_u.values.values, t, a, 2);
    let nodes = grid.nodes_at_depth(layers);
    if nodes.is_empty() {
        return Err(HessolveError::InvalidIndex {
            index: 0,
            reason: format!("no nodes {layers} layers inside the grid"),
        });
    }
    let mut min_margin = f64::INFINITY;
    let mut worst_node = nodes[0];
    for &i in &nodes {
        let ev = spectral::evaluate_node(spec, &hessian_at(&grid, &u.values, i), gamma, tol, true)?;
        let coeffs = ev
            .coefficients
            .ok_or_else(|| HessolveError::InvalidInput(format!("u is inadmissible at node {i}")))?;
        let lhs = coeffs.contract(&hessian_at(&grid, &w, i));
        let m = lhs - rhs[i];
        if m < min_margin {
            min_margin = m;
            worst_node = i;
        }
    }
    Ok(TauReport {
        min_margin,
        worst_node,
        nodes: nodes.len(),
        h: grid.min_spacing(),
    })
}

/// Fixed analytic fields on the unit square, admissible for every operator
/// implemented here (their Hessians are positive definite).
pub fn analytic_fields() -> Vec<(&'static str, fn(&[f64]) -> f64)> {
    fn quartic(x: &[f64]) -> f64 {
        let (p, q) = (x[0] - 0.5, x[1] - 0.5);
        0.5 * (p * p + q * q) + (p.powi(4) + q.powi(4)) / 12.0
    }
    fn cubic(x: &[f64]) -> f64 {
        let (p, q) = (x[0] - 0.5, x[1] - 0.5);
        0.5 * (p * p + q * q) + (p.powi(3) + q.powi(3)) / 6.0
    }
    fn mixed(x: &[f64]) -> f64 {
        let (p, q) = (x[0] - 0.5, x[1] - 0.5);
        0.5 * p * p + q * q + 0.25 * p * q + p.powi(4) / 6.0 + 0.5 * p * p * q * q
    }
    vec![("quartic", quartic), ("cubic", cubic), ("mixed", mixed)]
}

/// Fixed skew matrices with offsets: a translation, a rotation about the
/// centre, and a faster rotation about an off-centre point.
pub fn skew_fields() -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    vec![
        (vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![0.6, 0.8]),
        (vec![vec![0.0, 1.0], vec![-1.0, 0.0]], vec![-0.5, 0.5]),
        (vec![vec![0.0, -2.0], vec![2.0, 0.0]], vec![0.8, -0.6]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_skew() {
        let g = Grid::unit(2, 17).unwrap();
        let spec = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let u = GridField::from_fn(g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let t = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert!(tau_concavity_check(&spec, 0.5, &u, &t, &[0.0, 0.0], 3).is_err());
        let skew = vec![vec![0.0, 1.0], vec![-1.0, 0.0]];
        assert!(tau_concavity_check(&spec, 0.5, &u, &skew, &[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn quadratic_field_has_nonnegative_margin() {
        // F[U] is constant, so RHS = 0 and LHS is L of a quadratic.
        let g = Grid::unit(2, 33).unwrap();
        let spec = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let u = GridField::from_fn(g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        for (t, a) in skew_fields() {
            let r = tau_concavity_check(&spec, 0.5, &u, &t, &a, 3).unwrap();
            assert!(r.min_margin >= -1e-8, "{}", r.min_margin);
        }
    }
}
