//! Boundary barrier `Psi` near a face patch and a search for constants
//! making `L Psi <= -K (1 + sum F^ii)` there.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{gradient_fd, hessian_at, GridField};
use crate::error::{HessolveError, Result};
use crate::problem::cone_tolerance;
use crate::spectral::{self, SymMatrix};
use crate::symfunc::SymmetricFunctionSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Low,
    High,
}

/// Face point `center` on the face `x_axis = 0` (`Low`) or `x_axis = L` (`High`);
/// the region is the ball of radius `delta` around it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPatch {
    pub axis: usize,
    pub side: Side,
    /// Coordinates of the face point; the normal component is ignored.
    pub center: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierConstants {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub t: f64,
    pub n_coef: f64,
    pub delta: f64,
    pub k: f64,
}

impl BarrierConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.a1,
            self.a2,
            self.a3,
            self.a4,
            self.t,
            self.n_coef,
            self.delta,
            self.k,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(HessolveError::InvalidInput(format!(
                "barrier constants must be positive and finite: {self:?}"
            )));
        }
        if self.a1 <= 2.0 * self.a2 {
            return Err(HessolveError::InvalidInput(format!(
                "barrier constants need a1 > 2 a2 (a1 = {}, a2 = {})",
                self.a1, self.a2
            )));
        }
        Ok(())
    }
}

/// `L Psi + K (1 + sum F^ii)` on the patch region; nonpositive entries mean
/// the barrier inequality holds at that node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierMargin {
    pub nodes: Vec<usize>,
    pub margin: Vec<f64>,
}

impl BarrierMargin {
    pub fn fraction_nonpositive(&self) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        self.margin.iter().filter(|&&m| m <= 0.0).count() as f64 / self.nodes.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.margin
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `L` applied to each building block of `Psi` at every region node, plus
/// `sum F^ii`. `Psi`'s image is then a linear combination.
struct Components {
    nodes: Vec<usize>,
    diff: Vec<f64>,
    d: Vec<f64>,
    d2: Vec<f64>,
    x2: Vec<f64>,
    tangential: Vec<f64>,
    f_sum: Vec<f64>,
}

fn patch_nodes(u: &GridField, patch: &BoundaryPatch, delta: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let grid = u.grid;
    let n = grid.n();
    if patch.axis >= n || patch.center.len() != n {
        return Err(HessolveError::InvalidInput(format!(
            "patch axis {} / centre length {} do not fit an {n}-dimensional grid",
            patch.axis,
            patch.center.len()
        )));
    }
    let ext = grid.extents();
    let clearance = 2.0 * grid.min_spacing();
    let mut origin = patch.center.clone();
    origin[patch.axis] = match patch.side {
        Side::Low => 0.0,
        Side::High => ext[patch.axis],
    };
    for d in 0..n {
        let reach = if d == patch.axis {
            delta + clearance <= ext[d]
        } else {
            origin[d] - delta >= clearance && origin[d] + delta <= ext[d] - clearance
        };
        if !reach {
            return Err(HessolveError::InvalidInput(format!(
                "patch of radius {delta} around {origin:?} touches an edge or corner"
            )));
        }
    }
    let nodes: Vec<usize> = grid
        .interior_nodes()
        .into_iter()
        .filter(|&i| {
            let x = grid.coords(i);
            (0..n).map(|d| (x[d] - origin[d]).powi(2)).sum::<f64>() < delta * delta
        })
        .collect();
    if nodes.is_empty() {
        return Err(HessolveError::InvalidInput(
            "patch region contains no interior nodes".into(),
        ));
    }
    Ok((nodes, origin))
}

/// `sum_ij a_ij (D_h^2 v)_ij` at an interior node.
fn apply_l(a: &SymMatrix, grid: &crate::discretize::Grid, v: &[f64], i: usize) -> f64 {
    a.contract(&hessian_at(grid, v, i))
}

#[allow(clippy::too_many_arguments)]
fn components(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    u: &GridField,
    sub: &GridField,
    phi: &GridField,
    patch: &BoundaryPatch,
    delta: f64,
) -> Result<Components> {
    u.ensure_same_grid(sub)?;
    u.ensure_same_grid(phi)?;
    let grid = u.grid;
    let n = grid.n();
    let (nodes, origin) = patch_nodes(u, patch, delta)?;
    let ext = grid.extents().to_vec();
    let axis = patch.axis;
    let side = patch.side;
    let diff = u.zip_map(sub, |a, b| a - b)?;
    let d = GridField::from_fn(grid, |x| match side {
        Side::Low => x[axis],
        Side::High => ext[axis] - x[axis],
    });
    let d2 = d.map(|v| v * v);
    let x2 = GridField::from_fn(grid, |x| (0..n).map(|k| (x[k] - origin[k]).powi(2)).sum());
    let w = u.zip_map(phi, |a, b| a - b)?;
    let mut tangential = GridField::zeros(grid);
    for i in 0..grid.len() {
        let g = gradient_fd(&w, i);
        tangential.values[i] = (0..n).filter(|&l| l != axis).map(|l| g[l] * g[l]).sum();
    }
    let tol = cone_tolerance(u);
    let per_node: Vec<Result<[f64; 6]>> = nodes
        .par_iter()
        .map(|&i| {
            let ev =
                spectral::evaluate_node(spec, &hessian_at(&grid, &u.values, i), gamma, tol, true)?;
            let a = ev.coefficients.ok_or_else(|| {
                HessolveError::InvalidInput(format!("u is inadmissible at node {i}"))
            })?;
            Ok([
                apply_l(&a, &grid, &diff.values, i),
                apply_l(&a, &grid, &d.values, i),
                apply_l(&a, &grid, &d2.values, i),
                apply_l(&a, &grid, &x2.values, i),
                apply_l(&a, &grid, &tangential.values, i),
                ev.f_sum,
            ])
        })
        .collect();
    let mut c = Components {
        nodes: nodes.clone(),
        diff: Vec::with_capacity(nodes.len()),
        d: Vec::with_capacity(nodes.len()),
        d2: Vec::with_capacity(nodes.len()),
        x2: Vec::with_capacity(nodes.len()),
        tangential: Vec::with_capacity(nodes.len()),
        f_sum: Vec::with_capacity(nodes.len()),
    };
    for r in per_node {
        let [a, b, e, f, g, s] = r?;
        c.diff.push(a);
        c.d.push(b);
        c.d2.push(e);
        c.x2.push(f);
        c.tangential.push(g);
        c.f_sum.push(s);
    }
    Ok(c)
}

impl Components {
    fn margin(&self, k: &BarrierConstants) -> Vec<f64> {
        let inv = 1.0 / (k.delta * k.delta);
        (0..self.nodes.len())
            .map(|j| {
                let l_psi = inv
                    * (k.a1 * self.diff[j] + k.t * self.d[j] - 0.5 * k.n_coef * self.d2[j]
                        + k.a3 * self.x2[j])
                    - k.a2 * self.diff[j]
                    - k.a4 * self.tangential[j];
                l_psi + k.k * (1.0 + self.f_sum[j])
            })
            .collect()
    }
}

/// `Psi = (A1 (u - ul u) + t d - N d^2 / 2 + A3 |x|^2) / delta^2 - A2 (u - ul u)
/// - A4 sum_{l<n} |D_l (u - phi)|^2` with `d` the distance to the face and
/// `x` measured from the face point; returns `L Psi + K (1 + sum F^ii)`.
pub fn barrier_margin(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    u: &GridField,
    sub: &GridField,
    phi: &GridField,
    consts: &BarrierConstants,
    patch: &BoundaryPatch,
) -> Result<BarrierMargin> {
    consts.validate()?;
    let c = components(spec, gamma, u, sub, phi, patch, consts.delta)?;
    Ok(BarrierMargin {
        margin: c.margin(consts),
        nodes: c.nodes,
    })
}

/// Result of [`barrier_search`]: the best constants found and their score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierCertificate {
    pub constants: BarrierConstants,
    pub fraction_nonpositive: f64,
    pub max_margin: f64,
    pub region_nodes: usize,
    pub combinations_tried: usize,
    pub found: bool,
}

fn decades(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi)
        .step_by(step as usize)
        .map(|e| 10f64.powi(e))
        .collect()
}

/// Searches a logarithmic box (every constant in `1e-2 .. 1e6`, at most 1e4
/// combinations) at fixed `delta` and `K`, stopping at the first vector with
/// margin `<= 0` on at least `target` of the region.
#[allow(clippy::too_many_arguments)]
pub fn barrier_search(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    u: &GridField,
    sub: &GridField,
    phi: &GridField,
    patch: &BoundaryPatch,
    delta: f64,
    k: f64,
    target: f64,
) -> Result<BarrierCertificate> {
    let c = components(spec, gamma, u, sub, phi, patch, delta)?;
    let a1s = decades(-2, 6, 1);
    let a2s = decades(-2, 4, 2);
    let a3s = decades(-2, 2, 2);
    let a4s = decades(-2, 2, 2);
    let ts = decades(-2, 2, 2);
    let ns = decades(-2, 6, 2);
    let mut best: Option<BarrierCertificate> = None;
    let mut tried = 0;
    for &a1 in &a1s {
        for &a2 in a2s.iter().filter(|&&a2| a1 > 2.0 * a2) {
            for &a3 in &a3s {
                for &a4 in &a4s {
                    for &t in &ts {
                        for &n_coef in &ns {
                            tried += 1;
                            let consts = BarrierConstants {
                                a1,
                                a2,
                                a3,
                                a4,
                                t,
                                n_coef,
                                delta,
                                k,
                            };
                            let m = BarrierMargin {
                                nodes: c.nodes.clone(),
                                margin: c.margin(&consts),
                            };
                            let frac = m.fraction_nonpositive();
                            let max = m.max();
                            let better = best.as_ref().is_none_or(|b| {
                                frac > b.fraction_nonpositive
                                    || (frac == b.fraction_nonpositive && max < b.max_margin)
                            });
                            if better {
                                best = Some(BarrierCertificate {
                                    constants: consts,
                                    fraction_nonpositive: frac,
                                    max_margin: max,
                                    region_nodes: c.nodes.len(),
                                    combinations_tried: tried,
                                    found: frac >= target,
                                });
                            }
                            if frac >= target {
                                let mut cert = best.expect("just set");
                                cert.combinations_tried = tried;
                                return Ok(cert);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut cert = best.ok_or_else(|| HessolveError::InvalidInput("empty search box".into()))?;
    cert.combinations_tried = tried;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Grid;

    fn consts() -> BarrierConstants {
        BarrierConstants {
            a1: 3.0,
            a2: 1.0,
            a3: 0.5,
            a4: 0.25,
            t: 0.1,
            n_coef: 2.0,
            delta: 0.2,
            k: 1.0,
        }
    }

    #[test]
    fn invariant_enforced() {
        let mut c = consts();
        c.a1 = 2.0;
        assert!(c.validate().is_err());
        let zero = BarrierConstants {
            a1: 0.0,
            a2: 0.0,
            a3: 0.0,
            a4: 0.0,
            t: 0.0,
            n_coef: 0.0,
            delta: 0.2,
            k: 0.0,
        };
        assert!(matches!(
            zero.validate(),
            Err(HessolveError::InvalidInput(_))
        ));
    }

    #[test]
    fn patch_must_avoid_corners() {
        let g = Grid::unit(2, 33).unwrap();
        let spec = SymmetricFunctionSpec::sigma_root(1, 2).unwrap();
        let u = GridField::from_fn(g, |x| x[0] * x[0] + x[1] * x[1]);
        let near_corner = BoundaryPatch {
            axis: 0,
            side: Side::Low,
            center: vec![0.0, 0.1],
        };
        assert!(barrier_margin(&spec, 0.5, &u, &u, &u, &consts(), &near_corner).is_err());
    }

    #[test]
    fn sigma1_closed_form() {
        // Constant coefficients (1 + n gamma) I; every block is quadratic, so
        // L is exact and the margin has a closed form.
        let g = Grid::unit(2, 41).unwrap();
        let gamma = 0.5;
        let spec = SymmetricFunctionSpec::sigma_root(1, 2).unwrap();
        let u = GridField::from_fn(g, |x| x[0] * x[0] + 0.5 * x[1] * x[1]);
        let sub = GridField::from_fn(g, |x| 0.5 * x[0] * x[0] + 0.25 * x[1] * x[1]);
        let phi = GridField::from_fn(g, |x| x[0] * x[0] + 0.5 * x[1] * x[1] - 0.5 * x[1]);
        let patch = BoundaryPatch {
            axis: 0,
            side: Side::Low,
            center: vec![0.0, 0.5],
        };
        let k = consts();
        let m = barrier_margin(&spec, gamma, &u, &sub, &phi, &k, &patch).unwrap();
        let c = 1.0 + 2.0 * gamma;
        // L(u - ul u) = c * (1 + 0.5); L d = 0; L d^2 = 2c; L |x|^2 = 4c;
        // |D_y (u - phi)|^2 = 0.25, constant.
        let l_psi = (k.a1 * c * 1.5 - 0.5 * k.n_coef * 2.0 * c + k.a3 * 4.0 * c)
            / (k.delta * k.delta)
            - k.a2 * c * 1.5;
        let want = l_psi + k.k * (1.0 + 2.0);
        for v in &m.margin {
            assert!((v - want).abs() < 1e-8 * want.abs(), "{v} vs {want}");
        }
    }
}
