//! Uniform rectangular grids, node fields and finite-difference stencils.
//!
//! Nodes are numbered row-major with axis 0 varying slowest. The outermost
//! node layer is the Dirichlet boundary.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HessolveError, Result};
use crate::spectral::{self, SymMatrix, MAX_DIM};
use crate::symfunc::{ConeStatus, SymmetricFunctionSpec};

/// Box `[0, L_0] x ... x [0, L_{n-1}]` with `m` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    extents: [f64; MAX_DIM],
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    n: usize,
    extents: Vec<f64>,
    m: usize,
}

impl Serialize for Grid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridRepr {
            n: self.n,
            extents: self.extents().to_vec(),
            m: self.m,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = GridRepr::deserialize(d)?;
        Grid::new(r.n, &r.extents, r.m).map_err(serde::de::Error::custom)
    }
}

impl Grid {
    pub fn new(n: usize, extents: &[f64], m: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) {
            return Err(HessolveError::InvalidSpec(format!(
                "grid dimension must be 2 or 3, got {n}"
            )));
        }
        if extents.len() != n {
            return Err(HessolveError::InvalidSpec(format!(
                "expected {n} extents, got {}",
                extents.len()
            )));
        }
        if extents.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(HessolveError::InvalidSpec(format!(
                "extents must be positive and finite, got {extents:?}"
            )));
        }
        if m < 5 {
            return Err(HessolveError::InvalidSpec(format!(
                "need at least 5 nodes per axis, got {m}"
            )));
        }
        let mut e = [0.0; MAX_DIM];
        e[..n].copy_from_slice(extents);
        Ok(Self { n, extents: e, m })
    }

    pub fn unit(n: usize, m: usize) -> Result<Self> {
        Self::new(n, &vec![1.0; n], m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.n]
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / (self.m - 1) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.n)
            .map(|d| self.spacing(d))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.n - 1 - axis) as u32)
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = idx;
        for d in (0..self.n).rev() {
            out[d] = rest % self.m;
            rest /= self.m;
        }
        out
    }

    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi[..self.n].iter().fold(0, |acc, &i| acc * self.m + i)
    }

    pub fn coords(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.n {
            x[d] = mi[d] as f64 * self.spacing(d);
        }
        x
    }

    pub fn center(&self) -> [f64; MAX_DIM] {
        let mut c = [0.0; MAX_DIM];
        for d in 0..self.n {
            c[d] = 0.5 * self.extents[d];
        }
        c
    }

    /// Node layer: 0 on the boundary, 1 for the first interior layer, ...
    pub fn depth(&self, idx: usize) -> usize {
        let mi = self.multi_index(idx);
        (0..self.n)
            .map(|d| mi[d].min(self.m - 1 - mi[d]))
            .min()
            .unwrap_or(0)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.depth(idx) == 0
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary(i)).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    /// Nodes at depth `>= layer`.
    pub fn nodes_at_depth(&self, layer: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.depth(i) >= layer)
            .collect()
    }

    /// Number of boundary coordinates of a node (1 on a face, >1 on edges and corners).
    pub fn boundary_axes(&self, idx: usize) -> usize {
        let mi = self.multi_index(idx);
        (0..self.n)
            .filter(|&d| mi[d] == 0 || mi[d] == self.m - 1)
            .count()
    }
}

/// Scalar value per grid node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(HessolveError::InvalidInput(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(&grid.coords(i)[..grid.n()]))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_on(&self, nodes: &[usize]) -> f64 {
        nodes.iter().fold(0.0, |m, &i| m.max(self.values[i].abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn ensure_same_grid(&self, other: &GridField) -> Result<()> {
        if self.grid != other.grid {
            return Err(HessolveError::InvalidInput(
                "fields live on different grids".into(),
            ));
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.ensure_same_grid(other)?;
        Ok(GridField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Max-norm distance over all nodes.
    pub fn max_diff(&self, other: &GridField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: GridField = serde_json::from_str(s)?;
        GridField::new(f.grid, f.values)
    }

    /// CSV with columns `x, y[, z], value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["x", "y", "z"];
        header.truncate(self.grid.n());
        header.push("value");
        wtr.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let x = self.grid.coords(i);
            let mut rec: Vec<String> = x[..self.grid.n()].iter().map(|c| c.to_string()).collect();
            rec.push(v.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Central-difference Hessian at a strictly interior node (raw slice version).
pub(crate) fn hessian_at(grid: &Grid, values: &[f64], idx: usize) -> SymMatrix {
    let n = grid.n();
    let mut h = SymMatrix::zeros(n);
    let u0 = values[idx];
    for i in 0..n {
        let si = grid.stride(i);
        let hi = grid.spacing(i);
        h.set(
            i,
            i,
            (values[idx + si] - 2.0 * u0 + values[idx - si]) / (hi * hi),
        );
        for j in (i + 1)..n {
            let sj = grid.stride(j);
            let hj = grid.spacing(j);
            let v = (values[idx + si + sj] - values[idx + si - sj] - values[idx - si + sj]
                + values[idx - si - sj])
                / (4.0 * hi * hj);
            h.set(i, j, v);
        }
    }
    h
}

pub(crate) fn laplacian_at(grid: &Grid, values: &[f64], idx: usize) -> f64 {
    let u0 = values[idx];
    (0..grid.n())
        .map(|d| {
            let s = grid.stride(d);
            let h = grid.spacing(d);
            (values[idx + s] - 2.0 * u0 + values[idx - s]) / (h * h)
        })
        .sum()
}

fn check_interior(grid: &Grid, idx: usize) -> Result<()> {
    if idx >= grid.len() {
        return Err(HessolveError::InvalidIndex {
            index: idx,
            reason: "out of range".into(),
        });
    }
    if grid.is_boundary(idx) {
        return Err(HessolveError::InvalidIndex {
            index: idx,
            reason: "boundary node has no centred stencil".into(),
        });
    }
    Ok(())
}

/// Discrete Hessian: central second differences on the diagonal, the
/// symmetric four-point cross stencil off the diagonal.
pub fn hessian_fd(field: &GridField, node: usize) -> Result<SymMatrix> {
    check_interior(&field.grid, node)?;
    Ok(hessian_at(&field.grid, &field.values, node))
}

pub fn laplacian_fd(field: &GridField, node: usize) -> Result<f64> {
    check_interior(&field.grid, node)?;
    Ok(laplacian_at(&field.grid, &field.values, node))
}

/// Second-order gradient: central in the interior, one-sided at the boundary.
pub fn gradient_fd(field: &GridField, node: usize) -> [f64; MAX_DIM] {
    let grid = &field.grid;
    let v = &field.values;
    let mi = grid.multi_index(node);
    let mut g = [0.0; MAX_DIM];
    for d in 0..grid.n() {
        let s = grid.stride(d);
        let h = grid.spacing(d);
        g[d] = if mi[d] == 0 {
            (-3.0 * v[node] + 4.0 * v[node + s] - v[node + 2 * s]) / (2.0 * h)
        } else if mi[d] == grid.m() - 1 {
            (3.0 * v[node] - 4.0 * v[node - s] + v[node - 2 * s]) / (2.0 * h)
        } else {
            (v[node + s] - v[node - s]) / (2.0 * h)
        };
    }
    g
}

/// Hessian at a face node (not on an edge or corner): one-sided second
/// differences along the normal, centred along the face.
pub fn boundary_hessian_fd(field: &GridField, node: usize) -> Result<SymMatrix> {
    let grid = &field.grid;
    if node >= grid.len() || grid.boundary_axes(node) != 1 {
        return Err(HessolveError::InvalidIndex {
            index: node,
            reason: "not a face-interior boundary node".into(),
        });
    }
    let v = &field.values;
    let n = grid.n();
    let mi = grid.multi_index(node);
    let normal = (0..n)
        .find(|&d| mi[d] == 0 || mi[d] == grid.m() - 1)
        .unwrap_or(0);
    // Inward step along the normal axis.
    let sn = grid.stride(normal) as isize * if mi[normal] == 0 { 1 } else { -1 };
    let at = |base: usize, off: isize| v[(base as isize + off) as usize];
    let hn = grid.spacing(normal);
    // Inward one-sided first derivative; the sign is irrelevant for the
    // spectral radius but kept consistent for mixed terms.
    let sign = if mi[normal] == 0 { 1.0 } else { -1.0 };
    let dn = |base: usize| {
        sign * (-3.0 * at(base, 0) + 4.0 * at(base, sn) - at(base, 2 * sn)) / (2.0 * hn)
    };

    let mut h = SymMatrix::zeros(n);
    h.set(
        normal,
        normal,
        (2.0 * at(node, 0) - 5.0 * at(node, sn) + 4.0 * at(node, 2 * sn) - at(node, 3 * sn))
            / (hn * hn),
    );
    for t in (0..n).filter(|&d| d != normal) {
        let st = grid.stride(t);
        let ht = grid.spacing(t);
        h.set(
            t,
            t,
            (v[node + st] - 2.0 * v[node] + v[node - st]) / (ht * ht),
        );
        h.set(t, normal, (dn(node + st) - dn(node - st)) / (2.0 * ht));
        for r in (t + 1..n).filter(|&d| d != normal) {
            let sr = grid.stride(r);
            let hr = grid.spacing(r);
            h.set(
                t,
                r,
                (v[node + st + sr] - v[node + st - sr] - v[node - st + sr] + v[node - st - sr])
                    / (4.0 * ht * hr),
            );
        }
    }
    Ok(h)
}

/// `F_h[u]` at every node plus per-node cone status (`None` on the boundary).
#[derive(Clone, Debug)]
pub struct OperatorField {
    pub values: GridField,
    pub status: Vec<Option<ConeStatus>>,
}

impl OperatorField {
    pub fn outside_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| matches!(s, Some(ConeStatus::Outside)))
            .count()
    }

    pub fn closure_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| matches!(s, Some(ConeStatus::Closure)))
            .count()
    }
}

/// Applies `f(lambda(D_h^2 u + gamma Delta_h u I))` at every interior node.
/// Nodes off the closed cone (within `tol`, see
/// [`crate::symfunc::cone_status`]) are flagged and given the value 0.
pub fn apply_operator(
    spec: &SymmetricFunctionSpec,
    gamma: f64,
    u: &GridField,
    tol: f64,
) -> Result<OperatorField> {
    if spec.n() != u.grid.n() {
        return Err(HessolveError::InvalidSpec(format!(
            "operator dimension {} does not match grid dimension {}",
            spec.n(),
            u.grid.n()
        )));
    }
    let grid = u.grid;
    let evals: Vec<Result<Option<(f64, ConeStatus)>>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            if grid.is_boundary(idx) {
                return Ok(None);
            }
            let h = hessian_at(&grid, &u.values, idx);
            let ev = spectral::evaluate_node(spec, &h, gamma, tol, false)?;
            Ok(Some((ev.value, ev.status)))
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    let mut status = vec![None; grid.len()];
    for (i, e) in evals.into_iter().enumerate() {
        if let Some((v, s)) = e? {
            values[i] = v;
            status[i] = Some(s);
        }
    }
    Ok(OperatorField {
        values: GridField { grid, values },
        status,
    })
}

/// Discrete harmonic extension of the boundary values of `phi`
/// (5-point / 7-point Laplacian), by Jacobi-preconditioned conjugate gradients.
///
/// Only boundary entries of `phi` are read. The result satisfies
/// `|Delta_h h|_inf < 1e-10 (1 + |phi|_inf)` at interior nodes.
pub fn harmonic_solve(grid: &Grid, phi: &GridField) -> Result<GridField> {
    if phi.grid != *grid {
        return Err(HessolveError::InvalidInput(
            "boundary data lives on a different grid".into(),
        ));
    }
    let boundary = grid.boundary_nodes();
    if boundary.iter().any(|&i| !phi.values[i].is_finite()) {
        return Err(HessolveError::InvalidInput(
            "boundary data must be finite".into(),
        ));
    }
    let phi_max = phi.max_abs_on(&boundary);
    let target = 1e-10 * (1.0 + phi_max);

    let interior = grid.interior_nodes();
    let mut x = vec![0.0; grid.len()];
    for &i in &boundary {
        x[i] = phi.values[i];
    }
    let diag: f64 = (0..grid.n())
        .map(|d| 2.0 / (grid.spacing(d) * grid.spacing(d)))
        .sum();

    // Residual of Delta_h x = 0 at interior nodes.
    let true_residual = |x: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; grid.len()];
        for &i in &interior {
            r[i] = laplacian_at(grid, x, i);
        }
        r
    };
    // -Delta_h with homogeneous boundary values, applied to a correction.
    let apply = |p: &[f64], out: &mut [f64]| {
        for &i in &interior {
            out[i] = -laplacian_at(grid, p, i);
        }
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 { interior.iter().map(|&i| a[i] * b[i]).sum() };
    let sup = |a: &[f64]| interior.iter().fold(0.0f64, |m, &i| m.max(a[i].abs()));

    let max_iter = 20 * interior.len().max(10);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut r = true_residual(&x);
    let mut z = vec![0.0; grid.len()];
    let mut p = vec![0.0; grid.len()];
    let mut q = vec![0.0; grid.len()];
    // Outer restarts refresh the residual from the iterate.
    for _restart in 0..10 {
        let res = sup(&r);
        history.push(res);
        if res < target {
            return Ok(GridField {
                grid: *grid,
                values: x,
            });
        }
        for &i in &interior {
            z[i] = r[i] / diag;
            p[i] = z[i];
        }
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                break;
            }
            let alpha = rz / pq;
            for &i in &interior {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            if sup(&r) < 0.25 * target {
                break;
            }
            for &i in &interior {
                z[i] = r[i] / diag;
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for &i in &interior {
                p[i] = z[i] + beta * p[i];
            }
        }
        r = true_residual(&x);
        if iterations >= max_iter {
            break;
        }
    }
    let res = sup(&r);
    history.push(res);
    if res < target {
        return Ok(GridField {
            grid: *grid,
            values: x,
        });
    }
    Err(HessolveError::NonConvergence {
        context: "harmonic_solve".into(),
        iterations,
        residual: res,
        history,
        best: Some(Box::new(GridField {
            grid: *grid,
            values: x,
        })),
    })
}

/// Node selection for second-difference statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    /// Interior nodes at least `margin` layers from the boundary (`margin >= 1`).
    Interior(usize),
    /// Every interior node.
    All,
    /// Interior nodes inside the closed coordinate box `[lo, hi]`.
    Box {
        lo: [f64; MAX_DIM],
        hi: [f64; MAX_DIM],
    },
}

impl Region {
    pub fn nodes(&self, grid: &Grid) -> Result<Vec<usize>> {
        let nodes: Vec<usize> = match *self {
            Region::Interior(0) => {
                return Err(HessolveError::InvalidInput(
                    "interior margin must be at least one node layer".into(),
                ))
            }
            Region::Interior(margin) => grid.nodes_at_depth(margin),
            Region::All => grid.interior_nodes(),
            Region::Box { lo, hi } => grid
                .interior_nodes()
                .into_iter()
                .filter(|&i| {
                    let x = grid.coords(i);
                    (0..grid.n()).all(|d| x[d] >= lo[d] - 1e-12 && x[d] <= hi[d] + 1e-12)
                })
                .collect(),
        };
        if nodes.is_empty() {
            return Err(HessolveError::InvalidIndex {
                index: 0,
                reason: format!("region {self:?} contains no interior nodes"),
            });
        }
        Ok(nodes)
    }
}

/// Max over the region of the spectral radius of the discrete Hessian.
pub fn max_second_difference(u: &GridField, region: Region) -> Result<f64> {
    let nodes = region.nodes(&u.grid)?;
    let mut best = 0.0f64;
    for i in nodes {
        let h = hessian_at(&u.grid, &u.values, i);
        best = best.max(spectral::eigen_sym(&h)?.spectral_radius());
    }
    Ok(best)
}

/// Max spectral radius of [`boundary_hessian_fd`] over face-interior nodes.
pub fn max_boundary_second_difference(u: &GridField) -> Result<f64> {
    let grid = &u.grid;
    let mut best = 0.0f64;
    for i in (0..grid.len()).filter(|&i| grid.boundary_axes(i) == 1) {
        let h = boundary_hessian_fd(u, i)?;
        best = best.max(spectral::eigen_sym(&h)?.spectral_radius());
    }
    Ok(best)
}

/// Max gradient magnitude over all nodes.
pub fn max_gradient(u: &GridField) -> f64 {
    let n = u.grid.n();
    (0..u.grid.len())
        .map(|i| {
            let g = gradient_fd(u, i);
            g[..n].iter().map(|c| c * c).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid2(m: usize) -> Grid {
        Grid::unit(2, m).unwrap()
    }

    #[test]
    fn grid_validation_and_indexing() {
        assert!(Grid::new(2, &[1.0, 1.0], 4).is_err());
        assert!(Grid::new(4, &[1.0; 4], 9).is_err());
        assert!(Grid::new(2, &[1.0], 9).is_err());
        assert!(Grid::new(2, &[1.0, -1.0], 9).is_err());
        let g = Grid::new(3, &[1.0, 2.0, 3.0], 5).unwrap();
        assert_eq!(g.len(), 125);
        for idx in [0, 7, 62, 124] {
            assert_eq!(g.index_of(&g.multi_index(idx)), idx);
        }
        assert_eq!(g.coords(124), [1.0, 2.0, 3.0]);
        assert_eq!(g.interior_nodes().len(), 27);
        assert_eq!(g.stride(0), 25);
    }

    #[test]
    fn hessian_exact_on_quadratics() {
        let g = grid2(9);
        let u = GridField::from_fn(g, |x| x[0] * x[0]);
        let h = hessian_fd(&u, g.index_of(&[3, 4])).unwrap();
        assert_relative_eq!(h.get(0, 0), 2.0, epsilon = 1e-11);
        assert_relative_eq!(h.get(0, 1), 0.0, epsilon = 1e-11);
        let u = GridField::from_fn(g, |x| x[0] * x[1]);
        let h = hessian_fd(&u, g.index_of(&[1, 1])).unwrap();
        assert_relative_eq!(h.get(0, 1), 1.0, epsilon = 1e-11);
        assert!(matches!(
            hessian_fd(&u, 0),
            Err(HessolveError::InvalidIndex { .. })
        ));
    }

    #[test]
    fn hessian_taylor_bound_on_sine() {
        let g = grid2(33);
        let h = g.spacing(0);
        let u = GridField::from_fn(g, |x| x[0].sin());
        for idx in g.interior_nodes() {
            let x = g.coords(idx)[0];
            let err = (hessian_fd(&u, idx).unwrap().get(0, 0) + x.sin()).abs();
            assert!(err <= h * h / 12.0 + 1e-12);
        }
    }

    #[test]
    fn harmonic_examples() {
        let g = grid2(17);
        let c = GridField::from_fn(g, |_| 3.5);
        let h = harmonic_solve(&g, &c).unwrap();
        assert!(h.max_diff(&c).unwrap() < 1e-12);

        let affine = GridField::from_fn(g, |x| 1.0 + 2.0 * x[0] - 0.5 * x[1]);
        let mut data = affine.clone();
        for i in g.interior_nodes() {
            data.values[i] = 123.0;
        }
        let h = harmonic_solve(&g, &data).unwrap();
        assert!(h.max_diff(&affine).unwrap() < 1e-11);

        let saddle = GridField::from_fn(g, |x| x[0] * x[0] - x[1] * x[1]);
        let h = harmonic_solve(&g, &saddle).unwrap();
        assert!(h.max_diff(&saddle).unwrap() < 1e-11);
    }

    #[test]
    fn harmonic_rejects_non_finite_data() {
        let g = grid2(9);
        let mut phi = GridField::zeros(g);
        phi.values[0] = f64::NAN;
        assert!(harmonic_solve(&g, &phi).is_err());
    }

    #[test]
    fn max_second_difference_examples() {
        let g = grid2(33);
        let u = GridField::from_fn(g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        assert_relative_eq!(
            max_second_difference(&u, Region::All).unwrap(),
            1.0,
            epsilon = 1e-9
        );
        let a = GridField::from_fn(g, |x| 2.0 - x[0] + 3.0 * x[1]);
        assert!(max_second_difference(&a, Region::Interior(4)).unwrap() < 1e-9);

        let g = grid2(101);
        let u = GridField::from_fn(g, |x| x[0].powi(4));
        let region = Region::Box {
            lo: [0.0; 3],
            hi: [0.9, 1.0, 0.0],
        };
        let v = max_second_difference(&u, region).unwrap();
        let h = g.spacing(0);
        // u_xx = 12 x^2 at x = 0.9 plus the stencil's O(h^2) term 2 h^2 (u'''' / 12 * h^2).
        assert!((v - 12.0 * 0.81).abs() <= 2.0 * h * h + 1e-9, "{v}");
        assert!(max_second_difference(&u, Region::Interior(0)).is_err());
        assert!(max_second_difference(&u, Region::Interior(60)).is_err());
    }

    #[test]
    fn boundary_hessian_exact_on_quadratics() {
        let g = grid2(9);
        let u = GridField::from_fn(g, |x| 0.5 * x[0] * x[0] + 2.0 * x[0] * x[1] - x[1] * x[1]);
        for idx in (0..g.len()).filter(|&i| g.boundary_axes(i) == 1) {
            let h = boundary_hessian_fd(&u, idx).unwrap();
            assert_relative_eq!(h.get(0, 0), 1.0, epsilon = 1e-9);
            assert_relative_eq!(h.get(1, 1), -2.0, epsilon = 1e-9);
            assert_relative_eq!(h.get(0, 1).abs(), 2.0, epsilon = 1e-9);
        }
        assert!(boundary_hessian_fd(&u, 0).is_err());
    }

    #[test]
    fn apply_operator_examples() {
        let g = grid2(9);
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let u = GridField::from_fn(g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let op = apply_operator(&ma, 0.0, &u, 1e-10).unwrap();
        for i in g.interior_nodes() {
            assert_relative_eq!(op.values.values[i], 1.0, epsilon = 1e-10);
        }
        let op = apply_operator(&ma, 0.5, &u, 1e-10).unwrap();
        for i in g.interior_nodes() {
            assert_relative_eq!(op.values.values[i], 2.0, epsilon = 1e-10);
        }
        let a = GridField::from_fn(g, |x| 1.0 + x[0] - x[1]);
        let op = apply_operator(&ma, 0.0, &a, 1e-8).unwrap();
        assert_eq!(op.closure_count(), g.interior_nodes().len());
        assert!(op.values.max_abs() < 1e-6);
    }

    #[test]
    fn field_io_is_stable() {
        let g = Grid::new(2, &[1.0, 0.5], 5).unwrap();
        let u = GridField::from_fn(g, |x| x[0].exp() * x[1]);
        let js = u.to_json().unwrap();
        let back = GridField::from_json(&js).unwrap();
        assert_eq!(back, u);
        assert_eq!(back.to_json().unwrap(), js);
        let mut a = Vec::new();
        u.write_csv(&mut a).unwrap();
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("x,y,value\n"));
        assert_eq!(text.lines().count(), 26);
    }
}
