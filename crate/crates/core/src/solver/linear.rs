//! Assembly and direct solution of the linearised operator
//! `L v = sum_ij a_ij (D_h^2 v)_ij` with homogeneous Dirichlet data.

use crate::discretize::{Grid, GridField};
use crate::error::{HessolveError, Result};
use crate::spectral::SymMatrix;

/// Compressed sparse row matrix over the interior unknowns.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// Largest `|col - row|` over stored entries, split into (below, above).
    fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }
}

/// Interior nodes numbered consecutively (same order as the grid).
#[derive(Clone, Debug)]
pub struct InteriorMap {
    pub nodes: Vec<usize>,
    pub compact: Vec<Option<usize>>,
}

impl InteriorMap {
    pub fn new(grid: &Grid) -> Self {
        let nodes = grid.interior_nodes();
        let mut compact = vec![None; grid.len()];
        for (k, &i) in nodes.iter().enumerate() {
            compact[i] = Some(k);
        }
        Self { nodes, compact }
    }
}

/// Builds the matrix of `L` on interior unknowns; `coeffs` is indexed by node
/// and read at interior nodes only.
pub fn assemble(grid: &Grid, coeffs: &[SymMatrix], map: &InteriorMap) -> Result<SparseMatrix> {
    if coeffs.len() != grid.len() {
        return Err(HessolveError::InvalidInput(format!(
            "expected {} coefficient matrices, got {}",
            grid.len(),
            coeffs.len()
        )));
    }
    let n = grid.n();
    let mut row_ptr = Vec::with_capacity(map.nodes.len() + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(27);
    for &node in &map.nodes {
        let a = &coeffs[node];
        if a.n() != n || !a.is_finite() {
            return Err(HessolveError::InvalidInput(format!(
                "coefficients at node {node} are malformed"
            )));
        }
        row.clear();
        let mut push = |offset: isize, w: f64| {
            let j = (node as isize + offset) as usize;
            if let Some(c) = map.compact[j] {
                row.push((c, w));
            }
        };
        let mut centre = 0.0;
        for i in 0..n {
            let si = grid.stride(i) as isize;
            let hi = grid.spacing(i);
            let w = a.get(i, i) / (hi * hi);
            centre -= 2.0 * w;
            push(si, w);
            push(-si, w);
            for j in (i + 1)..n {
                let sj = grid.stride(j) as isize;
                let w = 2.0 * a.get(i, j) / (4.0 * hi * grid.spacing(j));
                push(si + sj, w);
                push(-si - sj, w);
                push(si - sj, -w);
                push(-si + sj, -w);
            }
        }
        push(0, centre);
        row.sort_by_key(|&(c, _)| c);
        for &(c, w) in row.iter() {
            cols.push(c);
            vals.push(w);
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseMatrix {
        dim: map.nodes.len(),
        row_ptr,
        cols,
        vals,
    })
}

/// Banded LU factorisation with partial pivoting. Row `r` stores columns
/// `r - kl .. r + kl + ku`, wide enough for the fill created by row swaps.
pub struct BandedLu {
    dim: usize,
    kl: usize,
    ku: usize,
    width: usize,
    rows: Vec<f64>,
    mult: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let dim = a.dim;
        let (kl, ku) = a.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            dim,
            kl,
            ku,
            width,
            rows: vec![0.0; dim * width],
            mult: vec![0.0; dim * kl.max(1)],
            piv: vec![0; dim],
        };
        for r in 0..dim {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let slot = lu.slot(r, a.cols[k]);
                lu.rows[slot] += a.vals[k];
            }
        }
        for k in 0..dim {
            let last_row = (k + kl).min(dim - 1);
            let last_col = (k + kl + ku).min(dim - 1);
            let mut p = k;
            let mut best = lu.rows[lu.slot(k, k)].abs();
            for r in (k + 1)..=last_row {
                let v = lu.rows[lu.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(HessolveError::NonConvergence {
                    context: "linear_solve: singular operator".into(),
                    iterations: k,
                    residual: f64::INFINITY,
                    history: Vec::new(),
                    best: None,
                });
            }
            lu.piv[k] = p;
            if p != k {
                for c in k..=last_col {
                    let (sa, sb) = (lu.slot(k, c), lu.slot(p, c));
                    lu.rows.swap(sa, sb);
                }
            }
            let pivot = lu.rows[lu.slot(k, k)];
            for r in (k + 1)..=last_row {
                let srk = lu.slot(r, k);
                let l = lu.rows[srk] / pivot;
                lu.rows[srk] = 0.0;
                lu.mult[k * kl.max(1) + (r - k - 1)] = l;
                if l != 0.0 {
                    let base_k = lu.slot(k, k);
                    let base_r = srk;
                    for off in 1..=(last_col - k) {
                        lu.rows[base_r + off] -= l * lu.rows[base_k + off];
                    }
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        r * self.width + (c + self.kl - r)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        let kl = self.kl;
        for k in 0..self.dim {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != 0.0 {
                let last = (k + kl).min(self.dim - 1);
                for r in (k + 1)..=last {
                    x[r] -= self.mult[k * kl.max(1) + (r - k - 1)] * xk;
                }
            }
        }
        for k in (0..self.dim).rev() {
            let last = (k + kl + self.ku).min(self.dim - 1);
            let base = self.slot(k, k);
            let mut s = x[k];
            for off in 1..=(last - k) {
                s -= self.rows[base + off] * x[k + off];
            }
            x[k] = s / self.rows[base];
        }
        x
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `L delta = rhs` at interior nodes with `delta = 0` on the boundary,
/// to relative residual `1e-10` in the max norm.
pub fn linear_solve(coeffs: &[SymMatrix], rhs: &GridField) -> Result<GridField> {
    let grid = rhs.grid;
    let map = InteriorMap::new(&grid);
    let a = assemble(&grid, coeffs, &map)?;
    solve_assembled(&grid, &map, &a, rhs)
}

pub(crate) fn solve_assembled(
    grid: &Grid,
    map: &InteriorMap,
    a: &SparseMatrix,
    rhs: &GridField,
) -> Result<GridField> {
    let b: Vec<f64> = map.nodes.iter().map(|&i| rhs.values[i]).collect();
    if b.iter().any(|v| !v.is_finite()) {
        return Err(HessolveError::InvalidInput(
            "right-hand side must be finite".into(),
        ));
    }
    let bnorm = sup(&b);
    let mut out = GridField::zeros(*grid);
    if bnorm == 0.0 {
        return Ok(out);
    }
    let lu = BandedLu::factor(a)?;
    let mut x = lu.solve(&b);
    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = a.mul_vec(x);
        b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut r = residual(&x);
    let mut history = vec![sup(&r) / bnorm];
    // Iterative refinement against the unfactored matrix.
    for _ in 0..4 {
        if *history.last().unwrap() < 1e-14 {
            break;
        }
        let d = lu.solve(&r);
        let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let rt = residual(&trial);
        let rel = sup(&rt) / bnorm;
        if rel >= *history.last().unwrap() {
            break;
        }
        x = trial;
        r = rt;
        history.push(rel);
    }
    let rel = *history.last().unwrap();
    if !(rel < 1e-10) {
        return Err(HessolveError::NonConvergence {
            context: "linear_solve".into(),
            iterations: history.len(),
            residual: rel,
            history,
            best: None,
        });
    }
    for (k, &i) in map.nodes.iter().enumerate() {
        out.values[i] = x[k];
    }
    Ok(out)
}
