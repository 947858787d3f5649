//! Small symmetric matrices, their eigen-decomposition, and the linearised
//! operator coefficients `F^{ij} + gamma * (sum_k F^{kk}) * delta_ij`.

use crate::error::{HessolveError, Result};
use crate::symfunc::{self, Lambda, SymmetricFunctionSpec};

pub const MAX_DIM: usize = 3;

const fn packed(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * MAX_DIM + j - i * (i + 1) / 2
}

/// Symmetric `n x n` matrix (`n <= 3`), upper triangle stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    upper: [f64; 6],
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "SymMatrix supports 1 <= n <= 3");
        Self { n, upper: [0.0; 6] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, s);
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from full rows; fails unless the rows are exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n > MAX_DIM || rows.iter().any(|r| r.len() != n) {
            return Err(HessolveError::InvalidInput(format!(
                "expected a square matrix of size 1..=3, got {n} rows"
            )));
        }
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                if rows[i][j] != rows[j][i] {
                    return Err(HessolveError::InvalidInput(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
                m.set(i, j, rows[i][j]);
            }
        }
        Ok(m)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[packed(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[packed(i, j)] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| s * self.get(i, j))
    }

    /// Frobenius inner product `sum_ij A_ij B_ij`.
    pub fn contract(&self, other: &SymMatrix) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn frobenius(&self) -> f64 {
        self.contract(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        (0..self.n).all(|i| (i..self.n).all(|j| self.get(i, j).is_finite()))
    }

    /// `R A R^T` for a square `R` given as rows.
    pub fn congruence(&self, r: &[Vec<f64>]) -> SymMatrix {
        let n = self.n;
        SymMatrix::from_fn(n, |i, j| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += r[i][a] * self.get(a, b) * r[j][b];
                }
            }
            s
        })
    }
}

/// Ascending eigenvalues and orthonormal eigenvectors (columns of `q`).
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomp {
    pub values: Lambda,
    q: [[f64; MAX_DIM]; MAX_DIM],
    n: usize,
}

impl EigenDecomp {
    /// Component `row` of eigenvector `col`.
    #[inline]
    pub fn q(&self, row: usize, col: usize) -> f64 {
        self.q[row][col]
    }

    pub fn vector(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.q[r][col]).collect()
    }

    /// `Q diag(d) Q^T`.
    pub fn compose(&self, d: &[f64]) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| {
            (0..self.n)
                .map(|c| self.q[i][c] * d[c] * self.q[j][c])
                .sum()
        })
    }

    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Rotation `(c, s)` annihilating the `(p, q)` entry of a symmetric matrix
/// with diagonal `app`, `aqq` and off-diagonal `apq`.
fn jacobi_rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64) {
    if apq == 0.0 {
        return (1.0, 0.0);
    }
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / t.hypot(1.0);
    (c, t * c)
}

/// Cyclic Jacobi eigen-decomposition. For `n = 2` a single rotation is exact.
pub fn eigen_sym(a: &SymMatrix) -> Result<EigenDecomp> {
    if !a.is_finite() {
        return Err(HessolveError::InvalidInput(
            "matrix has non-finite entries".into(),
        ));
    }
    let n = a.n;
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in m.iter_mut().enumerate().take(n) {
        for (j, v) in row.iter_mut().enumerate().take(n) {
            *v = a.get(i, j);
        }
    }
    let mut q = [[0.0; MAX_DIM]; MAX_DIM];
    for (i, row) in q.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    let scale = a.frobenius();
    let off = |m: &[[f64; MAX_DIM]; MAX_DIM]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[i][j] * m[i][j];
            }
        }
        s.sqrt()
    };

    let max_sweeps = if n == 2 { 1 } else { 64 };
    for _ in 0..max_sweeps {
        if off(&m) <= 1e-14 * scale && n > 2 {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let (c, s) = jacobi_rotation(m[p][p], m[r][r], m[p][r]);
                if s == 0.0 {
                    continue;
                }
                // m <- J^T m J with J the (p, r) rotation.
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkr = m[k][r];
                    m[k][p] = c * mkp - s * mkr;
                    m[k][r] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mrk = m[r][k];
                    m[p][k] = c * mpk - s * mrk;
                    m[r][k] = s * mpk + c * mrk;
                }
                m[p][r] = 0.0;
                m[r][p] = 0.0;
                for row in q.iter_mut().take(n) {
                    let qp = row[p];
                    let qr = row[r];
                    row[p] = c * qp - s * qr;
                    row[r] = s * qp + c * qr;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let mut sorted = [[0.0; MAX_DIM]; MAX_DIM];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            sorted[row][col] = q[row][src];
        }
    }
    Ok(EigenDecomp {
        values: Lambda(values),
        q: sorted,
        n,
    })
}

/// `H + gamma * tr(H) * I`.
pub fn gamma_shift(h: &SymMatrix, gamma: f64) -> Result<SymMatrix> {
    if !(gamma >= 0.0) {
        return Err(HessolveError::InvalidSpec(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    let shift = gamma * h.trace();
    let mut u = *h;
    for i in 0..h.n {
        u.set(i, i, h.get(i, i) + shift);
    }
    Ok(u)
}

/// `{F^{ij}} = Q diag(f_i(lambda)) Q^T` at `U`.
pub fn f_matrix(spec: &SymmetricFunctionSpec, u: &SymMatrix) -> Result<SymMatrix> {
    let eig = eigen_sym(u)?;
    let grad = symfunc::f_grad(spec, &eig.values)?;
    Ok(eig.compose(&grad))
}

/// Derivative of `f(lambda(H + gamma tr(H) I))` with respect to `H_ij`:
/// `F^{ij} + gamma * (sum_k F^{kk}) * delta_ij`, evaluated at the shifted matrix.
pub fn linearization(spec: &SymmetricFunctionSpec, h: &SymMatrix, gamma: f64) -> Result<SymMatrix> {
    let u = gamma_shift(h, gamma)?;
    let f = f_matrix(spec, &u)?;
    Ok(add_trace_term(&f, gamma))
}

fn add_trace_term(f: &SymMatrix, gamma: f64) -> SymMatrix {
    let extra = gamma * f.trace();
    let mut a = *f;
    for i in 0..f.n {
        a.set(i, i, f.get(i, i) + extra);
    }
    a
}

/// Everything the solver needs at one node, from a single eigen-decomposition.
#[derive(Clone, Debug)]
pub struct NodeEvaluation {
    /// `f(lambda(U))` with the closure extension (0 off the open cone).
    pub value: f64,
    pub status: symfunc::ConeStatus,
    pub lambda: Lambda,
    /// Linearised coefficients; on the cone boundary taken from
    /// [`symfunc::f_grad_closure`]. `None` off the closed cone.
    pub coefficients: Option<SymMatrix>,
    /// `sum_i f_i` used for the coefficients.
    pub f_sum: f64,
}

/// Evaluates `f` and its linearisation at the Hessian `h`, with closure
/// tolerance `tol` (see [`symfunc::cone_status`]).
pub fn evaluate_node(
    spec: &SymmetricFunctionSpec,
    h: &SymMatrix,
    gamma: f64,
    tol: f64,
    with_coefficients: bool,
) -> Result<NodeEvaluation> {
    let u = gamma_shift(h, gamma)?;
    let eig = eigen_sym(&u)?;
    let (value, status) = symfunc::f_eval_closure(spec, &eig.values, tol);
    let (coefficients, f_sum) = if with_coefficients && status.admissible() {
        let grad = symfunc::f_grad_closure(spec, &eig.values, tol.max(1e-300))?;
        let f = eig.compose(&grad);
        (Some(add_trace_term(&f, gamma)), grad.iter().sum())
    } else {
        (None, 0.0)
    };
    Ok(NodeEvaluation {
        value,
        status,
        lambda: eig.values,
        coefficients,
        f_sum,
    })
}

/// Ascending eigenvalues only.
pub fn eigenvalues(a: &SymMatrix) -> Result<Lambda> {
    eigen_sym(a).map(|e| e.values)
}
