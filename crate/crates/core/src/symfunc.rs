//! Elementary symmetric functions, the operator family `f`, Garding cones and
//! the cone-geometric quantities built on top of them.
//!
//! Two families are supported, both concave, symmetric, increasing in every
//! argument on the cone `Gamma_k = { sigma_j > 0, j = 1..k }` and homogeneous
//! of degree one:
//!
//! * `SigmaRoot(k)`: `f = sigma_k^(1/k)`
//! * `Quotient(k, l)`: `f = (sigma_k / sigma_l)^(1/(k - l))`

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{HessolveError, Result};

/// Relative scale of the closure tolerance used by [`f_eval`].
pub const CLOSURE_REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionKind {
    SigmaRoot { k: usize },
    Quotient { k: usize, l: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetricFunctionSpec {
    kind: FunctionKind,
    n: usize,
}

impl SymmetricFunctionSpec {
    pub fn new(kind: FunctionKind, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(HessolveError::InvalidSpec(format!(
                "dimension must be at least 2, got {n}"
            )));
        }
        match kind {
            FunctionKind::SigmaRoot { k } if k == 0 || k > n => Err(HessolveError::InvalidSpec(
                format!("SigmaRoot requires 1 <= k <= n, got k = {k}, n = {n}"),
            )),
            FunctionKind::Quotient { k, l } if l == 0 || l >= k || k > n => {
                Err(HessolveError::InvalidSpec(format!(
                    "Quotient requires 1 <= l < k <= n, got k = {k}, l = {l}, n = {n}"
                )))
            }
            _ => Ok(Self { kind, n }),
        }
    }

    pub fn sigma_root(k: usize, n: usize) -> Result<Self> {
        Self::new(FunctionKind::SigmaRoot { k }, n)
    }

    pub fn quotient(k: usize, l: usize, n: usize) -> Result<Self> {
        Self::new(FunctionKind::Quotient { k, l }, n)
    }

    /// Monge-Ampere operator `det^(1/n)`.
    pub fn monge_ampere(n: usize) -> Result<Self> {
        Self::sigma_root(n, n)
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Order `k` of the cone `Gamma_k` on which `f` lives.
    pub fn cone_order(&self) -> usize {
        match self.kind {
            FunctionKind::SigmaRoot { k } | FunctionKind::Quotient { k, .. } => k,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            FunctionKind::SigmaRoot { k } => format!("sigma_{k}^(1/{k}), n = {}", self.n),
            FunctionKind::Quotient { k, l } => {
                format!("(sigma_{k}/sigma_{l})^(1/{}), n = {}", k - l, self.n)
            }
        }
    }

    fn check_len(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.n {
            return Err(HessolveError::InvalidSpec(format!(
                "eigenvalue tuple has length {}, expected {}",
                lambda.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// An eigenvalue tuple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lambda(pub Vec<f64>);

impl Lambda {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Lambda {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Lambda {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Lambda {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `sigma_0 ..= sigma_kmax` of `lambda`, skipping index `skip` if given.
///
/// Uses the prefix-polynomial recurrence `e_j <- e_j + x * e_{j-1}`, i.e. the
/// coefficients of `prod (1 + x_i t)`.
fn elementary_into(lambda: &[f64], skip: Option<usize>, out: &mut [f64]) {
    let kmax = out.len() - 1;
    out.fill(0.0);
    out[0] = 1.0;
    let mut seen = 0usize;
    for (i, &x) in lambda.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        seen += 1;
        for j in (1..=seen.min(kmax)).rev() {
            out[j] += x * out[j - 1];
        }
    }
}

/// All elementary symmetric functions `sigma_0 ..= sigma_kmax`.
pub fn elementary(lambda: &[f64], kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    elementary_into(lambda, None, &mut out);
    out
}

/// `sigma_j` of `lambda` with entry `i` removed, for `j = 0..=kmax`.
pub fn elementary_omitting(lambda: &[f64], i: usize, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    elementary_into(lambda, Some(i), &mut out);
    out
}

pub fn sigma_k(lambda: &[f64], k: usize) -> Result<f64> {
    if k > lambda.len() {
        return Err(HessolveError::InvalidSpec(format!(
            "sigma_{k} undefined for a tuple of length {}",
            lambda.len()
        )));
    }
    Ok(elementary(lambda, k)[k])
}

/// `true` iff `sigma_j(lambda) > tol` for every `j <= k`.
pub fn in_cone(lambda: &[f64], k: usize, tol: f64) -> Result<bool> {
    if k == 0 || k > lambda.len() {
        return Err(HessolveError::InvalidSpec(format!(
            "cone order k = {k} out of range for n = {}",
            lambda.len()
        )));
    }
    let sig = elementary(lambda, k);
    Ok(sig[1..].iter().all(|&s| s > tol))
}

/// Position of an eigenvalue tuple relative to `Gamma_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeStatus {
    Open,
    Closure,
    Outside,
}

impl ConeStatus {
    pub fn admissible(self) -> bool {
        !matches!(self, ConeStatus::Outside)
    }
}

fn classify(sig: &[f64], k: usize, tol_j: impl Fn(usize) -> f64) -> ConeStatus {
    if sig[1..=k].iter().all(|&s| s > 0.0) {
        ConeStatus::Open
    } else if (1..=k).all(|j| sig[j] >= -tol_j(j)) {
        ConeStatus::Closure
    } else {
        ConeStatus::Outside
    }
}

fn sup_norm(lambda: &[f64]) -> f64 {
    lambda.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Closure classification with tolerance `tol` in eigenvalue units: `sigma_j`
/// may dip to `-tol * (1 + |lambda|_inf)^(j-1)`.
pub fn cone_status(lambda: &[f64], k: usize, tol: f64) -> Result<ConeStatus> {
    if k == 0 || k > lambda.len() {
        return Err(HessolveError::InvalidSpec(format!(
            "cone order k = {k} out of range for n = {}",
            lambda.len()
        )));
    }
    let sig = elementary(lambda, k);
    let scale = 1.0 + sup_norm(lambda);
    Ok(classify(&sig, k, |j| tol * scale.powi(j as i32 - 1)))
}

fn value_open(spec: &SymmetricFunctionSpec, sig: &[f64]) -> f64 {
    match spec.kind {
        FunctionKind::SigmaRoot { k: 1 } => sig[1],
        FunctionKind::SigmaRoot { k: 2 } => sig[2].sqrt(),
        FunctionKind::SigmaRoot { k } => sig[k].powf(1.0 / k as f64),
        FunctionKind::Quotient { k, l } if k - l == 1 => sig[k] / sig[l],
        FunctionKind::Quotient { k, l } => (sig[k] / sig[l]).powf(1.0 / (k - l) as f64),
    }
}

/// Evaluates `f(lambda)`; on the boundary of the cone (within
/// `1e-12 * (1 + |lambda|^k)`) the continuous extension `f = 0` is returned.
pub fn f_eval(spec: &SymmetricFunctionSpec, lambda: &[f64]) -> Result<f64> {
    spec.check_len(lambda)?;
    let k = spec.cone_order();
    let sig = elementary(lambda, k);
    let norm = lambda.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = CLOSURE_REL_TOL * (1.0 + norm.powi(k as i32));
    match classify(&sig, k, |_| tol) {
        ConeStatus::Open => Ok(value_open(spec, &sig)),
        ConeStatus::Closure => Ok(0.0),
        ConeStatus::Outside => Err(HessolveError::NotInCone {
            lambda: lambda.to_vec(),
            k,
        }),
    }
}

/// Like [`f_eval`] but with the solver's closure tolerance (see
/// [`cone_status`]); never fails, returning `(0, Outside)` off the cone.
pub fn f_eval_closure(spec: &SymmetricFunctionSpec, lambda: &[f64], tol: f64) -> (f64, ConeStatus) {
    let k = spec.cone_order();
    let sig = elementary(lambda, k);
    let scale = 1.0 + sup_norm(lambda);
    match classify(&sig, k, |j| tol * scale.powi(j as i32 - 1)) {
        ConeStatus::Open => (value_open(spec, &sig), ConeStatus::Open),
        status => (0.0, status),
    }
}

fn grad_open(spec: &SymmetricFunctionSpec, lambda: &[f64], sig: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    match spec.kind {
        FunctionKind::SigmaRoot { k: 1 } => vec![1.0; n],
        FunctionKind::SigmaRoot { k } => {
            // f_i = f * sigma_{k-1;i} / (k sigma_k)
            let f = value_open(spec, sig);
            let c = f / (k as f64 * sig[k]);
            (0..n)
                .map(|i| c * elementary_omitting(lambda, i, k - 1)[k - 1])
                .collect()
        }
        FunctionKind::Quotient { k, l } => {
            let f = value_open(spec, sig);
            let c = f / (k - l) as f64;
            (0..n)
                .map(|i| {
                    let omit = elementary_omitting(lambda, i, k - 1);
                    c * (omit[k - 1] / sig[k] - omit[l - 1] / sig[l])
                })
                .collect()
        }
    }
}

/// Gradient `f_i = df/dlambda_i`; requires the open cone.
pub fn f_grad(spec: &SymmetricFunctionSpec, lambda: &[f64]) -> Result<Lambda> {
    spec.check_len(lambda)?;
    let k = spec.cone_order();
    let sig = elementary(lambda, k);
    if !sig[1..=k].iter().all(|&s| s > 0.0) {
        return Err(HessolveError::NotInCone {
            lambda: lambda.to_vec(),
            k,
        });
    }
    Ok(Lambda(grad_open(spec, lambda, &sig)))
}

/// Gradient at a point of the closed cone, taken along the diagonal
/// `lambda + s * 1` with the smallest `s = shift * 2^j` that enters the open
/// cone. Agrees with [`f_grad`] on the open cone. At the vertex this yields the
/// degree-zero-homogeneous limit `f_grad(1)`.
pub fn f_grad_closure(spec: &SymmetricFunctionSpec, lambda: &[f64], shift: f64) -> Result<Lambda> {
    spec.check_len(lambda)?;
    let k = spec.cone_order();
    let sig = elementary(lambda, k);
    if sig[1..=k].iter().all(|&s| s > 0.0) {
        return Ok(Lambda(grad_open(spec, lambda, &sig)));
    }
    let mut s = shift.max(f64::MIN_POSITIVE);
    let mut shifted = lambda.to_vec();
    for _ in 0..2100 {
        for (dst, src) in shifted.iter_mut().zip(lambda) {
            *dst = src + s;
        }
        let sig = elementary(&shifted, k);
        if sig[1..=k].iter().all(|&v| v > 0.0) {
            return Ok(Lambda(grad_open(spec, &shifted, &sig)));
        }
        s *= 2.0;
    }
    Err(HessolveError::NotInCone {
        lambda: lambda.to_vec(),
        k,
    })
}

fn normalize(mut g: Lambda) -> Lambda {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    g.iter_mut().for_each(|x| *x /= norm);
    g
}

/// Unit normal `Df / |Df|` to the level set of `f` through `lambda`.
pub fn normal_vector(spec: &SymmetricFunctionSpec, lambda: &[f64]) -> Result<Lambda> {
    f_grad(spec, lambda).map(normalize)
}

/// Largest `beta` with `nu - 2 beta 1` in the positive orthant, capped at
/// `1 / (2 sqrt(n))`.
pub fn beta_of(nu: &[f64]) -> Result<f64> {
    if nu.is_empty() {
        return Err(HessolveError::InvalidSpec("empty normal vector".into()));
    }
    let min = nu.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(HessolveError::InvalidSpec(format!(
            "normal vector must have positive components, got {nu:?}"
        )));
    }
    let cap = 0.5 / (nu.len() as f64).sqrt();
    Ok((0.5 * min).min(cap))
}

/// Quantities entering the normal-gap lemma at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct C10Gap {
    /// `|nu_mu - nu_lambda| >= beta(nu_mu)`.
    pub hypothesis_active: bool,
    /// `sum f_i(lambda) (mu_i - lambda_i)`.
    pub lhs: f64,
    /// `sum f_i(lambda)`.
    pub f_sum: f64,
}

impl C10Gap {
    /// Empirical `theta = lhs / (1 + sum f_i)`.
    pub fn theta(&self) -> f64 {
        self.lhs / (1.0 + self.f_sum)
    }
}

pub fn c10_gap(spec: &SymmetricFunctionSpec, mu: &[f64], lambda: &[f64]) -> Result<C10Gap> {
    let grad_mu = f_grad(spec, mu)?;
    let grad_lambda = f_grad(spec, lambda)?;
    Ok(gap_from_grads(mu, lambda, grad_mu, grad_lambda))
}

/// [`c10_gap`] for a `lambda` that may sit on the cone boundary, using
/// [`f_grad_closure`] there.
pub fn c10_gap_closure(
    spec: &SymmetricFunctionSpec,
    mu: &[f64],
    lambda: &[f64],
    shift: f64,
) -> Result<C10Gap> {
    let grad_mu = f_grad(spec, mu)?;
    let grad_lambda = f_grad_closure(spec, lambda, shift)?;
    Ok(gap_from_grads(mu, lambda, grad_mu, grad_lambda))
}

fn gap_from_grads(mu: &[f64], lambda: &[f64], grad_mu: Lambda, grad_lambda: Lambda) -> C10Gap {
    let lhs = grad_lambda
        .iter()
        .zip(mu.iter().zip(lambda))
        .map(|(fi, (m, l))| fi * (m - l))
        .sum();
    let f_sum = grad_lambda.iter().sum();
    let nu_mu = normalize(grad_mu);
    let nu_lambda = normalize(grad_lambda);
    let dist = nu_mu
        .iter()
        .zip(nu_lambda.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    // nu_mu has positive entries, so beta_of cannot fail here.
    let beta = beta_of(&nu_mu).unwrap_or(0.0);
    C10Gap {
        hypothesis_active: dist >= beta,
        lhs,
        f_sum,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_k(&[1.0, 1.0, 1.0], 2).unwrap(), 3.0);
        assert_eq!(sigma_k(&[2.0, 3.0, 4.0], 3).unwrap(), 24.0);
        // 1*2 + 1*3 + 1*4 + 2*3 + 2*4 + 3*4
        assert_eq!(sigma_k(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), 35.0);
        assert_eq!(sigma_k(&[5.0, -1.0], 0).unwrap(), 1.0);
        assert!(matches!(
            sigma_k(&[1.0, 2.0], 3),
            Err(HessolveError::InvalidSpec(_))
        ));
    }

    #[test]
    fn cone_membership() {
        assert!(in_cone(&[1.0; 4], 4, 0.0).unwrap());
        assert!(in_cone(&[1.0; 4], 2, 0.0).unwrap());
        assert!(!in_cone(&[-1.0, 3.0], 2, 0.0).unwrap());
        assert!(in_cone(&[-1.0, 3.0], 1, 0.0).unwrap());
        assert!(in_cone(&[-1.0, 3.0], 0, 0.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(SymmetricFunctionSpec::sigma_root(0, 2).is_err());
        assert!(SymmetricFunctionSpec::sigma_root(3, 2).is_err());
        assert!(SymmetricFunctionSpec::quotient(2, 2, 3).is_err());
        assert!(SymmetricFunctionSpec::quotient(2, 0, 3).is_err());
        assert!(SymmetricFunctionSpec::sigma_root(1, 1).is_err());
        assert!(SymmetricFunctionSpec::quotient(3, 1, 3).is_ok());
    }

    #[test]
    fn f_values() {
        let ma3 = SymmetricFunctionSpec::monge_ampere(3).unwrap();
        assert_relative_eq!(f_eval(&ma3, &[1.0, 1.0, 1.0]).unwrap(), 1.0);
        let s2 = SymmetricFunctionSpec::sigma_root(2, 3).unwrap();
        assert_relative_eq!(f_eval(&s2, &[1.0, 1.0, 1.0]).unwrap(), 3f64.sqrt());
        let q = SymmetricFunctionSpec::quotient(2, 1, 2).unwrap();
        assert_relative_eq!(f_eval(&q, &[1.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn f_eval_closure_extension() {
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        assert_eq!(f_eval(&ma, &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(f_eval(&ma, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(f_eval(&ma, &[-1e-14, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            f_eval(&ma, &[-1.0, 3.0]),
            Err(HessolveError::NotInCone { k: 2, .. })
        ));
        assert!(f_eval(&ma, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn closure_tolerance_scales_with_order() {
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let (v, s) = f_eval_closure(&ma, &[-1e-9, 1.0], 1e-8);
        assert_eq!((v, s), (0.0, ConeStatus::Closure));
        let (_, s) = f_eval_closure(&ma, &[-1e-6, 1.0], 1e-8);
        assert_eq!(s, ConeStatus::Outside);
        let (v, s) = f_eval_closure(&ma, &[4.0, 1.0], 1e-8);
        assert_eq!((v, s), (2.0, ConeStatus::Open));
    }

    #[test]
    fn gradient_examples() {
        let s1 = SymmetricFunctionSpec::sigma_root(1, 3).unwrap();
        assert_eq!(f_grad(&s1, &[3.0, -1.0, 0.5]).unwrap().0, vec![1.0; 3]);
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let g = f_grad(&ma, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.5, epsilon = 1e-15);
        assert!(f_grad(&ma, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn closure_gradient_at_vertex_is_diagonal_limit() {
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let g = f_grad_closure(&ma, &[0.0, 0.0], 1e-9).unwrap();
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(g[1], 0.5, epsilon = 1e-12);
        let open = f_grad_closure(&ma, &[1.0, 4.0], 1e-9).unwrap();
        assert_eq!(open, f_grad(&ma, &[1.0, 4.0]).unwrap());
    }

    #[test]
    fn normals_and_beta() {
        let s1 = SymmetricFunctionSpec::sigma_root(1, 4).unwrap();
        let nu = normal_vector(&s1, &[1.0, -0.2, 3.0, 0.5]).unwrap();
        for v in nu.iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-15);
        }
        let q = SymmetricFunctionSpec::quotient(3, 1, 3).unwrap();
        let nu = normal_vector(&q, &[2.5, 2.5, 2.5]).unwrap();
        for v in nu.iter() {
            assert_relative_eq!(*v, 1.0 / 3f64.sqrt(), epsilon = 1e-14);
        }

        let r = 1.0 / 2f64.sqrt();
        assert_relative_eq!(
            beta_of(&[r, r]).unwrap(),
            1.0 / (2.0 * 2f64.sqrt()),
            epsilon = 1e-15
        );
        assert_relative_eq!(beta_of(&[0.6, 0.8]).unwrap(), 0.3);
        let third = 1.0 / 3f64.sqrt();
        assert_eq!(beta_of(&[third; 3]).unwrap(), 1.0 / (2.0 * 3f64.sqrt()));
        assert!(beta_of(&[0.0, 1.0]).is_err());
        assert!(beta_of(&[-0.6, 0.8]).is_err());
    }

    #[test]
    fn c10_identical_points() {
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let gap = c10_gap(&ma, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(gap.lhs, 0.0);
        assert!(!gap.hypothesis_active);
    }

    #[test]
    fn c10_linear_case() {
        let s1 = SymmetricFunctionSpec::sigma_root(1, 3).unwrap();
        let mu = [1.0, 2.0, 0.5];
        let lambda = [3.0, -1.0, 0.25];
        let gap = c10_gap(&s1, &mu, &lambda).unwrap();
        assert_relative_eq!(gap.lhs, 3.5 - 2.25);
        assert_eq!(gap.f_sum, 3.0);
        assert!(!gap.hypothesis_active);
    }
}
