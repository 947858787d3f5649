//! Problem assembly: configuration, the cutoff `eta`, the epsilon schedule
//! and the strict subsolution.

mod sampler;

pub use sampler::{Sampler, SamplerSpec};

use serde::{Deserialize, Serialize};

use crate::discretize::{apply_operator, harmonic_solve, Grid, GridField};
use crate::error::{HessolveError, Result};
use crate::symfunc::{self, ConeStatus, FunctionKind, SymmetricFunctionSpec};

/// Descending schedule `eps_j = eps0_fraction * eps0 * ratio^j`, `j < steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default = "Schedule::default_fraction")]
    pub eps0_fraction: f64,
    #[serde(default = "Schedule::default_ratio")]
    pub ratio: f64,
    #[serde(default = "Schedule::default_steps")]
    pub steps: usize,
    /// Finish with an unregularised solve at `eps = 0`.
    #[serde(default)]
    pub append_zero: bool,
}

impl Schedule {
    fn default_fraction() -> f64 {
        0.5
    }
    fn default_ratio() -> f64 {
        0.25
    }
    fn default_steps() -> usize {
        7
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0_fraction > 0.0 && self.eps0_fraction <= 0.5) {
            return Err(HessolveError::Config(format!(
                "schedule.eps0_fraction must lie in (0, 0.5], got {}",
                self.eps0_fraction
            )));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(HessolveError::Config(format!(
                "schedule.ratio must lie in (0, 1), got {}",
                self.ratio
            )));
        }
        if self.steps == 0 {
            return Err(HessolveError::Config(
                "schedule.steps must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn epsilons(&self, eps0: f64) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.steps)
            .map(|j| self.eps0_fraction * eps0 * self.ratio.powi(j as i32))
            .collect();
        if self.append_zero {
            out.push(0.0);
        }
        out
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            eps0_fraction: Self::default_fraction(),
            ratio: Self::default_ratio(),
            steps: Self::default_steps(),
            append_zero: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    #[serde(default = "NewtonConfig::default_tol")]
    pub tol: f64,
    #[serde(default = "NewtonConfig::default_max_iter")]
    pub max_iter: usize,
}

impl NewtonConfig {
    fn default_tol() -> f64 {
        1e-9
    }
    fn default_max_iter() -> usize {
        50
    }
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: Self::default_tol(),
            max_iter: Self::default_max_iter(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub extents: Vec<f64>,
    pub m: usize,
}

/// On-disk problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub f: FunctionKind,
    pub n: usize,
    pub gamma: f64,
    pub grid: GridConfig,
    pub psi: SamplerSpec,
    pub phi: SamplerSpec,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub newton: NewtonConfig,
    /// Permit `gamma = 0`; results are then best-effort.
    #[serde(default)]
    pub allow_gamma_zero: bool,
    /// Known solution, used only for error reporting.
    #[serde(default)]
    pub exact: Option<SamplerSpec>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HessolveError::Config(e.to_string()))
    }

    pub fn to_problem(&self) -> Result<ProblemSpec> {
        ProblemSpec::from_config(self)
    }
}

/// A fully sampled Dirichlet problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub fspec: SymmetricFunctionSpec,
    pub gamma: f64,
    pub grid: Grid,
    pub psi: GridField,
    /// Boundary data, sampled at every node; only the boundary ring is used
    /// as data, interior values feed diagnostics.
    pub phi: GridField,
    pub schedule: Schedule,
    pub newton: NewtonConfig,
    pub allow_gamma_zero: bool,
    pub exact: Option<GridField>,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fspec: SymmetricFunctionSpec,
        gamma: f64,
        grid: Grid,
        psi: GridField,
        phi: GridField,
        schedule: Schedule,
        newton: NewtonConfig,
        allow_gamma_zero: bool,
    ) -> Result<Self> {
        let p = Self {
            fspec,
            gamma,
            grid,
            psi,
            phi,
            schedule,
            newton,
            allow_gamma_zero,
            exact: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_config(cfg: &ProblemConfig) -> Result<Self> {
        let fspec = SymmetricFunctionSpec::new(cfg.f, cfg.n)
            .map_err(|e| HessolveError::Config(format!("f: {e}")))?;
        let grid = Grid::new(cfg.n, &cfg.grid.extents, cfg.grid.m)
            .map_err(|e| HessolveError::Config(format!("grid: {e}")))?;
        let psi = cfg.psi.compile(cfg.n)?.sample(&grid)?;
        let phi = cfg.phi.compile(cfg.n)?.sample(&grid)?;
        let mut p = Self::new(
            fspec,
            cfg.gamma,
            grid,
            psi,
            phi,
            cfg.schedule.clone(),
            cfg.newton.clone(),
            cfg.allow_gamma_zero,
        )?;
        if let Some(exact) = &cfg.exact {
            p.exact = Some(exact.compile(cfg.n)?.sample(&grid)?);
        }
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if self.fspec.n() != self.grid.n() {
            return Err(HessolveError::Config(format!(
                "operator dimension {} differs from grid dimension {}",
                self.fspec.n(),
                self.grid.n()
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(HessolveError::Config(format!(
                "gamma must be a finite nonnegative number, got {}",
                self.gamma
            )));
        }
        if self.gamma == 0.0 && !self.allow_gamma_zero {
            return Err(HessolveError::Config(
                "gamma = 0 lies outside the existence theory, which assumes gamma > 0; \
                 set \"allow_gamma_zero\": true to solve anyway (best effort)"
                    .into(),
            ));
        }
        self.psi.ensure_same_grid(&GridField::zeros(self.grid))?;
        self.phi.ensure_same_grid(&GridField::zeros(self.grid))?;
        for (i, &v) in self.psi.values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(HessolveError::Config(format!(
                    "psi must be finite and satisfy psi >= 0; got {v} at node {i} (x = {:?})",
                    &self.grid.coords(i)[..self.grid.n()]
                )));
            }
        }
        if self.phi.values.iter().any(|v| !v.is_finite()) {
            return Err(HessolveError::Config("phi must be finite".into()));
        }
        self.schedule.validate()?;
        if !(self.newton.tol > 0.0) || self.newton.max_iter == 0 {
            return Err(HessolveError::Config(
                "newton.tol must be positive and newton.max_iter at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `|phi|_inf` over the boundary ring.
    pub fn phi_boundary_max(&self) -> f64 {
        self.phi.max_abs_on(&self.grid.boundary_nodes())
    }

    /// Comparison slack `10 h^2 (1 + |phi|_inf)`.
    pub fn comparison_slack(&self) -> f64 {
        let h = self.grid.min_spacing();
        10.0 * h * h * (1.0 + self.phi_boundary_max())
    }
}

/// Cone slack `1e-10 (1 + |u|_inf / h^2)` used for admissibility tests.
pub fn cone_tolerance(u: &GridField) -> f64 {
    let h = u.grid.min_spacing();
    1e-10 * (1.0 + u.max_abs() / (h * h))
}

/// The cutoff `eta`: 1 on `[0, eps0/4]`, 0 on `[eps0/2, inf)`, quintic
/// smoothstep in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    eps0: f64,
}

/// Builds the cutoff for a given `eps0 > 0`.
pub fn build_eta(eps0: f64) -> Result<Regularizer> {
    if !(eps0.is_finite() && eps0 > 0.0) {
        return Err(HessolveError::InvalidSpec(format!(
            "eps0 must be positive and finite, got {eps0}"
        )));
    }
    Ok(Regularizer { eps0 })
}

impl Regularizer {
    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    fn phase(&self, t: f64) -> Option<f64> {
        let q = 0.25 * self.eps0;
        (t > q && t < 2.0 * q).then(|| (t - q) / q)
    }

    pub fn eta(&self, t: f64) -> f64 {
        let q = 0.25 * self.eps0;
        if t <= q {
            return 1.0;
        }
        match self.phase(t) {
            Some(s) => 1.0 - s * s * s * (10.0 + s * (-15.0 + 6.0 * s)),
            None => 0.0,
        }
    }

    pub fn eta_prime(&self, t: f64) -> f64 {
        let q = 0.25 * self.eps0;
        match self.phase(t) {
            Some(s) => -30.0 * s * s * (1.0 - s) * (1.0 - s) / q,
            None => 0.0,
        }
    }

    pub fn eta_second(&self, t: f64) -> f64 {
        let q = 0.25 * self.eps0;
        match self.phase(t) {
            Some(s) => -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (q * q),
            None => 0.0,
        }
    }
}

/// `psi + eps * eta(psi)` at every node; requires `0 <= eps <= eps0/2`.
pub fn regularized_rhs(psi: &GridField, eps: f64, reg: &Regularizer) -> Result<GridField> {
    if !(eps >= 0.0 && eps <= 0.5 * reg.eps0) {
        return Err(HessolveError::InvalidSpec(format!(
            "eps = {eps} must lie in [0, eps0/2] = [0, {}]",
            0.5 * reg.eps0
        )));
    }
    Ok(psi.map(|v| v + eps * reg.eta(v)))
}

/// `w = -(n/2) (prod_i (r_i^2 - X_i^2))^(1/n)` with `X = x - center` and
/// `r` the half-widths: convex, zero on the boundary, `D^2 w = I` at the
/// centre of a cube.
pub fn subsolution_bowl(grid: &Grid) -> GridField {
    let n = grid.n();
    let c = grid.center();
    let mut w = GridField::from_fn(*grid, |x| {
        let prod: f64 = (0..n)
            .map(|d| (c[d] * c[d] - (x[d] - c[d]) * (x[d] - c[d])).max(0.0))
            .product();
        -0.5 * n as f64 * prod.powf(1.0 / n as f64)
    });
    for i in grid.boundary_nodes() {
        w.values[i] = 0.0;
    }
    w
}

/// Strict subsolution together with the quantities derived from it.
#[derive(Clone, Debug)]
pub struct Subsolution {
    pub field: GridField,
    /// `F[ul u]` at every node (0 on the boundary).
    pub operator: GridField,
    pub a: f64,
    /// `min F[ul u]` over interior nodes.
    pub eps0: f64,
    /// `min (F[ul u] - psi)` over interior nodes.
    pub margin: f64,
}

fn assemble(
    p: &ProblemSpec,
    harmonic: &GridField,
    bowl: &GridField,
    a: f64,
) -> Result<Subsolution> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(HessolveError::InvalidSpec(format!(
            "subsolution amplitude must be nonnegative, got {a}"
        )));
    }
    let mut field = harmonic.zip_map(bowl, |h, w| h + a * w)?;
    for i in p.grid.boundary_nodes() {
        field.values[i] = p.phi.values[i];
    }
    let tol = cone_tolerance(&field);
    let op = apply_operator(&p.fspec, p.gamma, &field, tol)?;
    let mut eps0 = f64::INFINITY;
    let mut margin = f64::INFINITY;
    let mut worst: Option<(usize, f64)> = None;
    for i in p.grid.interior_nodes() {
        if op.status[i] == Some(ConeStatus::Outside) {
            let h = crate::discretize::hessian_fd(&field, i)?;
            let u = crate::spectral::gamma_shift(&h, p.gamma)?;
            return Err(HessolveError::SubsolutionFailed {
                a,
                node: i,
                lambda: crate::spectral::eigenvalues(&u)?.into_inner(),
                reason: "not admissible".into(),
            });
        }
        let f = op.values.values[i];
        let d = f - p.psi.values[i];
        eps0 = eps0.min(f);
        if d < margin {
            margin = d;
            worst = Some((i, d));
        }
    }
    if let Some((i, d)) = worst {
        if d < 0.0 {
            let h = crate::discretize::hessian_fd(&field, i)?;
            let u = crate::spectral::gamma_shift(&h, p.gamma)?;
            return Err(HessolveError::SubsolutionFailed {
                a,
                node: i,
                lambda: crate::spectral::eigenvalues(&u)?.into_inner(),
                reason: format!("F[u] - psi = {d:.3e} < 0"),
            });
        }
    }
    Ok(Subsolution {
        field,
        operator: op.values,
        a,
        eps0,
        margin,
    })
}

/// `ul u = H[phi] + A w`: admissible with `F[ul u] >= psi` at interior nodes
/// and `ul u = phi` on the boundary, or `SubsolutionFailed`.
pub fn build_subsolution(p: &ProblemSpec, a: f64) -> Result<GridField> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(HessolveError::InvalidSpec(format!(
            "subsolution amplitude must be nonnegative, got {a}"
        )));
    }
    let harmonic = harmonic_solve(&p.grid, &p.phi)?;
    let bowl = subsolution_bowl(&p.grid);
    assemble(p, &harmonic, &bowl, a).map(|s| s.field)
}

/// Doubles `A` from 1 until the subsolution is strict (`min (F - psi) > 0`);
/// `eps0` is the discrete `min F[ul u]`.
pub fn auto_subsolution(p: &ProblemSpec) -> Result<Subsolution> {
    let harmonic = harmonic_solve(&p.grid, &p.phi)?;
    let bowl = subsolution_bowl(&p.grid);
    let mut last = None;
    for j in 0..=30 {
        let a = (1u64 << j) as f64;
        match assemble(p, &harmonic, &bowl, a) {
            Ok(s) if s.margin > 0.0 && s.eps0 > 0.0 => return Ok(s),
            Ok(s) => {
                let node = p
                    .grid
                    .interior_nodes()
                    .into_iter()
                    .find(|&i| s.operator.values[i] - p.psi.values[i] <= 0.0)
                    .unwrap_or(0);
                last = Some(HessolveError::SubsolutionFailed {
                    a,
                    node,
                    lambda: Vec::new(),
                    reason: "F[u] - psi is not strictly positive".into(),
                });
            }
            Err(e @ HessolveError::SubsolutionFailed { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(match last {
        Some(HessolveError::SubsolutionFailed {
            node,
            lambda,
            reason,
            ..
        }) => HessolveError::SubsolutionFailed {
            a: (1u64 << 30) as f64,
            node,
            lambda,
            reason: format!("{reason}; amplitude cap 2^30 reached"),
        },
        _ => HessolveError::SubsolutionFailed {
            a: (1u64 << 30) as f64,
            node: 0,
            lambda: Vec::new(),
            reason: "amplitude cap 2^30 reached".into(),
        },
    })
}

/// Tests `(kappa_1, ..., kappa_{n-1}, R)` against the open cone `Gamma_k`.
pub fn domain_admissible(n: usize, k: usize, kappa: &[f64], r: f64) -> Result<bool> {
    if kappa.len() + 1 != n {
        return Err(HessolveError::InvalidSpec(format!(
            "expected {} principal curvatures for n = {n}, got {}",
            n - 1,
            kappa.len()
        )));
    }
    let mut lambda = kappa.to_vec();
    lambda.push(r);
    symfunc::in_cone(&lambda, k, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::hessian_fd;

    fn ma_problem(m: usize, gamma: f64, psi: f64, phi: SamplerSpec) -> ProblemSpec {
        let grid = Grid::unit(2, m).unwrap();
        let phi = phi.compile(2).unwrap().sample(&grid).unwrap();
        ProblemSpec::new(
            SymmetricFunctionSpec::monge_ampere(2).unwrap(),
            gamma,
            grid,
            GridField::from_fn(grid, |_| psi),
            phi,
            Schedule::default(),
            NewtonConfig::default(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn eta_examples() {
        let r = build_eta(1.0).unwrap();
        assert_eq!(r.eta(0.0), 1.0);
        assert_eq!(r.eta(1.0), 0.0);
        assert!((r.eta(0.375) - 0.5).abs() < 1e-15);
        assert!(build_eta(0.0).is_err());
        assert!(build_eta(-1.0).is_err());
    }

    #[test]
    fn eta_derivatives_match_differences() {
        let r = build_eta(0.8).unwrap();
        let d = 1e-6;
        for i in 1..200 {
            let t = 0.2 + 0.2 * i as f64 / 200.0;
            let fd = (r.eta(t + d) - r.eta(t - d)) / (2.0 * d);
            assert!((fd - r.eta_prime(t)).abs() < 1e-6);
            let fd2 = (r.eta_prime(t + d) - r.eta_prime(t - d)) / (2.0 * d);
            assert!((fd2 - r.eta_second(t)).abs() < 1e-4);
        }
    }

    #[test]
    fn regularized_rhs_examples() {
        let g = Grid::unit(2, 5).unwrap();
        let r = build_eta(1.0).unwrap();
        let zero = GridField::zeros(g);
        let out = regularized_rhs(&zero, 0.1, &r).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.1));
        let big = GridField::from_fn(g, |_| 0.6);
        assert_eq!(regularized_rhs(&big, 0.5, &r).unwrap(), big);
        let q = GridField::from_fn(g, |_| 0.25);
        let out = regularized_rhs(&q, 0.2, &r).unwrap();
        assert!(out.values.iter().all(|&v| (v - 0.45).abs() < 1e-15));
        assert!(regularized_rhs(&zero, 0.6, &r).is_err());
    }

    #[test]
    fn schedule_defaults() {
        let s = Schedule::default();
        let e = s.epsilons(2.0);
        assert_eq!(e.len(), 7);
        assert_eq!(e[0], 1.0);
        assert_eq!(e[1], 0.25);
        assert!(e.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn bowl_is_convex_with_unit_hessian_at_centre() {
        let g = Grid::unit(2, 33).unwrap();
        let w = subsolution_bowl(&g);
        let c = g.index_of(&[16, 16]);
        let h = hessian_fd(&w, c).unwrap();
        assert!((h.get(0, 0) - 1.0).abs() < 1e-2);
        for i in g.interior_nodes() {
            let h = hessian_fd(&w, i).unwrap();
            let det = h.get(0, 0) * h.get(1, 1) - h.get(0, 1).powi(2);
            assert!(
                h.get(0, 0) > 0.0 && det >= 1.0 - 1e-9,
                "node {i}: det {det}"
            );
        }
    }

    #[test]
    fn subsolution_affine_degenerate() {
        let phi = SamplerSpec::Affine {
            offset: 0.3,
            slope: vec![1.0, -2.0],
        };
        let p = ma_problem(17, 0.5, 0.0, phi);
        let s = auto_subsolution(&p).unwrap();
        assert_eq!(s.a, 1.0);
        for i in p.grid.boundary_nodes() {
            assert_eq!(s.field.values[i], p.phi.values[i]);
        }
        // A = 0 gives the harmonic (affine) field with F = 0 >= psi = 0.
        assert!(build_subsolution(&p, 0.0).is_ok());
    }

    #[test]
    fn subsolution_unit_psi_zero_phi() {
        let p = ma_problem(33, 0.0, 1.0, SamplerSpec::Constant { value: 0.0 });
        let s = auto_subsolution(&p).unwrap();
        assert_eq!(s.a, 1.0);
        assert!(s.eps0 >= 1.0);
        assert!(matches!(
            build_subsolution(&p, 0.0),
            Err(HessolveError::SubsolutionFailed { .. })
        ));
        assert!(build_subsolution(&p, -1.0).is_err());
    }

    #[test]
    fn subsolution_unreachable_psi() {
        let p = ma_problem(9, 0.5, 1e12, SamplerSpec::Constant { value: 0.0 });
        assert!(matches!(
            auto_subsolution(&p),
            Err(HessolveError::SubsolutionFailed { .. })
        ));
    }

    #[test]
    fn domain_admissible_examples() {
        assert!(domain_admissible(3, 3, &[1.0, 1.0], 0.5).unwrap());
        assert!(!domain_admissible(3, 3, &[0.0, 0.0], 2.0).unwrap());
        assert!(domain_admissible(3, 1, &[0.0, 0.0], 2.0).unwrap());
        assert!(domain_admissible(3, 1, &[0.0], 2.0).is_err());
    }

    #[test]
    fn config_validation() {
        let text = r#"{
            "f": {"kind": "sigma_root", "k": 2}, "n": 2, "gamma": 0.0,
            "grid": {"extents": [1.0, 1.0], "m": 9},
            "psi": {"kind": "constant", "params": {"value": 1.0}},
            "phi": {"kind": "constant", "params": {"value": 0.0}}
        }"#;
        let cfg = ProblemConfig::from_json(text).unwrap();
        let err = cfg.to_problem().unwrap_err();
        assert!(matches!(err, HessolveError::Config(ref m) if m.contains("gamma > 0")));
        let mut ok = cfg.clone();
        ok.allow_gamma_zero = true;
        assert!(ok.to_problem().is_ok());
        let mut neg = ok.clone();
        neg.psi = SamplerSpec::Constant { value: -1.0 };
        let err = neg.to_problem().unwrap_err();
        assert!(matches!(err, HessolveError::Config(ref m) if m.contains("psi >= 0")));
        assert!(
            ProblemConfig::from_json(&text.replace("\"n\": 2", "\"n\": 2, \"bogus\": 1")).is_err()
        );
    }
}
