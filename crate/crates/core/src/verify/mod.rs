//! Numerical checks of the structural statements behind the solver:
//! comparison bounds, admissibility, ellipticity, the normal-gap constant,
//! the boundary barrier, the tau-concavity inequality and estimate sweeps.

mod barrier;
mod checks;
mod sweep;
mod tau;

pub use barrier::{
    barrier_margin, barrier_search, BarrierCertificate, BarrierConstants, BarrierMargin,
    BoundaryPatch, Side,
};
pub use checks::{
    admissibility_check, c10_field_check, comparison_check, ellipticity_check, AdmissibilityReport,
    C10Report, ComparisonReport, EllipticityReport,
};
pub use sweep::{estimate_sweep, GammaSummary, SweepRow, SweepTable};
pub use tau::{analytic_fields, skew_fields, tau_concavity_check, TauReport, TAU_C_TEST};

use serde::{Deserialize, Serialize};

use crate::discretize::{
    max_boundary_second_difference, max_gradient, max_second_difference, GridField, Region,
};
use crate::error::Result;
use crate::problem::ProblemSpec;
use crate::spectral::MAX_DIM;

pub const SCHEMA: &str = "hessolve-report-v1";

/// Every check and estimate surrogate for one solved field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema: String,
    pub comparison: ComparisonReport,
    pub admissibility: AdmissibilityReport,
    pub ellipticity: EllipticityReport,
    pub c10: C10Report,
    /// Max gradient magnitude.
    pub c1_norm: f64,
    /// Max Hessian spectral radius on the central box (25% margin per side).
    pub c2_interior: f64,
    /// Same over all interior nodes.
    pub c2_global: f64,
    /// Same at face nodes, with one-sided normal differences.
    pub c2_boundary: f64,
    /// Max-norm distance to the reference solution, when one is configured.
    pub exact_error: Option<f64>,
    /// Comparison, admissibility and ellipticity all pass.
    pub pass: bool,
}

/// The central box leaving a quarter of each extent on either side.
pub fn interior_box(grid: &crate::discretize::Grid) -> Region {
    let mut lo = [0.0; MAX_DIM];
    let mut hi = [0.0; MAX_DIM];
    for d in 0..grid.n() {
        lo[d] = 0.25 * grid.extents()[d];
        hi[d] = 0.75 * grid.extents()[d];
    }
    Region::Box { lo, hi }
}

/// Runs the standard checks on `u` against its subsolution and harmonic bound.
pub fn diagnose(
    p: &ProblemSpec,
    u: &GridField,
    sub: &GridField,
    h: &GridField,
) -> Result<DiagnosticsReport> {
    let comparison = comparison_check(u, sub, h, p.comparison_slack())?;
    let admissibility = admissibility_check(&p.fspec, p.gamma, u)?;
    let ellipticity = ellipticity_check(&p.fspec, p.gamma, u)?;
    let c10 = c10_field_check(&p.fspec, p.gamma, u, sub)?;
    let exact_error = match &p.exact {
        Some(e) => Some(u.max_diff(e)?),
        None => None,
    };
    let pass = comparison.pass && admissibility.pass && ellipticity.pass;
    Ok(DiagnosticsReport {
        schema: SCHEMA.to_string(),
        comparison,
        admissibility,
        ellipticity,
        c10,
        c1_norm: max_gradient(u),
        c2_interior: max_second_difference(u, interior_box(&u.grid))?,
        c2_global: max_second_difference(u, Region::All)?,
        c2_boundary: max_boundary_second_difference(u)?,
        exact_error,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Grid;
    use crate::symfunc::SymmetricFunctionSpec;

    #[test]
    fn comparison_examples() {
        let g = Grid::unit(2, 9).unwrap();
        let u = GridField::from_fn(g, |x| x[0] + x[1]);
        let r = comparison_check(&u, &u, &u, 0.0).unwrap();
        assert!(r.pass);
        assert_eq!(r.min_u_minus_sub, 0.0);
        let mut bumped = u.clone();
        bumped.values[40] += 2e-3;
        let r = comparison_check(&bumped, &u, &u, 1e-3).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_h_node, 40);
    }

    #[test]
    fn admissibility_examples() {
        let g = Grid::unit(2, 17).unwrap();
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let bowl = GridField::from_fn(g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let r = admissibility_check(&ma, 0.0, &bowl).unwrap();
        assert!(r.pass);
        assert!((r.laplacian_min - 2.0).abs() < 1e-9);
        let cap = bowl.map(|v| -v);
        let r = admissibility_check(&ma, 0.0, &cap).unwrap();
        assert!(!r.pass);
        assert_eq!(r.inadmissible_count, g.interior_nodes().len());
    }

    #[test]
    fn ellipticity_examples() {
        let g = Grid::unit(2, 17).unwrap();
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let bowl = GridField::from_fn(g, |x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let r = ellipticity_check(&ma, 0.0, &bowl).unwrap();
        assert!((r.lambda0 - 0.5).abs() < 1e-9 && (r.big_lambda0 - 0.5).abs() < 1e-9);
        let s1 = SymmetricFunctionSpec::sigma_root(1, 2).unwrap();
        let wave = GridField::from_fn(g, |x| x[0] * x[0] + (3.0 * x[1]).sin());
        let r = ellipticity_check(&s1, 0.25, &wave).unwrap();
        assert!((r.lambda0 - 1.5).abs() < 1e-12 && (r.big_lambda0 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn c10_identical_fields_are_inactive() {
        let g = Grid::unit(2, 17).unwrap();
        let ma = SymmetricFunctionSpec::monge_ampere(2).unwrap();
        let u = GridField::from_fn(g, |x| x[0].exp() + x[1] * x[1]);
        let r = c10_field_check(&ma, 0.5, &u, &u).unwrap();
        assert_eq!(r.active_count, 0);
        assert!(r.pass && r.min_theta.is_none());
        // Scaling leaves normals unchanged.
        let v = u.map(|x| 3.0 * x);
        let r = c10_field_check(&ma, 0.5, &v, &u).unwrap();
        assert_eq!(r.active_count, 0);
    }
}
