//! Python bindings: symmetric functions, eigenvalues, the regularising
//! cutoff and config-driven solves.

use hessolve_core::problem::{
    build_eta, ProblemConfig, ProblemSpec, Regularizer as CoreRegularizer,
};
use hessolve_core::solver::{continuity_solve, prepare};
use hessolve_core::spectral::{eigen_sym, eigenvalues as core_eigenvalues};
use hessolve_core::symfunc::{cone_status, f_eval, f_grad, sigma_k as core_sigma_k};
use hessolve_core::verify::diagnose;
use hessolve_core::{FunctionKind, GridField, HessolveError, SymMatrix, SymmetricFunctionSpec};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::{json, Value};

fn to_py(e: HessolveError) -> PyErr {
    match e {
        HessolveError::Config(_)
        | HessolveError::InvalidSpec(_)
        | HessolveError::InvalidInput(_)
        | HessolveError::NotInCone { .. }
        | HessolveError::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// `sigma_k^(1/k)` when `l` is None, else `(sigma_k / sigma_l)^(1/(k-l))`.
#[pyclass(
    name = "FunctionSpec",
    module = "hessolve",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyFunctionSpec(SymmetricFunctionSpec);

#[pymethods]
impl PyFunctionSpec {
    #[new]
    #[pyo3(signature = (k, n, l=None))]
    fn new(k: usize, n: usize, l: Option<usize>) -> PyResult<Self> {
        let kind = match l {
            None => FunctionKind::SigmaRoot { k },
            Some(l) => FunctionKind::Quotient { k, l },
        };
        SymmetricFunctionSpec::new(kind, n).map(Self).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn cone_order(&self) -> usize {
        self.0.cone_order()
    }

    #[getter]
    fn label(&self) -> String {
        self.0.label()
    }

    fn __call__(&self, lam: Vec<f64>) -> PyResult<f64> {
        f_eval(&self.0, &lam).map_err(to_py)
    }

    fn grad(&self, lam: Vec<f64>) -> PyResult<Vec<f64>> {
        f_grad(&self.0, &lam).map(|g| g.into_inner()).map_err(to_py)
    }

    /// "open", "closure" or "outside" for the cone of order `cone_order`.
    #[pyo3(signature = (lam, tol=0.0))]
    fn cone_status(&self, lam: Vec<f64>, tol: f64) -> PyResult<String> {
        let s = cone_status(&lam, self.0.cone_order(), tol).map_err(to_py)?;
        Ok(format!("{s:?}").to_lowercase())
    }

    fn __repr__(&self) -> String {
        format!("FunctionSpec({})", self.0.label())
    }
}

#[pyfunction]
fn sigma_k(lam: Vec<f64>, k: usize) -> PyResult<f64> {
    core_sigma_k(&lam, k).map_err(to_py)
}

/// Ascending eigenvalues of a symmetric matrix given as rows.
#[pyfunction]
fn eigenvalues(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let a = SymMatrix::from_rows(&rows).map_err(to_py)?;
    core_eigenvalues(&a).map(|l| l.into_inner()).map_err(to_py)
}

/// `(values, vectors)` with `vectors[j]` the unit eigenvector for `values[j]`.
#[pyfunction]
fn eigh(rows: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let a = SymMatrix::from_rows(&rows).map_err(to_py)?;
    let d = eigen_sym(&a).map_err(to_py)?;
    let vecs = (0..a.n()).map(|j| d.vector(j)).collect();
    Ok((d.values.to_vec(), vecs))
}

/// Smooth cutoff: 1 below `eps0 / 4`, 0 above `eps0 / 2`.
#[pyclass(name = "Regularizer", module = "hessolve", frozen)]
struct PyRegularizer(CoreRegularizer);

#[pymethods]
impl PyRegularizer {
    #[new]
    fn new(eps0: f64) -> PyResult<Self> {
        build_eta(eps0).map(Self).map_err(to_py)
    }

    #[getter]
    fn eps0(&self) -> f64 {
        self.0.eps0()
    }

    fn eta(&self, t: f64) -> f64 {
        self.0.eta(t)
    }

    fn eta_prime(&self, t: f64) -> f64 {
        self.0.eta_prime(t)
    }

    fn eta_second(&self, t: f64) -> f64 {
        self.0.eta_second(t)
    }
}

/// A sampled problem built from a JSON config.
#[pyclass(name = "Problem", module = "hessolve", frozen)]
struct PyProblem(ProblemSpec);

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg = ProblemConfig::from_json(text).map_err(to_py)?;
        cfg.to_problem().map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| to_py(e.into()))?;
        Self::from_json(&text)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.grid.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.grid.m()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    #[getter]
    fn function(&self) -> PyFunctionSpec {
        PyFunctionSpec(self.0.fspec)
    }

    /// Node coordinates, one row per node in storage order.
    fn coords(&self) -> Vec<Vec<f64>> {
        let g = &self.0.grid;
        (0..g.len())
            .map(|i| g.coords(i)[..g.n()].to_vec())
            .collect()
    }

    /// `{"a", "eps0", "values"}` for the automatic subsolution.
    fn subsolution<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let p = &self.0;
        let (sub, _, reg, _) = py.detach(|| prepare(p)).map_err(to_py)?;
        json_to_py(
            py,
            &json!({"a": sub.a, "eps0": reg.eps0(), "values": sub.field.values}),
        )
    }

    /// Runs the full schedule. Returns one dict per eps with the field values,
    /// iteration count, final residual and diagnostics.
    fn solve<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let p = &self.0;
        let run = py.detach(|| continuity_solve(p)).map_err(to_py)?;
        let steps: Vec<Value> = run
            .records
            .iter()
            .map(|r| {
                json!({
                    "eps": r.eps,
                    "iterations": r.iterations,
                    "final_residual": r.final_residual,
                    "values": r.u.values,
                    "diagnostics": r.diagnostics,
                })
            })
            .collect();
        json_to_py(
            py,
            &json!({
                "subsolution_a": run.subsolution.a,
                "eps0": run.regularizer.eps0(),
                "epsilons": run.epsilons,
                "steps": steps,
            }),
        )
    }

    /// Diagnostics for an arbitrary field on this problem's grid.
    fn verify<'py>(&self, py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let p = &self.0;
        let u = GridField::new(p.grid, values).map_err(to_py)?;
        let report = py
            .detach(|| {
                let (sub, h, _, _) = prepare(p)?;
                diagnose(p, &u, &sub.field, &h)
            })
            .map_err(to_py)?;
        json_to_py(
            py,
            &serde_json::to_value(report).map_err(|e| to_py(e.into()))?,
        )
    }
}

#[pymodule]
fn hessolve(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFunctionSpec>()?;
    m.add_class::<PyRegularizer>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(sigma_k, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(eigh, m)?)?;
    Ok(())
}
