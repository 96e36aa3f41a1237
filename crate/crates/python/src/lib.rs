//! Python bindings: meshes, operator assembly, GMRES and the refinement studies.

use heatbem::analysis::StudyRecord;
use heatbem::galerkin::OperatorMatrices;
use heatbem::kernels::KernelParams;
use heatbem::krylov::{direct_solve, gmres as gmres_solve, GmresConfig, Preconditioner, PreconditionerKind};
use heatbem::reference::{Example, SineSeries};
use heatbem::study::{self, ExperimentConfig};
use heatbem::{BoundaryMesh, Error, Interval, Side};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn side(s: &str) -> PyResult<Side> {
    match s {
        "left" | "L" | "l" => Ok(Side::Left),
        "right" | "R" | "r" => Ok(Side::Right),
        _ => Err(PyValueError::new_err(format!("unknown side {s:?}, expected 'left' or 'right'"))),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Boundary mesh of the space-time lateral boundary `{a, b} x (0, T)`.
#[pyclass(name = "Mesh", module = "heatbem", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMesh(BoundaryMesh);

#[pymethods]
impl PyMesh {
    /// Uniform mesh with `2^level` elements per side.
    #[staticmethod]
    #[pyo3(signature = (level, horizon = 1.0, a = 0.0, b = 1.0))]
    fn uniform(level: usize, horizon: f64, a: f64, b: f64) -> PyResult<Self> {
        let interval = Interval::new(a, b).map_err(to_py)?;
        BoundaryMesh::uniform(interval, horizon, level).map(Self).map_err(to_py)
    }

    /// Mesh from time nodes on each side (both starting at 0, ending at `horizon`).
    #[staticmethod]
    #[pyo3(signature = (left, right, horizon = 1.0, a = 0.0, b = 1.0))]
    fn from_nodes(left: Vec<f64>, right: Vec<f64>, horizon: f64, a: f64, b: f64) -> PyResult<Self> {
        let interval = Interval::new(a, b).map_err(to_py)?;
        BoundaryMesh::from_nodes(interval, horizon, left, right)
            .map(Self)
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(N={}, h_min={:e}, h_max={:e})", self.0.len(), self.0.h_min(), self.0.h_max())
    }

    #[getter]
    fn h_min(&self) -> f64 {
        self.0.h_min()
    }

    #[getter]
    fn h_max(&self) -> f64 {
        self.0.h_max()
    }

    fn sizes(&self) -> Vec<f64> {
        self.0.sizes()
    }

    /// `(side, t_begin, t_end)` per element, left side first.
    fn elements(&self) -> Vec<(String, f64, f64)> {
        self.0
            .elements()
            .map(|e| {
                let s = if e.side == Side::Left { "left" } else { "right" };
                (s.to_string(), e.t_begin, e.t_end)
            })
            .collect()
    }

    fn nodes(&self, side_name: &str) -> PyResult<Vec<f64>> {
        Ok(self.0.nodes(side(side_name)?).to_vec())
    }

    fn refine_uniform(&self) -> Self {
        Self(self.0.refine_uniform())
    }

    fn refine_marked(&self, marked: Vec<bool>) -> PyResult<Self> {
        self.0.refine_marked(&marked).map(Self).map_err(to_py)
    }

    /// Maximum-strategy marking followed by bisection of the marked elements.
    fn refine_adaptive(&self, indicators: Vec<f64>, theta: f64) -> PyResult<Self> {
        self.0.refine_adaptive(&indicators, theta).map(Self).map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }
}

/// Galerkin matrices `V`, `K`, `D` (nested lists) and the diagonal mass `M`.
#[pyfunction]
#[pyo3(signature = (mesh, alpha = 1.0))]
fn assemble<'py>(py: Python<'py>, mesh: &PyMesh, alpha: f64) -> PyResult<Bound<'py, PyDict>> {
    let params = KernelParams::new(alpha).map_err(to_py)?;
    let ops = py.detach(|| OperatorMatrices::assemble(&mesh.0, params));
    let out = PyDict::new(py);
    out.set_item("V", rows(&ops.v))?;
    out.set_item("K", rows(&ops.k))?;
    out.set_item("D", rows(&ops.d))?;
    out.set_item("M", ops.mass.iter().copied().collect::<Vec<_>>())?;
    Ok(out)
}

/// Right-preconditioned GMRES on a dense system. `precond` is "none" or "diag";
/// the Calderon preconditioner needs `hypersingular` and `mass`.
#[pyfunction]
#[pyo3(signature = (a, b, precond = "none", tol = 1e-8, max_iter = 1000, hypersingular = None, mass = None))]
#[allow(clippy::too_many_arguments)]
fn gmres<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    precond: &str,
    tol: f64,
    max_iter: usize,
    hypersingular: Option<Vec<Vec<f64>>>,
    mass: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let a = matrix(a)?;
    let b = DVector::from_vec(b);
    let kind: PreconditionerKind = precond.parse().map_err(to_py)?;
    let p = match kind {
        PreconditionerKind::Identity => Preconditioner::Identity,
        PreconditionerKind::Diagonal => Preconditioner::diagonal(&a).map_err(to_py)?,
        PreconditionerKind::Calderon => {
            let (Some(d), Some(m)) = (hypersingular, mass) else {
                return Err(PyValueError::new_err("calderon needs hypersingular and mass"));
            };
            Preconditioner::calderon(&DVector::from_vec(m), matrix(d)?).map_err(to_py)?
        }
    };
    let cfg = GmresConfig { tol, max_iter };
    let rep = py.detach(|| gmres_solve(&a, &b, &cfg, &p)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("solution", rep.solution.iter().copied().collect::<Vec<_>>())?;
    out.set_item("iterations", rep.iterations)?;
    out.set_item("converged", rep.converged)?;
    out.set_item("breakdown", rep.breakdown)?;
    out.set_item("relative_residual", rep.final_relative_residual)?;
    out.set_item("history", rep.relative_residual_history)?;
    Ok(out)
}

/// LU solve with a singularity check.
#[pyfunction]
fn lu_solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Vec<f64>> {
    let x = direct_solve(&matrix(a)?, &DVector::from_vec(b)).map_err(to_py)?;
    Ok(x.iter().copied().collect())
}

/// Sine-series reference solution of one of the built-in examples.
#[pyclass(name = "Reference", module = "heatbem", frozen)]
struct PyReference(SineSeries);

#[pymethods]
impl PyReference {
    #[new]
    #[pyo3(signature = (example = 1, alpha = 1.0))]
    fn new(example: u32, alpha: f64) -> PyResult<Self> {
        let ex = Example::from_index(example).map_err(to_py)?;
        ex.series(alpha).map(Self).map_err(to_py)
    }

    /// Exterior normal derivative on the given side.
    fn flux(&self, side_name: &str, t: f64) -> PyResult<f64> {
        Ok(self.0.flux(side(side_name)?, t))
    }

    fn interior(&self, x: f64, t: f64) -> f64 {
        self.0.interior(x, t)
    }

    #[getter]
    fn n_terms(&self) -> usize {
        self.0.n_max()
    }
}

fn config(options: Option<&Bound<'_, PyDict>>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(d) = options {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let value = v.str()?.to_string();
            cfg.set(&key.replace('_', "-"), &value).map_err(to_py)?;
        }
    }
    Ok(cfg)
}

fn record_dict<'py>(py: Python<'py>, r: &StudyRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("level", r.level)?;
    d.set_item("n", r.n)?;
    d.set_item("h_min", r.h_min)?;
    d.set_item("h_max", r.h_max)?;
    d.set_item("error", r.l2_error)?;
    d.set_item("eoc", r.eoc)?;
    d.set_item("kappa_v_sv", r.kappa_v_sv)?;
    d.set_item("kappa_v_eig", r.kappa_v_eig)?;
    d.set_item("kappa_diag_sv", r.kappa_diag_sv)?;
    d.set_item("kappa_diag_eig", r.kappa_diag_eig)?;
    d.set_item("kappa_calderon_sv", r.kappa_calderon_sv)?;
    d.set_item("kappa_calderon_eig", r.kappa_calderon_eig)?;
    d.set_item("iters_none", r.iters_none)?;
    d.set_item("iters_diag", r.iters_diag)?;
    d.set_item("iters_calderon", r.iters_calderon)?;
    d.set_item("margin_v", r.margin_v)?;
    d.set_item("margin_d", r.margin_d)?;
    d.set_item("seconds", r.seconds)?;
    Ok(d)
}

/// Uniform refinement study; keyword options use the CLI flag names
/// (`example`, `alpha`, `levels`, `tol`, `precond`, `kappa`, `max_kappa_n`, ...).
#[pyfunction]
#[pyo3(signature = (**options))]
fn uniform_study<'py>(py: Python<'py>, options: Option<&Bound<'py, PyDict>>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config(options)?;
    let out = py.detach(|| study::run_uniform_study(&cfg)).map_err(to_py)?;
    out.records.iter().map(|r| record_dict(py, r)).collect()
}

/// Adaptive refinement study (example 2 unless `example` is given).
#[pyfunction]
#[pyo3(signature = (**options))]
fn adaptive_study<'py>(py: Python<'py>, options: Option<&Bound<'py, PyDict>>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("example", "2").map_err(to_py)?;
    if let Some(d) = options {
        let user = config(Some(d))?;
        if d.contains("example")? {
            cfg = user;
        } else {
            cfg = ExperimentConfig { example: cfg.example, ..user };
        }
    }
    let out = py.detach(|| study::run_adaptive_study(&cfg)).map_err(to_py)?;
    out.records.iter().map(|r| record_dict(py, r)).collect()
}

/// Solve on a uniform mesh; returns the record, flux coefficients and interior samples.
#[pyfunction]
#[pyo3(signature = (level, points = None, **options))]
fn solve<'py>(
    py: Python<'py>,
    level: usize,
    points: Option<Vec<(f64, f64)>>,
    options: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = config(options)?;
    if let Some(p) = points {
        cfg.points = p;
    }
    let res = py.detach(|| study::run_single_solve(&cfg, level)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("record", record_dict(py, &res.record)?)?;
    d.set_item("mesh", PyMesh(res.flux.mesh().clone()))?;
    d.set_item("flux", res.flux.coefficients().iter().copied().collect::<Vec<_>>())?;
    let samples: Vec<(f64, f64, f64, f64)> = res
        .samples
        .iter()
        .map(|s| (s.x, s.t, s.computed, s.reference))
        .collect();
    d.set_item("samples", samples)?;
    d.set_item("second_bie_residual", res.second_bie_residual)?;
    Ok(d)
}

/// Structural checks; returns `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (**options))]
fn check_invariants(py: Python<'_>, options: Option<&Bound<'_, PyDict>>) -> PyResult<Vec<(String, bool, String)>> {
    let cfg = config(options)?;
    let checks = py.detach(|| study::check_invariants(&cfg)).map_err(to_py)?;
    Ok(checks.into_iter().map(|c| (c.name, c.passed, c.detail)).collect())
}

#[pymodule(name = "heatbem")]
fn heatbem_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyReference>()?;
    m.add_function(wrap_pyfunction!(assemble, m)?)?;
    m.add_function(wrap_pyfunction!(gmres, m)?)?;
    m.add_function(wrap_pyfunction!(lu_solve, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_study, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_study, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(check_invariants, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
