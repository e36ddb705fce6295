//! Python bindings: tensor series, piecewise-linear paths and their lifts,
//! controlled paths, rough integration, the RDE solver and the verify suites.
//! Reports cross the boundary as JSON strings.

use ctrlrough::controlled::ControlledPath as CoreControlled;
use ctrlrough::integral::rough_integral;
use ctrlrough::lipschitz::{compose, LipFunction};
use ctrlrough::rde::SolverConfig;
use ctrlrough::verify::{run_suites, VerifyToggles};
use ctrlrough::{tensor, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

#[pyclass(frozen)]
struct TensorSeries(ctrlrough::TensorSeries);

#[pymethods]
impl TensorSeries {
    /// Levels `0..=N`, level `i` holding `d^i` coefficients.
    #[new]
    fn new(d: usize, n: usize, levels: Vec<Vec<f64>>) -> PyResult<Self> {
        ctrlrough::TensorSeries::from_levels(d, n, levels).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn exp_segment(v: Vec<f64>, n: usize) -> PyResult<Self> {
        ctrlrough::TensorSeries::exp_segment(&v, n).map(Self).map_err(py_err)
    }

    #[getter]
    fn levels(&self) -> Vec<Vec<f64>> {
        self.0.levels().to_vec()
    }

    fn __mul__(&self, other: &TensorSeries) -> PyResult<Self> {
        self.0.mul(&other.0).map(Self).map_err(py_err)
    }

    fn inverse(&self) -> PyResult<Self> {
        self.0.inverse().map(Self).map_err(py_err)
    }

    /// `(group_like, max_deviation)`.
    fn is_group_like(&self, tol: f64) -> PyResult<(bool, f64)> {
        let r = tensor::is_group_like(&self.0, tol).map_err(py_err)?;
        Ok((r.group_like, r.max_deviation))
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }
}

#[pyclass(frozen)]
struct PiecewiseLinearPath(ctrlrough::PiecewiseLinearPath);

#[pymethods]
impl PiecewiseLinearPath {
    #[new]
    fn new(times: Vec<f64>, points: Vec<Vec<f64>>) -> PyResult<Self> {
        ctrlrough::PiecewiseLinearPath::new(times, points).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        ctrlrough::PiecewiseLinearPath::from_csv(path).map(Self).map_err(py_err)
    }

    fn refine(&self) -> Self {
        Self(self.0.refine())
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times().to_vec()
    }

    /// The geometric lift of depth `n`, labelled `beta`-Hölder.
    fn lift(&self, n: usize, beta: f64) -> PyResult<GeometricRoughPath> {
        ctrlrough::lift_path(&self.0, n, beta).map(GeometricRoughPath).map_err(py_err)
    }
}

#[pyclass(frozen)]
struct GeometricRoughPath(ctrlrough::GeometricRoughPath);

#[pymethods]
impl GeometricRoughPath {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times().to_vec()
    }

    fn increment(&self, s: usize, t: usize) -> PyResult<TensorSeries> {
        self.0.increment(s, t).map(TensorSeries).map_err(py_err)
    }

    fn holder_norm(&self, level: usize, beta: f64) -> PyResult<f64> {
        self.0.holder_norm(level, beta).map_err(py_err)
    }

    fn rho_beta(&self, other: &GeometricRoughPath, beta: f64) -> PyResult<f64> {
        self.0.rho_beta(&other.0, beta).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }
}

#[pyclass(frozen)]
struct ControlledPath(CoreControlled);

#[pymethods]
impl ControlledPath {
    #[staticmethod]
    fn canonical_lift(x: &GeometricRoughPath, alpha: f64) -> PyResult<Self> {
        CoreControlled::canonical_lift(&x.0, alpha).map(Self).map_err(py_err)
    }

    /// Level-`level` blocks at every grid time.
    fn level(&self, level: usize) -> PyResult<Vec<Vec<f64>>> {
        if level >= self.0.depth() {
            return Err(PyValueError::new_err(format!("level {level} out of range")));
        }
        Ok(self.0.level_path(level).to_vec())
    }

    fn endpoint(&self) -> Vec<f64> {
        self.0.endpoint().to_vec()
    }

    fn seminorm(&self, x: &GeometricRoughPath, alpha: f64) -> PyResult<f64> {
        self.0.seminorm(&x.0, alpha).map_err(py_err)
    }

    fn distance(&self, other: &ControlledPath, x: &GeometricRoughPath, xt: &GeometricRoughPath, alpha: f64) -> PyResult<f64> {
        ctrlrough::ctrl_distance(&self.0, &other.0, &x.0, &xt.0, alpha).map_err(py_err)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv_string()
    }
}

fn field(spec: &str) -> PyResult<LipFunction> {
    serde_json::from_str(spec).map_err(|e| PyValueError::new_err(format!("field: {e}")))
}

/// `∫ F(X) dX` over the whole grid for the canonical lift; returns
/// `(value, error_estimate)`.
#[pyfunction]
fn integrate(field_json: &str, x: &GeometricRoughPath, alpha: f64) -> PyResult<(Vec<f64>, f64)> {
    let f = field(field_json)?;
    let y = CoreControlled::canonical_lift(&x.0, alpha).map_err(py_err)?;
    let z = compose(&f, &y, &x.0).map_err(py_err)?;
    let est = rough_integral(&z, &x.0, 0, x.0.len() - 1).map_err(py_err)?;
    Ok((est.value, est.error_estimate))
}

/// Solve `dY = F(Y) dX`; `options` is a JSON object of solver settings.
/// Returns the solution and the report as JSON.
#[pyfunction]
#[pyo3(signature = (field_json, x, y0, horizon, alpha, beta, options=None))]
fn solve(
    field_json: &str,
    x: &GeometricRoughPath,
    y0: Vec<f64>,
    horizon: f64,
    alpha: f64,
    beta: f64,
    options: Option<&str>,
) -> PyResult<(ControlledPath, String)> {
    let f = field(field_json)?;
    let mut cfg = serde_json::Map::new();
    if let Some(o) = options {
        cfg = serde_json::from_str(o).map_err(|e| PyValueError::new_err(format!("options: {e}")))?;
    }
    cfg.insert("alpha".into(), alpha.into());
    cfg.insert("beta".into(), beta.into());
    let cfg: SolverConfig = serde_json::from_value(cfg.into()).map_err(|e| PyValueError::new_err(format!("options: {e}")))?;
    let (y, report) = ctrlrough::solve(&f, &x.0, &y0, horizon, &cfg).map_err(|e| py_err(e.error))?;
    Ok((ControlledPath(y), json(&report)))
}

/// Run all verification suites and return the report as JSON.
#[pyfunction]
fn verify(d: usize, n: usize, alpha: f64, beta: f64, seed: u64) -> PyResult<String> {
    run_suites(d, n, alpha, beta, seed, &VerifyToggles::default())
        .map(|r| json(&r))
        .map_err(py_err)
}

#[pymodule]
fn ctrlrough_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<TensorSeries>()?;
    m.add_class::<PiecewiseLinearPath>()?;
    m.add_class::<GeometricRoughPath>()?;
    m.add_class::<ControlledPath>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
