//! Python bindings: grids, laws, the Robin-Laplace operator and
//! config-driven runs.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spme_core::config::parse_config as parse_run_config;
use spme_core::constitutive::{validate_law, ConstitutiveLaw};
use spme_core::geometry::{build_grid, DiscreteField, GridDomain};
use spme_core::robin_laplace::{eigensolve, RobinCoefficient, RobinOperator};
use spme_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parse { .. } | Error::Config(_) | Error::Assumption(_) | Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyclass(frozen, module = "spme")]
struct Grid {
    inner: Arc<GridDomain>,
}

#[pymethods]
impl Grid {
    #[new]
    fn new(extents: Vec<f64>, cells: Vec<usize>) -> PyResult<Self> {
        Ok(Grid { inner: build_grid(&extents, &cells).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn spacing(&self) -> Vec<f64> {
        self.inner.spacing().to_vec()
    }

    fn coordinates(&self, node: usize) -> PyResult<Vec<f64>> {
        if node >= self.inner.node_count() {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        Ok(self.inner.coordinates(node))
    }

    fn grid_hash(&self) -> String {
        self.inner.grid_hash()
    }

    fn __repr__(&self) -> String {
        format!("Grid(extents={:?}, cells={:?})", self.inner.extents(), self.inner.cells())
    }
}

#[pyclass(frozen, module = "spme")]
struct Law {
    inner: ConstitutiveLaw,
}

#[pymethods]
impl Law {
    /// `cubic` (parameter C0), `linear` (slope) or `stefan` (threshold).
    #[new]
    #[pyo3(signature = (name, param = None))]
    fn new(name: &str, param: Option<f64>) -> PyResult<Self> {
        let inner = match name {
            "cubic" => ConstitutiveLaw::cubic(param.unwrap_or(0.0)),
            "linear" | "identity" => ConstitutiveLaw::linear(param.unwrap_or(1.0)),
            "stefan" => ConstitutiveLaw::stefan(param.unwrap_or(1.0)),
            other => return Err(PyValueError::new_err(format!("unknown law '{other}'"))),
        };
        Ok(Law { inner })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn psi(&self, r: f64) -> f64 {
        self.inner.psi(r)
    }

    fn resolvent(&self, lam: f64, y: f64) -> PyResult<f64> {
        self.inner.resolvent(lam, y).map_err(to_py)
    }

    fn yosida(&self, lam: f64, r: f64) -> PyResult<f64> {
        self.inner.yosida(lam, r).map_err(to_py)
    }

    /// True when every structural inequality holds on the sample.
    #[pyo3(signature = (samples = 10_000, range = 10.0))]
    fn validate(&self, samples: usize, range: f64) -> PyResult<bool> {
        Ok(validate_law(&self.inner, samples, range).map_err(to_py)?.passed())
    }
}

#[pyclass(frozen, module = "spme")]
struct RobinLaplace {
    inner: Arc<RobinOperator>,
}

#[pymethods]
impl RobinLaplace {
    #[new]
    #[pyo3(signature = (grid, alpha = 1.0))]
    fn new(grid: &Grid, alpha: f64) -> PyResult<Self> {
        let g = grid.inner.clone();
        let a = RobinCoefficient::constant(&g, alpha).map_err(to_py)?;
        Ok(RobinLaplace { inner: Arc::new(RobinOperator::assemble(g, a).map_err(to_py)?) })
    }

    /// The `count` smallest eigenvalues.
    fn eigenvalues(&self, py: Python<'_>, count: usize) -> PyResult<Vec<f64>> {
        let op = self.inner.clone();
        let basis = py.detach(move || eigensolve(&op, count)).map_err(to_py)?;
        Ok(basis.eigenvalues().to_vec())
    }

    fn vprime_norm(&self, values: Vec<f64>) -> PyResult<f64> {
        let x = DiscreteField::new(self.inner.domain().clone(), values).map_err(to_py)?;
        Ok(self.inner.vprime_norm(&x))
    }
}

/// Validates a JSON config and returns it with all defaults resolved.
#[pyfunction]
fn parse_config(text: &str) -> PyResult<String> {
    let cfg = parse_run_config(text).map_err(to_py)?;
    Ok(cfg.resolved().map_err(to_py)?.to_json())
}

/// Runs the config's simulation; returns a JSON summary with the snapshot
/// times, mean energies and replica 0 at the final time.
#[pyfunction]
fn simulate(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = parse_run_config(config_json).map_err(to_py)?;
    let out = py
        .detach(move || cfg.sim_config().and_then(|sim| spme_core::sde_solver::simulate(&sim)))
        .map_err(to_py)?;
    let tr = &out.trajectories[0];
    let summary = serde_json::json!({
        "times": tr.times,
        "replicas": out.trajectories.len(),
        "vprime_sq": out.energy.vprime_sq.iter().map(|m| m.mean).collect::<Vec<_>>(),
        "l2_sq": out.energy.l2_sq.iter().map(|m| m.mean).collect::<Vec<_>>(),
        "final": tr.last().values(),
    });
    Ok(summary.to_string())
}

/// Runs a CLI subcommand under `out` and returns the run directory.
#[pyfunction]
fn run(py: Python<'_>, subcommand: &str, config_json: &str, out: PathBuf) -> PyResult<String> {
    let cfg = parse_run_config(config_json).map_err(to_py)?;
    let name = subcommand.to_string();
    let (dir, _) = py.detach(move || spme_core::cli::execute(&name, &cfg, &out)).map_err(to_py)?;
    Ok(dir.display().to_string())
}

#[pymodule]
fn spme(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Law>()?;
    m.add_class::<RobinLaplace>()?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
