use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use replica_lse::harness::{self, SweepConfig, Variable};
use replica_lse::rs_solver::{self, RsOptions};
use replica_lse::rsb_solver::{self, RsbOptions};
use replica_lse::{decoupled, finite_sim, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Domain(_) | Error::Unsupported(_) | Error::Config { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "SpectralModel", module = "replica_lse_py")]
#[derive(Clone)]
struct PySpectral(replica_lse::SpectralModel);

#[pymethods]
impl PySpectral {
    #[staticmethod]
    fn marchenko_pastur(alpha: f64) -> PyResult<Self> {
        replica_lse::SpectralModel::marchenko_pastur(alpha).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn point_mass(alpha: f64, atom: f64) -> PyResult<Self> {
        replica_lse::SpectralModel::point_mass(alpha, atom).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn empirical(alpha: f64, eigenvalues: Vec<f64>) -> PyResult<Self> {
        replica_lse::SpectralModel::empirical(alpha, eigenvalues).map(Self).map_err(py_err)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha()
    }

    fn r_transform(&self, omega: f64) -> PyResult<f64> {
        self.0.r_transform(omega).map_err(py_err)
    }

    fn r_derivative(&self, omega: f64) -> PyResult<f64> {
        self.0.r_derivative(omega).map_err(py_err)
    }
}

#[pyclass(name = "Penalty", module = "replica_lse_py")]
#[derive(Clone, Copy)]
struct PyPenalty(decoupled::Penalty);

#[pymethods]
impl PyPenalty {
    #[new]
    #[pyo3(signature = (lam, lam0=0.0, lam1=0.0))]
    fn new(lam: f64, lam0: f64, lam1: f64) -> PyResult<Self> {
        decoupled::Penalty::new(lam, lam0, lam1).map(Self).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Penalty(lam={}, lam0={}, lam1={})", self.0.lambda, self.0.lambda0, self.0.lambda1)
    }
}

#[pyclass(name = "Support", module = "replica_lse_py")]
#[derive(Clone, Copy)]
struct PySupport(decoupled::Support);

#[pymethods]
impl PySupport {
    #[staticmethod]
    fn complex_plane() -> Self {
        Self(decoupled::Support::Complex)
    }

    #[staticmethod]
    fn disc(peak: f64) -> PyResult<Self> {
        decoupled::Support::disc(peak).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn psk(peak: f64, order: u32) -> PyResult<Self> {
        decoupled::Support::psk(peak, order).map(Self).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// Decoupled scalar precoder `argmin_v |v − s|² + ξu(v)`.
#[pyfunction]
fn solve_scalar(s: Complex64, xi: f64, penalty: PyPenalty, support: PySupport) -> PyResult<Complex64> {
    decoupled::solve_scalar(s, xi, &penalty.0, &support.0).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (rho, penalty, support, spectral, tol=1e-10))]
fn rs_solve<'py>(py: Python<'py>, rho: f64, penalty: PyPenalty, support: PySupport, spectral: &PySpectral, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let mut o = RsOptions::for_rho(rho);
    o.tol = tol;
    let s = py.allow_threads(|| rs_solver::rs_solve(rho, &penalty.0, &support.0, &spectral.0, &o)).map_err(py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("chi", s.state.chi)?;
    d.set_item("p", s.state.p)?;
    d.set_item("xi", s.xi)?;
    d.set_item("rho_rs", s.rho_rs)?;
    d.set_item("distortion", s.distortion)?;
    d.set_item("distortion_db", s.distortion_db)?;
    d.set_item("eta", s.eta)?;
    d.set_item("avg_power", s.avg_power)?;
    d.set_item("papr", s.papr)?;
    d.set_item("iterations", s.iterations)?;
    d.set_item("converged", s.converged)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (rho, penalty, support, spectral, pin_c_zero=false))]
fn rsb_solve<'py>(py: Python<'py>, rho: f64, penalty: PyPenalty, support: PySupport, spectral: &PySpectral, pin_c_zero: bool) -> PyResult<Bound<'py, PyDict>> {
    let mut o = RsbOptions::for_rho(rho);
    o.pin_c_zero = pin_c_zero;
    let s = py.allow_threads(|| rsb_solver::rsb_solve(rho, &penalty.0, &support.0, &spectral.0, &o)).map_err(py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("chi", s.state.chi)?;
    d.set_item("c", s.state.c)?;
    d.set_item("p", s.state.p)?;
    d.set_item("mu", s.state.mu)?;
    d.set_item("xi", s.xi)?;
    d.set_item("rho_rs", s.rho_rs)?;
    d.set_item("rho_rsb1", s.rho1)?;
    d.set_item("distortion", s.distortion)?;
    d.set_item("distortion_rs", s.rs.distortion)?;
    d.set_item("eta", s.eta)?;
    d.set_item("avg_power", s.avg_power)?;
    d.set_item("converged", s.converged)?;
    d.set_item("fell_back_to_rs", s.fell_back_to_rs)?;
    d.set_item("roots", s.roots.iter().map(|r| (r.state.mu, r.distortion)).collect::<Vec<_>>())?;
    Ok(d)
}

/// Samples one i.i.d. Gaussian instance and solves it (convex or coordinate descent).
#[pyfunction]
#[pyo3(signature = (n, alpha, rho, penalty, support, seed))]
fn finite_trial<'py>(py: Python<'py>, n: usize, alpha: f64, rho: f64, penalty: PyPenalty, support: PySupport, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let r = py
        .allow_threads(|| {
            let inst = finite_sim::sample_instance(n, alpha, rho, penalty.0, support.0, finite_sim::ChannelModel::IidGaussian, seed)?;
            finite_sim::solve_auto(&inst)
        })
        .map_err(py_err)?;
    let d = PyDict::new_bound(py);
    d.set_item("x", r.x)?;
    d.set_item("objective", r.objective)?;
    d.set_item("distortion", r.distortion)?;
    d.set_item("active_fraction", r.active_fraction)?;
    d.set_item("avg_power", r.avg_power)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

/// Bisection on `tune` ("lambda", "lambda0" or "lambda1") for the RS active fraction.
#[pyfunction]
fn calibrate_eta(rho: f64, penalty: PyPenalty, support: PySupport, spectral: &PySpectral, target_eta: f64, tune: &str) -> PyResult<(f64, f64)> {
    let tune: Variable = tune.parse().map_err(PyValueError::new_err)?;
    let point = harness::Point { spectral: spectral.0.clone(), rho, penalty: penalty.0, support: support.0 };
    let c = harness::calibrate_eta(&point, target_eta, tune, &RsOptions::for_rho(rho)).map_err(py_err)?;
    Ok((c.value, c.achieved))
}

/// Runs a sweep config file; returns the CSV rows as dicts of strings.
#[pyfunction]
fn run_sweep<'py>(py: Python<'py>, config_path: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = SweepConfig::from_file(config_path).map_err(py_err)?;
    let rows = py.allow_threads(|| harness::run_sweep(&cfg)).map_err(py_err)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new_bound(py);
            for (k, v) in harness::HEADER.iter().zip(r.to_record()) {
                d.set_item(*k, v)?;
            }
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn replica_lse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySpectral>()?;
    m.add_class::<PyPenalty>()?;
    m.add_class::<PySupport>()?;
    m.add_function(wrap_pyfunction!(solve_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(rs_solve, m)?)?;
    m.add_function(wrap_pyfunction!(rsb_solve, m)?)?;
    m.add_function(wrap_pyfunction!(finite_trial, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_eta, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
