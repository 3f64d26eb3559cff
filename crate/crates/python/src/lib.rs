//! Python bindings: gPC bookkeeping, KL spectra, the secant predictor and
//! the experiment runner, exposed as the `rbsgm` extension module.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rbsgm_core::config::RunConfig;
use rbsgm_core::rbsgm as rbsgm_driver;
use rbsgm_core::{experiment, gpc, oracle, randfield};

fn to_py_err(e: rbsgm_core::Error) -> PyErr {
    match e {
        rbsgm_core::Error::InvalidArgument(_) | rbsgm_core::Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Multi-index set of total degree <= p in m uniform variables.
#[pyclass(name = "GpcBasis")]
struct PyGpcBasis {
    inner: gpc::GpcBasis,
}

#[pymethods]
impl PyGpcBasis {
    #[new]
    fn new(m: usize, p: usize) -> PyResult<Self> {
        Ok(PyGpcBasis {
            inner: gpc::enumerate_indices(m, p).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p
    }

    /// Basis dimension (m+p)! / (m! p!).
    #[getter]
    fn n_p(&self) -> usize {
        self.inner.n_p
    }

    /// The graded multi-index list, constant polynomial first.
    fn indices(&self) -> Vec<Vec<u32>> {
        self.inner.indices.clone()
    }

    /// Evaluate all basis polynomials at a point of [-1, 1]^m.
    fn evaluate(&self, xi: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.evaluate(&xi).map_err(to_py_err)
    }

    /// Coupling matrix G_ij(l, n) = E[xi_i Phi_l xi_j Phi_n] as COO triplets
    /// (rows, cols, values).
    fn coupling(&self, i: usize, j: usize) -> PyResult<(Vec<usize>, Vec<usize>, Vec<f64>)> {
        let g = gpc::assemble_g(i, j, &self.inner).map_err(to_py_err)?;
        let mut rows = Vec::with_capacity(g.nnz());
        let mut cols = Vec::with_capacity(g.nnz());
        let mut vals = Vec::with_capacity(g.nnz());
        for r in 0..g.nrows() {
            let (cs, vs) = g.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        Ok((rows, cols, vals))
    }

    fn __repr__(&self) -> String {
        format!(
            "GpcBasis(m={}, p={}, n_p={})",
            self.inner.m, self.inner.p, self.inner.n_p
        )
    }
}

/// Recurrence coefficient k / sqrt(4k^2 - 1) of the orthonormal Legendre
/// family on uniform [-1, 1].
#[pyfunction]
fn legendre_beta(k: usize) -> PyResult<f64> {
    gpc::legendre_beta(k).map_err(to_py_err)
}

/// Leading eigenvalues of exp(-|x-y| / corr_len) on [lo, hi], descending.
#[pyfunction]
fn kl_eigenvalues_1d(corr_len: f64, lo: f64, hi: f64, count: usize) -> PyResult<Vec<f64>> {
    Ok(randfield::kl_1d(corr_len, (lo, hi), count)
        .map_err(to_py_err)?
        .into_iter()
        .map(|m| m.eigenvalue)
        .collect())
}

/// Nystrom verification values for the same kernel (midpoint rule with
/// Richardson extrapolation over npts and 2*npts).
#[pyfunction]
fn kl_eigenvalues_1d_nystrom(
    corr_len: f64,
    lo: f64,
    hi: f64,
    npts: usize,
    count: usize,
) -> Vec<f64> {
    oracle::nystrom_1d_eigenvalues_extrapolated(corr_len, (lo, hi), npts, count)
}

/// Secant step on the log10 residual curve: the reduced dimension predicted
/// to reach tol, rounded up and clamped into [r2 + 1, nmax].
#[pyfunction]
fn secant_predict(
    r1: usize,
    h1: f64,
    r2: usize,
    h2: f64,
    tol: f64,
    ns: usize,
    nmax: usize,
) -> usize {
    rbsgm_driver::secant_predict(r1, h1, r2, h2, tol, ns, nmax)
}

/// Run one experiment from TOML config text; artifacts are written into
/// `out_dir` and the report JSON is returned as a string.
#[pyfunction]
fn run_experiment(config_toml: &str, out_dir: &str) -> PyResult<String> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(to_py_err)?;
    let code = experiment::run_experiment(&cfg, std::path::Path::new(out_dir))
        .map_err(to_py_err)?;
    let report = std::fs::read_to_string(std::path::Path::new(out_dir).join("report.json"))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    if code != experiment::EXIT_OK {
        // report still useful; signal non-convergence through the JSON
        return Ok(report);
    }
    Ok(report)
}

/// Run the dense-oracle verification suites; returns (name, passed, detail)
/// per check.
#[pyfunction]
fn oracle_check() -> Vec<(String, bool, String)> {
    experiment::oracle_check()
        .into_iter()
        .map(|c| (c.name, c.passed, c.detail))
        .collect()
}

#[pymodule]
fn rbsgm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGpcBasis>()?;
    m.add_function(wrap_pyfunction!(legendre_beta, m)?)?;
    m.add_function(wrap_pyfunction!(kl_eigenvalues_1d, m)?)?;
    m.add_function(wrap_pyfunction!(kl_eigenvalues_1d_nystrom, m)?)?;
    m.add_function(wrap_pyfunction!(secant_predict, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}
