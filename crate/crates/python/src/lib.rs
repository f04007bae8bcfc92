//! Python bindings: environments, coefficient tables, estimates, the
//! spectral oracle, and the convergence and variance studies.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use homog_core::convergence::{self, ConvergenceConfig, DEFAULT_FLOOR};
use homog_core::montecarlo::{self, StudyConfig};
use homog_core::reference;
use homog_core::scheme::to_f64;
use homog_core::spectral;
use homog_core::{
    Direction, Environment, EnvironmentLaw, EstimateParams, Filter, LawKind, Lattice, LinearFit,
    ScaleRule, SolveConfig, Topology,
};

fn err(e: homog_core::Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| PyValueError::new_err(format!("invalid {what} `{s}`: {e}")))
}

/// `None` → first unit vector; otherwise normalized.
fn direction(xi: Option<Vec<f64>>, dim: usize) -> PyResult<Direction> {
    match xi {
        None => Ok(Direction::unit(0, dim)),
        Some(v) => {
            if v.len() != dim {
                return Err(PyValueError::new_err(format!(
                    "xi has {} components, expected {dim}",
                    v.len()
                )));
            }
            Direction::normalized(v).map_err(err)
        }
    }
}

fn topology(periodic: bool) -> Topology {
    if periodic {
        Topology::Torus
    } else {
        Topology::Box
    }
}

fn slope(slopes: &[(usize, Option<LinearFit>)], k: usize) -> Option<(f64, f64)> {
    slopes
        .iter()
        .find(|(kk, _)| *kk == k)
        .and_then(|(_, f)| f.map(|f| (f.slope, f.slope_stderr)))
}

/// Conductance field on a box (Dirichlet) or torus (periodic) lattice.
#[pyclass(name = "Environment", module = "homog", frozen)]
struct PyEnvironment {
    inner: Environment,
}

#[pymethods]
impl PyEnvironment {
    #[staticmethod]
    #[pyo3(signature = (extents, c, periodic = true))]
    fn homogeneous(extents: Vec<usize>, c: f64, periodic: bool) -> PyResult<Self> {
        let lat = Lattice::new(extents, topology(periodic)).map_err(err)?;
        let inner = Environment::homogeneous(lat, c).map_err(err)?;
        Ok(Self { inner })
    }

    /// Built-in periodic cell by name (e.g. `checkerboard4`).
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: reference::builtin(name).map_err(err)?,
        })
    }

    /// I.i.d. sample; `law` is `twopoint:a:b:p` or `uniform:a:b`.
    #[staticmethod]
    #[pyo3(signature = (law, extents, seed, stream = 0, periodic = true))]
    fn sample(law: &str, extents: Vec<usize>, seed: u64, stream: u64, periodic: bool) -> PyResult<Self> {
        let kind: LawKind = parse("law", law)?;
        let law = EnvironmentLaw::new(kind, extents.len(), seed).map_err(err)?;
        let inner = montecarlo::sample_environment(&law, &extents, topology(periodic), stream)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Environment::from_text(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// Periodic extension of this cell to a centred box (or torus) of `side`.
    #[pyo3(signature = (side, periodic = false))]
    fn extend(&self, side: usize, periodic: bool) -> PyResult<Self> {
        let d = self.inner.dim();
        let lat = Lattice::new(vec![side; d], topology(periodic)).map_err(err)?;
        Ok(Self {
            inner: reference::restrict_periodic(&self.inner, lat).map_err(err)?,
        })
    }

    #[getter]
    fn extents(&self) -> Vec<usize> {
        self.inner.lattice().extents().to_vec()
    }

    #[getter]
    fn periodic(&self) -> bool {
        self.inner.lattice().topology() == Topology::Torus
    }

    #[getter]
    fn num_sites(&self) -> usize {
        self.inner.lattice().num_sites()
    }

    fn bounds(&self) -> (f64, f64) {
        self.inner.bounds()
    }

    /// Forward-edge conductances, site-major (`d` per site).
    fn conductances(&self) -> Vec<f64> {
        self.inner.conductances().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Environment(extents={:?}, {})",
            self.inner.lattice().extents(),
            self.inner.lattice().topology().as_str()
        )
    }
}

/// Exact coefficient tables of the order-`k` scheme, as `"p/q"` strings.
#[pyclass(name = "Coefficients", module = "homog", frozen)]
struct PyCoefficients {
    #[pyo3(get)]
    k: usize,
    #[pyo3(get)]
    c: Vec<String>,
    #[pyo3(get)]
    a: Vec<String>,
    #[pyo3(get)]
    eta: Vec<String>,
    /// `(i, j, "p/q")` for `i < j`.
    #[pyo3(get)]
    nu: Vec<(usize, usize, String)>,
    eta_f64: Vec<f64>,
}

#[pymethods]
impl PyCoefficients {
    fn eta_values(&self) -> Vec<f64> {
        self.eta_f64.clone()
    }
}

#[pyfunction]
fn coefficients(k: usize) -> PyResult<PyCoefficients> {
    let t = homog_core::coefficients(k).map_err(err)?;
    Ok(PyCoefficients {
        k,
        c: t.c().iter().map(|r| r.to_string()).collect(),
        a: t.a().iter().map(|r| r.to_string()).collect(),
        eta: t.eta().iter().map(|r| r.to_string()).collect(),
        nu: t.nu_entries().map(|(i, j, r)| (i, j, r.to_string())).collect(),
        eta_f64: t.eta().iter().map(to_f64).collect(),
    })
}

#[pyfunction]
#[pyo3(signature = (env, xi = None, tol = 1e-12))]
fn exact_homogenized(env: &PyEnvironment, xi: Option<Vec<f64>>, tol: f64) -> PyResult<f64> {
    let xi = direction(xi, env.inner.dim())?;
    let h = homog_core::exact_homogenized(&env.inner, &xi, &SolveConfig::with_tolerance(tol))
        .map_err(err)?;
    Ok(h.value)
}

#[pyclass(name = "EstimateReport", module = "homog", frozen, get_all)]
struct PyEstimateReport {
    estimate: f64,
    energy_term: f64,
    eta_term: f64,
    nu_term: f64,
    max_residual: f64,
    iterations: Vec<usize>,
}

/// `ξ·A_{μ,k,R,L}ξ` on the environment's own domain, mask half-width `L`.
#[pyfunction]
#[pyo3(signature = (env, mu, k, half_width, filter = "smooth-bump", xi = None, tol = 1e-12))]
fn estimate(
    env: &PyEnvironment,
    mu: f64,
    k: usize,
    half_width: f64,
    filter: &str,
    xi: Option<Vec<f64>>,
    tol: f64,
) -> PyResult<PyEstimateReport> {
    let params = EstimateParams {
        mu,
        k,
        half_width,
        filter: parse::<Filter>("filter", filter)?,
        xi: direction(xi, env.inner.dim())?,
    };
    let r = homog_core::estimate(&env.inner, &params, &SolveConfig::with_tolerance(tol))
        .map_err(err)?;
    Ok(PyEstimateReport {
        estimate: r.estimate,
        energy_term: r.energy_term,
        eta_term: r.eta_term,
        nu_term: r.nu_term,
        max_residual: r.max_residual,
        iterations: r.iterations,
    })
}

/// Spectral measure of the drift on a small periodic cell (dense oracle).
#[pyclass(name = "SpectralMeasure", module = "homog", frozen)]
struct PySpectralMeasure {
    inner: spectral::SpectralMeasure,
}

#[pymethods]
impl PySpectralMeasure {
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap()
    }

    #[getter]
    fn mean_xi_a_xi(&self) -> f64 {
        self.inner.mean_xi_a_xi
    }

    fn homogenized(&self) -> f64 {
        self.inner.homogenized()
    }

    fn a_mu_k(&self, mu: f64, k: usize) -> PyResult<f64> {
        spectral::a_mu_k_spectral(&self.inner, self.inner.mean_xi_a_xi, mu, k).map_err(err)
    }

    fn systematic_error(&self, mu: f64, k: usize) -> PyResult<f64> {
        spectral::systematic_error(&self.inner, mu, k).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (env, xi = None))]
fn spectral_measure(env: &PyEnvironment, xi: Option<Vec<f64>>) -> PyResult<PySpectralMeasure> {
    let xi = direction(xi, env.inner.dim())?;
    Ok(PySpectralMeasure {
        inner: homog_core::spectral_measure(&env.inner, &xi).map_err(err)?,
    })
}

#[pyclass(name = "ConvergenceResult", module = "homog", frozen)]
struct PyConvergenceResult {
    #[pyo3(get)]
    reference: f64,
    /// `(k, R, side, mu, L, estimate, error, max_residual)`.
    #[pyo3(get)]
    rows: Vec<(usize, usize, usize, f64, f64, f64, f64, f64)>,
    slopes: Vec<(usize, Option<LinearFit>)>,
}

#[pymethods]
impl PyConvergenceResult {
    /// `(slope, stderr)` of log error against log R, or None.
    fn slope(&self, k: usize) -> Option<(f64, f64)> {
        slope(&self.slopes, k)
    }
}

/// Dirichlet-box convergence study of a periodic cell; `unit=None` counts
/// `R` in periodic cells.
#[pyfunction]
#[pyo3(signature = (
    cell, ks, sizes, mu_rule = "250*R^-1.5", l_rule = "R/6", filter = "smooth-bump",
    xi = None, unit = None, floor = DEFAULT_FLOOR, tol = 1e-12
))]
#[allow(clippy::too_many_arguments)]
fn convergence_study(
    py: Python<'_>,
    cell: &PyEnvironment,
    ks: Vec<usize>,
    sizes: Vec<usize>,
    mu_rule: &str,
    l_rule: &str,
    filter: &str,
    xi: Option<Vec<f64>>,
    unit: Option<usize>,
    floor: f64,
    tol: f64,
) -> PyResult<PyConvergenceResult> {
    let cfg = ConvergenceConfig {
        ks,
        sizes,
        mu_rule: parse::<ScaleRule>("mu rule", mu_rule)?,
        l_rule: parse::<ScaleRule>("L rule", l_rule)?,
        filter: parse("filter", filter)?,
        xi: direction(xi, cell.inner.dim())?,
        unit,
        floor,
        solve: SolveConfig::with_tolerance(tol),
    };
    let cell = cell.inner.clone();
    let res = py
        .detach(|| convergence::convergence_study(&cell, &cfg))
        .map_err(err)?;
    Ok(PyConvergenceResult {
        reference: res.reference,
        rows: res
            .rows
            .iter()
            .map(|r| {
                (r.k, r.size, r.side, r.mu, r.half_width, r.estimate, r.error, r.max_residual)
            })
            .collect(),
        slopes: res.slopes,
    })
}

#[pyclass(name = "StudyResult", module = "homog", frozen)]
struct PyStudyResult {
    /// `(L, k, sample_index, stream_index, estimate, residual)`.
    #[pyo3(get)]
    samples: Vec<(usize, usize, usize, u64, f64, f64)>,
    /// `(L, k, n, mean, variance, stderr)`.
    #[pyo3(get)]
    sizes: Vec<(usize, usize, usize, f64, f64, f64)>,
    #[pyo3(get)]
    flagged: usize,
    slopes: Vec<(usize, Option<LinearFit>)>,
}

#[pymethods]
impl PyStudyResult {
    /// `(slope, stderr)` of log Var against log L, or None.
    fn slope(&self, k: usize) -> Option<(f64, f64)> {
        slope(&self.slopes, k)
    }
}

/// Monte Carlo variance study over i.i.d. torus samples.
#[pyfunction]
#[pyo3(signature = (
    law, ks, sizes, samples, dim = 2, seed = 0, mu_rule = "L^-2", side_factor = 2.0,
    filter = "smooth-bump", xi = None, tol = 1e-10, threads = 0
))]
#[allow(clippy::too_many_arguments)]
fn variance_study(
    py: Python<'_>,
    law: &str,
    ks: Vec<usize>,
    sizes: Vec<usize>,
    samples: usize,
    dim: usize,
    seed: u64,
    mu_rule: &str,
    side_factor: f64,
    filter: &str,
    xi: Option<Vec<f64>>,
    tol: f64,
    threads: usize,
) -> PyResult<PyStudyResult> {
    let cfg = StudyConfig {
        law: EnvironmentLaw::new(parse("law", law)?, dim, seed).map_err(err)?,
        mu_rule: parse("mu rule", mu_rule)?,
        ks,
        sizes,
        samples_per_size: samples,
        filter: parse("filter", filter)?,
        xi: direction(xi, dim)?,
        side_factor,
        solve: SolveConfig::with_tolerance(tol),
        threads,
    };
    let res = py.detach(|| montecarlo::variance_study(&cfg)).map_err(err)?;
    Ok(PyStudyResult {
        samples: res
            .samples
            .iter()
            .map(|s| (s.size, s.k, s.sample_index, s.stream_index, s.estimate, s.residual))
            .collect(),
        sizes: res
            .sizes
            .iter()
            .map(|s| (s.size, s.k, s.n, s.mean, s.variance, s.stderr))
            .collect(),
        flagged: res.flagged,
        slopes: res.slopes,
    })
}

#[pymodule]
fn homog(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyCoefficients>()?;
    m.add_class::<PyEstimateReport>()?;
    m.add_class::<PySpectralMeasure>()?;
    m.add_class::<PyConvergenceResult>()?;
    m.add_class::<PyStudyResult>()?;
    m.add_function(wrap_pyfunction!(coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(exact_homogenized, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_measure, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(variance_study, m)?)?;
    m.add("MAX_ORDER", homog_core::scheme::MAX_ORDER)?;
    m.add("CHECKERBOARD4_AHOM", reference::CHECKERBOARD4_AHOM)?;
    Ok(())
}
