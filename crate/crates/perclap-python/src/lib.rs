//! Python bindings for the percolation Laplacian laboratory.
//!
//! The module mirrors the Rust surface: geometries, sampled edge
//! configurations, cluster decompositions, assembled operators, spectral
//! queries, IDS estimation with its Laplace transform, the continuous-time
//! walk, and the mechanism checks.  Keyword arguments take the same string
//! names as the CLI and the JSON config files ("periodic", "neumann",
//! "graph_restriction", ...).  Everything is deterministic given the seeds.
//!
//! Build with `cargo build -p perclap-python --release` and import the
//! produced cdylib as `perclap`; see python/smoke_test.py.

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;

use perclap_core as core;

fn err(e: core::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_topology(s: &str) -> PyResult<core::Topology> {
    match s {
        "free" => Ok(core::Topology::Free),
        "periodic" => Ok(core::Topology::Periodic),
        other => Err(PyValueError::new_err(format!(
            "unknown topology '{other}' (expected 'free' or 'periodic')"
        ))),
    }
}

fn topology_name(t: core::Topology) -> &'static str {
    match t {
        core::Topology::Free => "free",
        core::Topology::Periodic => "periodic",
    }
}

fn parse_bc(s: &str) -> PyResult<core::BoundaryCondition> {
    match s {
        "neumann" => Ok(core::BoundaryCondition::Neumann),
        "pseudo_dirichlet" => Ok(core::BoundaryCondition::PseudoDirichlet),
        "dirichlet" => Ok(core::BoundaryCondition::Dirichlet),
        other => Err(PyValueError::new_err(format!(
            "unknown boundary condition '{other}' (expected 'neumann', 'pseudo_dirichlet' or 'dirichlet')"
        ))),
    }
}

fn parse_scheme(s: &str) -> PyResult<core::RestrictionScheme> {
    match s {
        "graph_restriction" => Ok(core::RestrictionScheme::GraphRestriction),
        "neumann_boundary" => Ok(core::RestrictionScheme::NeumannBoundary),
        other => Err(PyValueError::new_err(format!(
            "unknown restriction scheme '{other}' (expected 'graph_restriction' or 'neumann_boundary')"
        ))),
    }
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    match v {
        serde_json::Value::Null => Ok(py.None()),
        serde_json::Value::Bool(b) => b.into_py_any(py),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_py_any(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_py_any(py),
        },
        serde_json::Value::String(s) => s.into_py_any(py),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

/// Finite box of the hypercubic lattice.
#[pyclass(frozen)]
struct BoxGeometry {
    inner: core::BoxGeometry,
}

#[pymethods]
impl BoxGeometry {
    #[new]
    #[pyo3(signature = (d, side, topology = "periodic"))]
    fn new(d: usize, side: usize, topology: &str) -> PyResult<Self> {
        let inner = core::BoxGeometry::new(d, side, parse_topology(topology)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn side(&self) -> usize {
        self.inner.side()
    }

    #[getter]
    fn topology(&self) -> &'static str {
        topology_name(self.inner.topology())
    }

    #[getter]
    fn vertices(&self) -> usize {
        self.inner.vertices()
    }

    #[getter]
    fn coordination(&self) -> usize {
        self.inner.coordination()
    }

    /// Index of the box center, the walk origin of annealed_return.
    fn center(&self) -> usize {
        self.inner.center()
    }

    fn __repr__(&self) -> String {
        format!(
            "BoxGeometry(d={}, side={}, topology='{}')",
            self.inner.d(),
            self.inner.side(),
            topology_name(self.inner.topology())
        )
    }
}

/// One sampled Bernoulli edge configuration.
#[pyclass(frozen)]
struct Configuration {
    inner: core::Configuration,
}

#[pymethods]
impl Configuration {
    #[getter]
    fn geometry(&self) -> BoxGeometry {
        BoxGeometry {
            inner: *self.inner.geometry(),
        }
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    fn open_count(&self) -> usize {
        self.inner.open_count()
    }

    fn closed_count(&self) -> usize {
        self.inner.closed_count()
    }

    fn __repr__(&self) -> String {
        let g = self.inner.geometry();
        format!(
            "Configuration(d={}, side={}, p={}, seed={}, open={})",
            g.d(),
            g.side(),
            self.inner.p(),
            self.inner.seed(),
            self.inner.open_count()
        )
    }
}

/// Union-find decomposition of the open subgraph into clusters.
#[pyclass(frozen)]
struct ClusterDecomposition {
    inner: core::ClusterDecomposition,
    vertices: usize,
}

#[pymethods]
impl ClusterDecomposition {
    #[new]
    fn new(config: &Configuration) -> Self {
        Self {
            inner: core::ClusterDecomposition::new(&config.inner),
            vertices: config.inner.geometry().vertices(),
        }
    }

    fn cluster_count(&self) -> usize {
        self.inner.cluster_count()
    }

    fn label(&self, v: usize) -> PyResult<u32> {
        if v >= self.vertices {
            return Err(PyIndexError::new_err(format!(
                "vertex {v} out of range for a box with {} vertices",
                self.vertices
            )));
        }
        Ok(self.inner.label(v))
    }

    fn sizes(&self) -> Vec<u32> {
        self.inner.sizes().to_vec()
    }

    /// (label, size) of the largest cluster.
    fn largest_cluster(&self) -> (u32, usize) {
        self.inner.largest_cluster()
    }

    /// Label of the wrapping/spanning cluster standing in for the infinite
    /// one, or None when no cluster wraps.
    fn percolating_proxy(&self) -> Option<u32> {
        self.inner.percolating_proxy()
    }

    fn members(&self, label: u32) -> Vec<usize> {
        self.inner.members(label)
    }

    fn __repr__(&self) -> String {
        format!("ClusterDecomposition(clusters={})", self.inner.cluster_count())
    }
}

/// Assembled sparse symmetric operator.
#[pyclass(frozen, name = "Operator")]
struct Operator {
    inner: core::SparseSymmetricOperator,
}

#[pymethods]
impl Operator {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn coordination(&self) -> usize {
        self.inner.coordination()
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply(&x).map_err(err)
    }

    fn quadratic_form(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.quadratic_form(&x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Operator(n={})", self.inner.n())
    }
}

/// Mean integrated density of states on an energy grid.
#[pyclass(frozen)]
struct IdsCurve {
    inner: core::IdsCurve,
}

#[pymethods]
impl IdsCurve {
    #[getter]
    fn bc(&self) -> String {
        self.inner.bc.to_string()
    }

    #[getter]
    fn scheme(&self) -> String {
        self.inner.scheme.to_string()
    }

    #[getter]
    fn part(&self) -> String {
        self.inner.part.to_string()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    #[getter]
    fn geometry(&self) -> BoxGeometry {
        BoxGeometry {
            inner: self.inner.geometry,
        }
    }

    #[getter]
    fn energy_grid(&self) -> Vec<f64> {
        self.inner.energy_grid.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn half_widths(&self) -> Vec<f64> {
        self.inner.half_widths.clone()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }

    #[getter]
    fn excluded_samples(&self) -> usize {
        self.inner.excluded_samples
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "IdsCurve(part='{}', p={}, points={}, samples={})",
            self.inner.part,
            self.inner.p,
            self.inner.energy_grid.len(),
            self.inner.samples
        )
    }
}

/// Laplace transform of an IDS curve, or an annealed walk return series
/// (both live on a spectral time grid).
#[pyclass(frozen)]
struct LaplaceCurve {
    inner: core::LaplaceCurve,
}

#[pymethods]
impl LaplaceCurve {
    #[getter]
    fn t_grid(&self) -> Vec<f64> {
        self.inner.t_grid.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn half_widths(&self) -> Vec<f64> {
        self.inner.half_widths.clone()
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.clone()
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }

    #[getter]
    fn excluded_samples(&self) -> usize {
        self.inner.excluded_samples
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "LaplaceCurve(method='{}', points={}, samples={})",
            self.inner.method,
            self.inner.t_grid.len(),
            self.inner.samples
        )
    }
}

/// Least-squares power-law fit on a log-log window.
#[pyclass(frozen)]
struct FitReport {
    inner: core::FitReport,
}

#[pymethods]
impl FitReport {
    #[getter]
    fn slope(&self) -> f64 {
        self.inner.slope
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept
    }

    #[getter]
    fn r_squared(&self) -> f64 {
        self.inner.r_squared
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points
    }

    #[getter]
    fn n_dropped(&self) -> usize {
        self.inner.n_dropped
    }

    #[getter]
    fn window(&self) -> (f64, f64) {
        (self.inner.window[0], self.inner.window[1])
    }

    fn __repr__(&self) -> String {
        format!("FitReport({})", self.inner)
    }
}

/// Outcome of one mechanism check; truthy iff it passed.
#[pyclass(frozen)]
struct MechanismReport {
    inner: core::MechanismReport,
}

#[pymethods]
impl MechanismReport {
    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn passed(&self) -> bool {
        self.inner.pass
    }

    #[getter]
    fn violation(&self) -> f64 {
        self.inner.violation
    }

    /// Check-specific diagnostics as plain Python objects.
    #[getter]
    fn parameters(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        json_to_py(py, &self.inner.parameters)
    }

    fn __bool__(&self) -> bool {
        self.inner.pass
    }

    fn __repr__(&self) -> String {
        format!("MechanismReport({})", self.inner)
    }
}

/// Zero-energy spectral mass of the Neumann operator next to the cluster
/// statistics it must reproduce.
#[pyclass(frozen)]
struct ZeroModeReport {
    inner: core::ZeroModeReport,
}

#[pymethods]
impl ZeroModeReport {
    #[getter]
    fn nn_at_zero(&self) -> f64 {
        self.inner.nn_at_zero
    }

    #[getter]
    fn nn_half_width(&self) -> f64 {
        self.inner.nn_half_width
    }

    #[getter]
    fn component_density(&self) -> f64 {
        self.inner.component_density
    }

    #[getter]
    fn isolated_density(&self) -> f64 {
        self.inner.isolated_density
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }

    fn __repr__(&self) -> String {
        format!(
            "ZeroModeReport(nn_at_zero={}, component_density={}, samples={})",
            self.inner.nn_at_zero, self.inner.component_density, self.inner.samples
        )
    }
}

#[pyfunction]
fn sample_configuration(geometry: &BoxGeometry, p: f64, seed: u64) -> PyResult<Configuration> {
    let inner = core::sample_configuration(geometry.inner, p, seed).map_err(err)?;
    Ok(Configuration { inner })
}

#[pyfunction]
#[pyo3(signature = (config, bc = "neumann", scheme = "graph_restriction"))]
fn assemble_laplacian(config: &Configuration, bc: &str, scheme: &str) -> PyResult<Operator> {
    let inner = core::assemble_laplacian(&config.inner, parse_bc(bc)?, parse_scheme(scheme)?)
        .map_err(err)?;
    Ok(Operator { inner })
}

#[pyfunction]
fn full_spectrum(op: &Operator) -> PyResult<Vec<f64>> {
    core::full_spectrum(&op.inner).map_err(err)
}

#[pyfunction]
fn count_below(op: &Operator, energy: f64) -> PyResult<usize> {
    core::count_below(&op.inner, energy).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (op, k = 1))]
fn smallest_eigenvalues(op: &Operator, k: usize) -> PyResult<Vec<f64>> {
    let pairs = core::smallest_eigenvalue(&op.inner, k).map_err(err)?;
    Ok(pairs.into_iter().map(|p| p.value).collect())
}

#[pyfunction]
fn spectral_gap(geometry: &BoxGeometry) -> PyResult<f64> {
    core::spectral_gap(geometry.inner).map_err(err)
}

#[pyfunction]
fn heat_kernel_diag(op: &Operator, x: usize, t: f64) -> PyResult<f64> {
    core::heat_kernel_diag(&op.inner, x, t).map_err(err)
}

/// Sup-norm distance between the checkerboard conjugate of `a` and the
/// spectral mirror of `b`; zero exactly when the two operators are dual.
#[pyfunction]
fn involution_dual_residual(geometry: &BoxGeometry, a: &Operator, b: &Operator) -> PyResult<f64> {
    core::involution_dual_residual(&geometry.inner, &a.inner, &b.inner).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (geometry, p, energy_grid, samples, seed, bc = "neumann", scheme = "graph_restriction"))]
fn estimate_ids(
    geometry: &BoxGeometry,
    p: f64,
    energy_grid: Vec<f64>,
    samples: usize,
    seed: u64,
    bc: &str,
    scheme: &str,
) -> PyResult<IdsCurve> {
    let inner = core::estimate_ids(
        parse_bc(bc)?,
        parse_scheme(scheme)?,
        geometry.inner,
        p,
        &energy_grid,
        samples,
        seed,
    )
    .map_err(err)?;
    Ok(IdsCurve { inner })
}

/// Neumann IDS restricted to the percolating proxy cluster, normalized by
/// the full box volume.
#[pyfunction]
fn ids_infinite_part(
    geometry: &BoxGeometry,
    p: f64,
    energy_grid: Vec<f64>,
    samples: usize,
    seed: u64,
) -> PyResult<IdsCurve> {
    let inner =
        core::ids_infinite_part(geometry.inner, p, &energy_grid, samples, seed).map_err(err)?;
    Ok(IdsCurve { inner })
}

#[pyfunction]
fn zero_mode_density(
    geometry: &BoxGeometry,
    p: f64,
    samples: usize,
    seed: u64,
) -> PyResult<ZeroModeReport> {
    let inner = core::zero_mode_density(geometry.inner, p, samples, seed).map_err(err)?;
    Ok(ZeroModeReport { inner })
}

#[pyfunction]
fn laplace_transform(curve: &IdsCurve, t_grid: Vec<f64>) -> PyResult<LaplaceCurve> {
    let inner = core::laplace_transform(&curve.inner, &t_grid).map_err(err)?;
    Ok(LaplaceCurve { inner })
}

#[pyfunction]
fn fit_van_hove(curve: &IdsCurve, window: (f64, f64), n_zero: f64) -> PyResult<FitReport> {
    let inner = core::fit_van_hove(&curve.inner, window, n_zero).map_err(err)?;
    Ok(FitReport { inner })
}

#[pyfunction]
fn fit_lifshits(curve: &IdsCurve, window: (f64, f64)) -> PyResult<FitReport> {
    let inner = core::fit_lifshits(&curve.inner, window).map_err(err)?;
    Ok(FitReport { inner })
}

#[pyfunction]
fn fit_heat_decay(curve: &LaplaceCurve, window: (f64, f64)) -> PyResult<FitReport> {
    let inner = core::fit_heat_decay(&curve.inner, window).map_err(err)?;
    Ok(FitReport { inner })
}

/// Monte Carlo return probability of the walk started at `x`, as the pair
/// (probability, half_width).  Matches heat_kernel_diag at the same
/// physical time.
#[pyfunction]
fn return_probability(
    config: &Configuration,
    x: usize,
    t: f64,
    n_walks: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let est = core::return_probability(&config.inner, x, t, n_walks, seed).map_err(err)?;
    Ok((est.probability, est.half_width))
}

/// Annealed return probability on the percolating cluster over a spectral
/// time grid; configurations whose proxy misses the origin count as zero.
#[pyfunction]
fn annealed_return(
    geometry: &BoxGeometry,
    p: f64,
    t_grid: Vec<f64>,
    configs: usize,
    walks_per_config: usize,
    seed: u64,
) -> PyResult<LaplaceCurve> {
    let inner =
        core::annealed_return(geometry.inner, p, &t_grid, configs, walks_per_config, seed)
            .map_err(err)?;
    Ok(LaplaceCurve { inner })
}

#[pyfunction]
fn dirichlet_cube_scaling(d: usize, sides: Vec<usize>) -> PyResult<FitReport> {
    let inner = core::dirichlet_cube_scaling(d, &sides).map_err(err)?;
    Ok(FitReport { inner })
}

#[pyfunction]
fn tauberian_check(delta: f64, t0: f64) -> PyResult<MechanismReport> {
    let inner = core::tauberian_check(delta, t0).map_err(err)?;
    Ok(MechanismReport { inner })
}

#[pyfunction]
fn heaviside_envelope_check(samples: usize, seed: u64) -> MechanismReport {
    MechanismReport {
        inner: core::heaviside_envelope_check(samples, seed),
    }
}

#[pyfunction]
fn finite_cluster_tail_check(
    geometry: &BoxGeometry,
    p: f64,
    e_grid: Vec<f64>,
    samples: usize,
    seed: u64,
) -> PyResult<MechanismReport> {
    let inner = core::finite_cluster_tail_check(geometry.inner, p, &e_grid, samples, seed)
        .map_err(err)?;
    Ok(MechanismReport { inner })
}

/// Per-sample seed for index `index` under `master`, the same derivation
/// the Monte Carlo drivers use internally.
#[pyfunction]
fn derive_seed(master: u64, index: u64) -> u64 {
    core::rng::derive_seed(master, index)
}

#[pymodule]
fn perclap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BoxGeometry>()?;
    m.add_class::<Configuration>()?;
    m.add_class::<ClusterDecomposition>()?;
    m.add_class::<Operator>()?;
    m.add_class::<IdsCurve>()?;
    m.add_class::<LaplaceCurve>()?;
    m.add_class::<FitReport>()?;
    m.add_class::<MechanismReport>()?;
    m.add_class::<ZeroModeReport>()?;
    m.add_function(wrap_pyfunction!(sample_configuration, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(full_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(count_below, m)?)?;
    m.add_function(wrap_pyfunction!(smallest_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_gap, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel_diag, m)?)?;
    m.add_function(wrap_pyfunction!(involution_dual_residual, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_ids, m)?)?;
    m.add_function(wrap_pyfunction!(ids_infinite_part, m)?)?;
    m.add_function(wrap_pyfunction!(zero_mode_density, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_transform, m)?)?;
    m.add_function(wrap_pyfunction!(fit_van_hove, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lifshits, m)?)?;
    m.add_function(wrap_pyfunction!(fit_heat_decay, m)?)?;
    m.add_function(wrap_pyfunction!(return_probability, m)?)?;
    m.add_function(wrap_pyfunction!(annealed_return, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet_cube_scaling, m)?)?;
    m.add_function(wrap_pyfunction!(tauberian_check, m)?)?;
    m.add_function(wrap_pyfunction!(heaviside_envelope_check, m)?)?;
    m.add_function(wrap_pyfunction!(finite_cluster_tail_check, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
