//! Python bindings for `resonant`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use resonant::engine::{self, Dynamics, StepControl};
use resonant::families::{self, Arity};
use resonant::manifold::{self, ManifoldPoint, PeriodResult, RECURRENCE_THRESHOLD};
use resonant::mode_space::{ModeVector, WeightParameter};
use resonant::{identity, stationary, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::UnknownFamily(_) | Error::Parse(_) | Error::CutoffMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Accepts a positive float or the string "inf".
fn weight(g: &Bound<'_, PyAny>) -> PyResult<WeightParameter> {
    if let Ok(s) = g.extract::<String>() {
        return WeightParameter::parse(&s).map_err(to_py);
    }
    let v: f64 = g.extract()?;
    if v.is_infinite() && v > 0.0 {
        return Ok(WeightParameter::Infinite);
    }
    WeightParameter::finite(v).map_err(to_py)
}

fn weight_or(g: Option<&Bound<'_, PyAny>>, family: &families::CoefficientFamily) -> PyResult<WeightParameter> {
    g.map(weight).transpose().map(|w| w.unwrap_or_else(|| family.weight()))
}

fn weight_to_py(g: WeightParameter) -> f64 {
    g.value().unwrap_or(f64::INFINITY)
}

fn modes(v: Vec<Complex64>) -> PyResult<ModeVector> {
    ModeVector::new(v).map_err(to_py)
}

#[pyclass(name = "Family", module = "resonant_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFamily {
    inner: families::CoefficientFamily,
}

#[pymethods]
impl PyFamily {
    #[new]
    #[pyo3(signature = (name, delta=None))]
    fn new(name: &str, delta: Option<f64>) -> PyResult<Self> {
        families::CoefficientFamily::from_name(name, delta).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        families::FAMILY_NAMES.to_vec()
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn arity(&self) -> &'static str {
        self.inner.arity().name()
    }

    /// Natural weight parameter (`inf` for the lowest-Landau-level families).
    #[getter]
    #[allow(non_snake_case)]
    fn G(&self) -> f64 {
        weight_to_py(self.inner.weight())
    }

    fn s(&self, idx: Vec<usize>) -> PyResult<f64> {
        self.inner.s(&idx).map_err(to_py)
    }

    fn c(&self, idx: Vec<usize>) -> PyResult<f64> {
        self.inner.c(&idx).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Family('{}')", self.inner.name())
    }
}

/// Equations of motion for a family at a fixed cutoff.
#[pyclass(name = "System", module = "resonant_py", frozen)]
struct PySystem {
    inner: engine::System,
    family: families::CoefficientFamily,
}

#[pymethods]
impl PySystem {
    #[new]
    fn new(family: &PyFamily, cutoff: usize) -> PyResult<Self> {
        let inner = engine::System::auto(&family.inner, cutoff).map_err(to_py)?;
        Ok(Self { inner, family: family.inner })
    }

    #[getter]
    fn cutoff(&self) -> usize {
        self.inner.cutoff()
    }

    #[getter]
    fn family(&self) -> PyFamily {
        PyFamily { inner: self.family }
    }

    /// `F(α)`, so that `i dα/dt = F(α)`.
    fn rhs(&self, py: Python<'_>, alpha: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        let a = modes(alpha)?;
        let f = py.detach(|| match self.inner.arity() {
            Arity::Cubic => engine::rhs_cubic(&self.inner, &a),
            Arity::Quintic => engine::rhs_quintic(&self.inner, &a),
        });
        f.map(ModeVector::into_vec).map_err(to_py)
    }

    /// `N`, `E`, `H` and the charge `Z` of a state.
    #[pyo3(signature = (alpha, G=None))]
    #[allow(non_snake_case)]
    fn conserved<'py>(
        &self,
        py: Python<'py>,
        alpha: Vec<Complex64>,
        G: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let g = weight_or(G, &self.family)?;
        let c = engine::conserved_set(&modes(alpha)?, g, &self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("N", c.norm)?;
        d.set_item("E", c.energy)?;
        d.set_item("H", c.hamiltonian)?;
        d.set_item("Z", c.charge)?;
        Ok(d)
    }

    /// RK4 from `alpha` to `t_end`; a sample is kept every `sample_every` steps.
    #[pyo3(signature = (alpha, t_end, step, sample_every=1, G=None))]
    #[allow(non_snake_case)]
    fn integrate(
        &self,
        py: Python<'_>,
        alpha: Vec<Complex64>,
        t_end: f64,
        step: f64,
        sample_every: usize,
        G: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<PyTrajectory> {
        let g = weight_or(G, &self.family)?;
        let a = modes(alpha)?;
        let traj = py
            .detach(|| engine::integrate(&self.inner, g, &a, t_end, StepControl::fixed(step, sample_every)))
            .map_err(to_py)?;
        Ok(PyTrajectory { inner: traj, g })
    }

    /// Frequency `λ` and residual `‖F − λα‖/‖α‖` over modes `n <= window`.
    fn verify_stationary(&self, alpha: Vec<Complex64>, window: usize) -> PyResult<(f64, f64)> {
        let v = stationary::verify_stationary(&self.inner, &modes(alpha)?, window).map_err(to_py)?;
        Ok((v.lambda, v.residual))
    }
}

#[pyclass(name = "Trajectory", module = "resonant_py", frozen)]
struct PyTrajectory {
    inner: engine::Trajectory,
    g: WeightParameter,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn states(&self) -> Vec<Vec<Complex64>> {
        self.inner.states.iter().map(|s| s.as_slice().to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Maximum relative drift of `N`, `E`, `H` and `|Z|`.
    fn drift<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = self.inner.drift();
        let out = PyDict::new(py);
        out.set_item("N", d.norm)?;
        out.set_item("E", d.energy)?;
        out.set_item("H", d.hamiltonian)?;
        out.set_item("Z", d.charge_abs)?;
        Ok(out)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    /// Recurrence time of the spectrum `|β_n|²`, or `None`.
    fn spectrum_period(&self) -> PyResult<Option<(f64, f64)>> {
        let r = manifold::spectrum_period(&self.inner, self.g, None, RECURRENCE_THRESHOLD).map_err(to_py)?;
        Ok(match r {
            PeriodResult::Found { period, mismatch, .. } => Some((period, mismatch)),
            _ => None,
        })
    }
}

#[pyfunction]
#[pyo3(signature = (family, bound, tol=1e-10, G=None))]
#[allow(non_snake_case)]
fn check_identity<'py>(
    py: Python<'py>,
    family: &PyFamily,
    bound: usize,
    tol: f64,
    G: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyDict>> {
    let g = G.map(weight).transpose()?;
    let r = py.detach(|| identity::check_identity(&family.inner, g, bound, tol)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("family", &r.family)?;
    d.set_item("condition", r.condition.as_str())?;
    d.set_item("G", weight_to_py(r.g))?;
    d.set_item("exact", r.exact)?;
    d.set_item("tuples_checked", r.tuples_checked)?;
    d.set_item("failing_tuples", r.failing_tuples)?;
    d.set_item("max_abs_residual", r.max_abs_residual)?;
    d.set_item("max_scaled_residual", r.max_scaled_residual)?;
    d.set_item("worst_tuple", r.worst_tuple.clone())?;
    d.set_item("passed", r.passed)?;
    Ok(d)
}

#[pyfunction]
fn random_decaying_state(cutoff: usize, seed: u64) -> Vec<Complex64> {
    engine::random_decaying_state(cutoff, seed).into_vec()
}

/// Stationary state bifurcating from mode `n` (finite `G`) or the magnetic
/// translate of mode `n` (`G = inf`).
#[pyfunction]
#[allow(non_snake_case)]
fn stationary_state(G: &Bound<'_, PyAny>, p: Complex64, n: usize, cutoff: usize) -> PyResult<Vec<Complex64>> {
    let s = match weight(G)? {
        WeightParameter::Infinite => stationary::translated_mode_state(n, p, cutoff),
        g @ WeightParameter::Finite(_) if n == 0 => stationary::mode0_state(g, p, cutoff),
        WeightParameter::Finite(g) => stationary::mode_n_state(g, p, n, cutoff),
    }
    .map_err(to_py)?;
    Ok(s.alpha)
}

/// `α_n = f_n (b + n a) pⁿ`.
#[pyfunction]
#[allow(non_snake_case)]
fn manifold_state(a: Complex64, b: Complex64, p: Complex64, G: &Bound<'_, PyAny>, cutoff: usize) -> PyResult<Vec<Complex64>> {
    let point = ManifoldPoint::new(a, b, p).map_err(to_py)?;
    manifold::manifold_state(&point, weight(G)?, cutoff).map(ModeVector::into_vec).map_err(to_py)
}

/// Best `(a, b, p, residual)` for spectrum data `β`.
#[pyfunction]
fn fit_manifold(beta: Vec<Complex64>) -> PyResult<(Complex64, Complex64, Complex64, f64)> {
    let r = manifold::fit_manifold(&modes(beta)?).map_err(to_py)?;
    Ok((r.point.a, r.point.b, r.point.p, r.residual))
}

/// Runs the command-line front end; returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("resonant".to_string()).chain(args).collect();
    py.detach(|| resonant::cli::run(argv))
}

#[pymodule]
fn resonant_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFamily>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(check_identity, m)?)?;
    m.add_function(wrap_pyfunction!(random_decaying_state, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_state, m)?)?;
    m.add_function(wrap_pyfunction!(manifold_state, m)?)?;
    m.add_function(wrap_pyfunction!(fit_manifold, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
