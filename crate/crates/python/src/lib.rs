//! Python bindings: problem parameters, towers, the weight and the main
//! numerical operations.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fracbubble::extension::{BubbleExtension, TowerExtension};
use fracbubble::fractional::{self, QuadratureSpec};
use fracbubble::pohozaev::{self, HalfBallRegion, PohozaevReport, PohozaevSpec};
use fracbubble::reduced::{self, EnergySpec, SolverSpec};
use fracbubble::residual::{self, SweepSpec};
use fracbubble::{Bubble, Direction, Error, ExponentSign};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidDimension(_)
        | Error::Inadmissible { .. }
        | Error::InvalidParameter { .. }
        | Error::EmptyConfiguration
        | Error::IndexOutOfRange { .. }
        | Error::EpsTooLarge(_)
        | Error::PolarSingularity
        | Error::DegeneratePair
        | Error::DegenerateCriticalPoint(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// (N, s, ε, sign) with the derived exponents.
#[pyclass(name = "ProblemParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProblem(fracbubble::ProblemParams);

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (n, s, eps = 0.0, sign = 1))]
    fn new(n: usize, s: f64, eps: f64, sign: i32) -> PyResult<Self> {
        let sign = ExponentSign::from_i32(sign).map_err(to_py)?;
        fracbubble::ProblemParams::new(n, s, eps, sign).map(PyProblem).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn s(&self) -> f64 {
        self.0.s()
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps()
    }

    /// N - 2s.
    #[getter]
    fn a(&self) -> f64 {
        self.0.a()
    }

    #[getter]
    fn two_star(&self) -> f64 {
        self.0.two_star()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.0.tau()
    }

    #[getter]
    fn critical_power(&self) -> f64 {
        self.0.critical_power()
    }

    #[getter]
    fn power(&self) -> f64 {
        self.0.power()
    }

    #[getter]
    fn bubble_constant(&self) -> f64 {
        self.0.bubble_constant()
    }

    fn with_eps(&self, eps: f64) -> PyResult<Self> {
        self.0.with_eps(eps).map(PyProblem).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("ProblemParams(n={}, s={}, eps={})", self.0.n(), self.0.s(), self.0.eps())
    }
}

/// m bubbles on a regular polygon of radius r̄ in the y'-plane.
#[pyclass(name = "TowerConfig", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTower(fracbubble::TowerConfig);

#[pymethods]
impl PyTower {
    #[new]
    fn new(m: usize, rbar: f64, ybar: Vec<f64>, lam: f64) -> PyResult<Self> {
        fracbubble::TowerConfig::new(m, rbar, ybar, lam).map(PyTower).map_err(to_py)
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn rbar(&self) -> f64 {
        self.0.rbar()
    }

    #[getter]
    fn ybar(&self) -> Vec<f64> {
        self.0.ybar().to_vec()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda()
    }

    /// Center x_j, j = 1..m.
    fn center(&self, j: usize) -> PyResult<Vec<f64>> {
        if j == 0 || j > self.0.m() {
            return Err(PyValueError::new_err(format!("bubble index {j} outside 1..={}", self.0.m())));
        }
        Ok(self.0.center(j))
    }

    fn centers(&self) -> Vec<Vec<f64>> {
        fracbubble::tower_centers(&self.0)
    }

    fn min_separation(&self) -> f64 {
        self.0.min_separation()
    }

    fn with_lambda(&self, lam: f64) -> PyResult<Self> {
        self.0.with_lambda(lam).map(PyTower).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "TowerConfig(m={}, rbar={}, ybar={:?}, lam={})",
            self.0.m(),
            self.0.rbar(),
            self.0.ybar(),
            self.0.lambda()
        )
    }
}

/// K(r, y'') = 1 + ½ (v - v0)ᵀ H (v - v0) χ(|v - v0| / ϑ).
#[pyclass(name = "WeightField", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWeight(fracbubble::weight::WeightField);

#[pymethods]
impl PyWeight {
    /// `hessian` is the (N-1)×(N-1) matrix in (r, y'') as nested lists.
    #[new]
    fn new(n: usize, r0: f64, y0_pp: Vec<f64>, hessian: Vec<Vec<f64>>, cutoff: f64) -> PyResult<Self> {
        let flat: Vec<f64> = hessian.into_iter().flatten().collect();
        fracbubble::weight::WeightField::new(n, r0, y0_pp, &flat, cutoff)
            .map(PyWeight)
            .map_err(to_py)
    }

    /// The N = 5 saddle with Hessian diag(-2, -1, ½, ½) at r0 = 1.
    #[staticmethod]
    fn default_saddle() -> Self {
        PyWeight(fracbubble::weight::WeightField::default_saddle())
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.0.r0()
    }

    #[getter]
    fn y0_pp(&self) -> Vec<f64> {
        self.0.y0pp().to_vec()
    }

    #[getter]
    fn cutoff_radius(&self) -> f64 {
        self.0.cutoff_radius()
    }

    fn laplacian_at_critical(&self) -> f64 {
        self.0.laplacian_at_critical()
    }

    fn eval(&self, y: Vec<f64>) -> PyResult<f64> {
        check_len(&y, self.0.n())?;
        Ok(self.0.eval(&y))
    }

    fn grad(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        check_len(&y, self.0.n())?;
        self.0.grad(&y).map_err(to_py)
    }

    fn hess(&self, y: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        check_len(&y, self.0.n())?;
        let h = self.0.hess(&y).map_err(to_py)?;
        Ok(h.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

fn check_len(y: &[f64], n: usize) -> PyResult<()> {
    if y.len() != n {
        return Err(PyValueError::new_err(format!("expected a point with {n} coordinates, got {}", y.len())));
    }
    Ok(())
}

/// U_{x,λ}(y).
#[pyfunction]
fn bubble_value(p: &PyProblem, center: Vec<f64>, lam: f64, y: Vec<f64>) -> PyResult<f64> {
    check_len(&center, p.0.n())?;
    check_len(&y, p.0.n())?;
    let b = Bubble::new(center, lam).map_err(to_py)?;
    Ok(fracbubble::bubble_value(&p.0, &b, &y))
}

/// Z(y) = Σ_j U_{x_j,λ}(y).
#[pyfunction]
fn tower_value(p: &PyProblem, tower: &PyTower, y: Vec<f64>) -> PyResult<f64> {
    check_len(&y, p.0.n())?;
    Ok(fracbubble::tower_value(&p.0, &tower.0, &y))
}

/// Z_{j,l}(y) for l = 1 (λ), 2 (r̄) or 3..N (ȳ''_l).
#[pyfunction]
fn z_derivative(p: &PyProblem, tower: &PyTower, j: usize, l: usize, y: Vec<f64>) -> PyResult<f64> {
    check_len(&y, p.0.n())?;
    let dir = Direction::from_index(l, p.0.n()).map_err(to_py)?;
    fracbubble::z_derivative(&p.0, &tower.0, j, dir, &y).map_err(to_py)
}

/// U^{(N+2s)/(N-2s)}, the exact (-Δ)^s of a bubble.
#[pyfunction]
fn frac_lap_exact_bubble(p: &PyProblem, center: Vec<f64>, lam: f64, y: Vec<f64>) -> PyResult<f64> {
    check_len(&y, p.0.n())?;
    let b = Bubble::new(center, lam).map_err(to_py)?;
    Ok(fractional::frac_lap_exact_bubble(&p.0, &b, &y))
}

/// (-Δ)^s f(y) by singular-integral quadrature; `f` takes a list of N floats.
#[pyfunction]
#[pyo3(signature = (f, n, s, y, radial_nodes = 12, angular_nodes = 6))]
fn frac_lap_quadrature(
    py: Python<'_>,
    f: Py<PyAny>,
    n: usize,
    s: f64,
    y: Vec<f64>,
    radial_nodes: usize,
    angular_nodes: usize,
) -> PyResult<f64> {
    check_len(&y, n)?;
    let q = QuadratureSpec {
        radial_nodes,
        angular_nodes,
        ..QuadratureSpec::default()
    };
    let failure: std::sync::Mutex<Option<PyErr>> = std::sync::Mutex::new(None);
    let call = |z: &[f64]| -> f64 {
        Python::attach(|py| match f.call1(py, (z.to_vec(),)).and_then(|v| v.extract::<f64>(py)) {
            Ok(v) => v,
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        })
    };
    let result = py.detach(|| fractional::frac_lap_quadrature(&call, n, s, &y, &q));
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    result.map(|e| e.value).map_err(to_py)
}

/// (m, λ) for the given ε and t.
#[pyfunction]
fn bookkeeping(p: &PyProblem, eps: f64, t: f64) -> PyResult<(usize, f64)> {
    let pe = p.0.with_eps(eps).map_err(to_py)?;
    let m = reduced::m_from_eps(&pe, eps).map_err(to_py)?;
    Ok((m, reduced::lambda_from_t(&pe, t, m)))
}

/// Rows of ‖l_ε‖_** and its three pieces over a decreasing ε list.
#[pyfunction]
#[pyo3(signature = (p, weight, eps_list, seed = 0))]
fn residual_sweep<'py>(
    py: Python<'py>,
    p: &PyProblem,
    weight: &PyWeight,
    eps_list: Vec<f64>,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = SweepSpec {
        seed,
        ..SweepSpec::new(p.0.n())
    };
    let rows = py
        .detach(|| residual::residual_norm_sweep(&p.0, &weight.0, &eps_list, &spec))
        .map_err(to_py)?;
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("eps", r.eps)?;
            d.set_item("m", r.m)?;
            d.set_item("lambda", r.lambda)?;
            d.set_item("norm_total", r.norm_total)?;
            d.set_item("norm_j1", r.norm_j1)?;
            d.set_item("norm_j2", r.norm_j2)?;
            d.set_item("norm_j3", r.norm_j3)?;
            d.set_item("slope", r.slope)?;
            Ok(d)
        })
        .collect()
}

/// B1, B2, B3 and the root of the reduced system in the default box.
#[pyfunction]
fn solve_reduced<'py>(py: Python<'py>, p: &PyProblem, weight: &PyWeight) -> PyResult<Bound<'py, PyDict>> {
    let (c, sol) = py
        .detach(|| {
            let c = reduced::ReducedConstants::compute(&p.0, &weight.0, &EnergySpec::default())?;
            let sol = reduced::solve_reduced(&p.0, &weight.0, &c, &SolverSpec::default())?;
            Ok::<_, Error>((c, sol))
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("b1", c.b1)?;
    d.set_item("b2", c.b2)?;
    d.set_item("b3", c.b3)?;
    d.set_item("lattice", c.lattice)?;
    d.set_item("rbar", sol.rbar)?;
    d.set_item("ybar", sol.ybar.clone())?;
    d.set_item("t", sol.t)?;
    d.set_item("t_closed_form", sol.t_closed_form)?;
    d.set_item("iterations", sol.iterations)?;
    d.set_item("faces_ok", sol.faces_ok())?;
    Ok(d)
}

/// dI/dλ by finite differences and the two-term model.
#[pyfunction]
fn energy_derivative<'py>(
    py: Python<'py>,
    p: &PyProblem,
    tower: &PyTower,
    weight: &PyWeight,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = EnergySpec::default();
    let r = py
        .detach(|| {
            let consts = reduced::ModelConstants::for_tower(&p.0, &tower.0, &weight.0, &spec)?;
            reduced::denergy_dlambda(&p.0, &tower.0, &weight.0, &spec, &consts)
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("lambda", r.lambda)?;
    d.set_item("derivative", r.derivative)?;
    d.set_item("model", r.model)?;
    d.set_item("ratio", r.ratio)?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &PohozaevReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let terms = PyDict::new(py);
    for (k, v) in &r.terms {
        terms.set_item(*k, *v)?;
    }
    d.set_item("terms", terms)?;
    d.set_item("residual", r.residual)?;
    d.set_item("scale", r.scale)?;
    d.set_item("relative", r.relative())?;
    d.set_item("refined_residual", r.refined_residual)?;
    d.set_item("refinement_gain", r.refinement_gain())?;
    Ok(d)
}

/// Local Pohozaev identity on the half-ball of radius `radius` about
/// `center` for the tower; `identity` is "scaling" or "translation".
#[pyfunction]
#[pyo3(signature = (p, tower, weight, center, radius, identity = "scaling", index = 3))]
fn pohozaev_check<'py>(
    py: Python<'py>,
    p: &PyProblem,
    tower: &PyTower,
    weight: &PyWeight,
    center: Vec<f64>,
    radius: f64,
    identity: &str,
    index: usize,
) -> PyResult<Bound<'py, PyDict>> {
    check_len(&center, p.0.n())?;
    if !matches!(identity, "scaling" | "translation") {
        return Err(PyValueError::new_err("identity must be \"scaling\" or \"translation\""));
    }
    let rep = py
        .detach(|| {
            let unit = BubbleExtension::new(&p.0, QuadratureSpec::default())?;
            let ext = TowerExtension::new(&p.0, &tower.0, &unit);
            let region = HalfBallRegion::new(center, radius)?;
            let spec = PohozaevSpec::default();
            if identity == "scaling" {
                pohozaev::pohozaev_scaling(&p.0, &ext, &weight.0, &region, &spec)
            } else {
                pohozaev::pohozaev_translation(&p.0, &ext, &weight.0, &region, index, &spec)
            }
        })
        .map_err(to_py)?;
    report_dict(py, &rep)
}

#[pymodule]
#[pyo3(name = "fracbubble")]
fn fracbubble_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyTower>()?;
    m.add_class::<PyWeight>()?;
    m.add_function(wrap_pyfunction!(bubble_value, m)?)?;
    m.add_function(wrap_pyfunction!(tower_value, m)?)?;
    m.add_function(wrap_pyfunction!(z_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(frac_lap_exact_bubble, m)?)?;
    m.add_function(wrap_pyfunction!(frac_lap_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(bookkeeping, m)?)?;
    m.add_function(wrap_pyfunction!(residual_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(solve_reduced, m)?)?;
    m.add_function(wrap_pyfunction!(energy_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(pohozaev_check, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
