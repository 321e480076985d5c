//! Python bindings: forward models, the solver, the weight subproblem,
//! evaluation metrics and the experiment driver.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use adcg_core::bench::data::Localization;
use adcg_core::bench::{experiment, metrics, synth};
use adcg_core::models::{LtiModel, MatCompModel, MomentCurve, SuperresModel};
use adcg_core::{
    AtomicMeasure, Error, ForwardModel, Observation, ParameterPoint, SolveResult, SolverConfig, SquaredLoss,
    Variant, WeightProblem,
};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check_len(theta: &[f64], expected: usize) -> PyResult<()> {
    if theta.len() != expected {
        return Err(to_py(Error::DimensionMismatch { expected, got: theta.len() }));
    }
    Ok(())
}

macro_rules! model_methods {
    ($py_ty:ident, $ctor:item) => {
        #[pymethods]
        impl $py_ty {
            $ctor

            #[getter]
            fn output_dim(&self) -> usize {
                self.inner.output_dim()
            }

            #[getter]
            fn param_dim(&self) -> usize {
                self.inner.param_dim()
            }

            fn bounds(&self) -> Vec<(f64, f64)> {
                self.inner.bounds().to_vec()
            }

            fn psi(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
                self.inner.check_point(&theta).map_err(to_py)?;
                Ok(self.inner.psi(&theta))
            }

            /// Rows are measurement entries, columns parameter coordinates.
            fn jacobian(&self, theta: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                check_len(&theta, self.inner.param_dim())?;
                Ok(rows_of(&self.inner.jacobian(&theta)))
            }

            fn lmo(&self, py: Python<'_>, v: Vec<f64>) -> PyResult<Vec<f64>> {
                check_len(&v, self.inner.output_dim())?;
                let inner = &self.inner;
                Ok(py.detach(|| inner.lmo(&v).0))
            }
        }
    };
}

#[pyclass(name = "SuperresModel", module = "adcg", frozen)]
struct PySuperres {
    inner: SuperresModel,
}

model_methods!(
    PySuperres,
    #[new]
    #[pyo3(signature = (grid_w, grid_h, pixel_size, sigma))]
    fn new(grid_w: usize, grid_h: usize, pixel_size: f64, sigma: f64) -> PyResult<Self> {
        Ok(PySuperres { inner: SuperresModel::new(grid_w, grid_h, pixel_size, sigma).map_err(to_py)? })
    }
);

#[pyclass(name = "LtiModel", module = "adcg", frozen)]
struct PyLti {
    inner: LtiModel,
}

model_methods!(
    PyLti,
    #[new]
    fn new(u: Vec<f64>) -> PyResult<Self> {
        Ok(PyLti { inner: LtiModel::new(u).map_err(to_py)? })
    }
);

#[pyclass(name = "MatCompModel", module = "adcg", frozen)]
struct PyMatComp {
    inner: MatCompModel,
}

model_methods!(
    PyMatComp,
    #[new]
    #[pyo3(signature = (rows, cols, omega, seed = 0))]
    fn new(rows: usize, cols: usize, omega: Vec<(usize, usize)>, seed: u64) -> PyResult<Self> {
        Ok(PyMatComp { inner: MatCompModel::new(rows, cols, omega, seed).map_err(to_py)? })
    }
);

#[pyclass(name = "MomentCurve", module = "adcg", frozen)]
struct PyMoment {
    inner: MomentCurve,
}

model_methods!(
    PyMoment,
    /// `psi(theta) = (theta, theta^2, ..., theta^degree)` on `[lo, hi]`.
    #[new]
    #[pyo3(signature = (degree, lo = -1.0, hi = 1.0))]
    fn new(degree: usize, lo: f64, hi: f64) -> PyResult<Self> {
        if degree == 0 || lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(PyValueError::new_err("need degree >= 1 and lo < hi"));
        }
        Ok(PyMoment { inner: MomentCurve::new(degree, lo, hi) })
    }
);

#[derive(FromPyObject)]
enum AnyModel<'py> {
    Superres(PyRef<'py, PySuperres>),
    Lti(PyRef<'py, PyLti>),
    MatComp(PyRef<'py, PyMatComp>),
    Moment(PyRef<'py, PyMoment>),
}

impl AnyModel<'_> {
    fn as_dyn(&self) -> &dyn ForwardModel {
        match self {
            AnyModel::Superres(m) => &m.inner,
            AnyModel::Lti(m) => &m.inner,
            AnyModel::MatComp(m) => &m.inner,
            AnyModel::Moment(m) => &m.inner,
        }
    }
}

fn measure_from(weights: Vec<f64>, points: Vec<Vec<f64>>) -> PyResult<AtomicMeasure> {
    let points: Vec<ParameterPoint> = points.into_iter().map(ParameterPoint).collect();
    AtomicMeasure::from_parts(&weights, &points).map_err(to_py)
}

#[pyclass(name = "SolveResult", module = "adcg", frozen, get_all)]
struct PySolveResult {
    variant: String,
    weights: Vec<f64>,
    points: Vec<Vec<f64>>,
    objective_trace: Vec<f64>,
    gap_trace: Vec<f64>,
    support_trace: Vec<usize>,
    lower_bound: f64,
    termination: String,
    iterations: usize,
    weight_solver_warning: bool,
    json: String,
}

impl From<SolveResult> for PySolveResult {
    fn from(r: SolveResult) -> Self {
        let json = serde_json::to_string(&r).expect("result serializes");
        let termination = serde_json::to_value(r.termination)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        PySolveResult {
            variant: r.variant.name().to_string(),
            weights: r.measure.weights(),
            points: r.measure.points().into_iter().map(|p| p.0).collect(),
            objective_trace: r.objective_trace,
            gap_trace: r.gap_trace,
            support_trace: r.support_trace,
            lower_bound: r.lower_bound,
            termination,
            iterations: r.iterations,
            weight_solver_warning: r.weight_solver_warning,
            json,
        }
    }
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(variant={}, support={}, objective={:.6e}, termination={})",
            self.variant,
            self.weights.len(),
            self.objective_trace.last().copied().unwrap_or(f64::NAN),
            self.termination
        )
    }
}

/// Squared-loss solve of `y` with mass bound `tau`.
#[pyfunction]
#[pyo3(signature = (
    model, y, tau, variant = "ADCG", max_outer_iters = 50, gap_tolerance = 1e-6,
    max_inner_passes = 50, local_descent_steps = 20, stagewise_threshold = None
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    model: AnyModel<'_>,
    y: Vec<f64>,
    tau: f64,
    variant: &str,
    max_outer_iters: usize,
    gap_tolerance: f64,
    max_inner_passes: usize,
    local_descent_steps: usize,
    stagewise_threshold: Option<f64>,
) -> PyResult<PySolveResult> {
    let variant: Variant = variant.parse().map_err(to_py)?;
    let mut config = SolverConfig::new(variant, tau);
    config.max_outer_iters = max_outer_iters;
    config.gap_tolerance = gap_tolerance;
    config.max_inner_passes = max_inner_passes;
    config.local_descent_steps = local_descent_steps;
    config.stagewise_threshold = stagewise_threshold;
    let m = model.as_dyn();
    let obs = Observation::new(y);
    let result = py.detach(|| adcg_core::run(m, &obs, &SquaredLoss, &config)).map_err(to_py)?;
    Ok(result.into())
}

/// `sum_i w_i psi(theta_i)`.
#[pyfunction]
fn apply_forward(model: AnyModel<'_>, weights: Vec<f64>, points: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    adcg_core::apply_forward(model.as_dyn(), &measure_from(weights, points)?).map_err(to_py)
}

/// Reduces a measure to at most `d + 1` atoms with the same image and mass.
#[pyfunction]
fn caratheodory_prune(
    model: AnyModel<'_>,
    weights: Vec<f64>,
    points: Vec<Vec<f64>>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let mu = adcg_core::measure::caratheodory_prune(model.as_dyn(), &measure_from(weights, points)?).map_err(to_py)?;
    Ok((mu.weights(), mu.points().into_iter().map(|p| p.0).collect()))
}

#[pyfunction]
fn project_capped_simplex(w: Vec<f64>, tau: f64) -> Vec<f64> {
    adcg_core::project_capped_simplex(&w, tau)
}

/// Minimizes `0.5 ||A w - y||^2` over `w >= 0, sum(w) <= tau`; `a` is given row by row.
/// Returns `(w, objective, converged)`.
#[pyfunction]
fn solve_weights(a: Vec<Vec<f64>>, y: Vec<f64>, tau: f64) -> PyResult<(Vec<f64>, f64, bool)> {
    let d = a.len();
    let m = a.first().map_or(0, Vec::len);
    if a.iter().any(|row| row.len() != m) {
        return Err(PyValueError::new_err("rows of a must have equal length"));
    }
    let mat = nalgebra::DMatrix::from_row_iterator(d, m, a.into_iter().flatten());
    let prob = WeightProblem::new(mat, &y, tau, &SquaredLoss).map_err(to_py)?;
    let sol = adcg_core::solve_weights(&prob, None).map_err(to_py)?;
    Ok((sol.w, sol.objective, sol.converged))
}

/// Precision, recall and F1 of `(x, y)` localizations within `radius`.
#[pyfunction]
fn match_sources(est: Vec<(f64, f64)>, truth: Vec<(f64, f64)>, radius: f64) -> (f64, f64, f64) {
    let conv = |v: Vec<(f64, f64)>| -> Vec<Localization> {
        v.into_iter().map(|(x, y)| Localization { x, y, intensity: 1.0 }).collect()
    };
    let s = metrics::match_sources(&conv(est), &conv(truth), radius);
    (s.precision, s.recall, s.f1)
}

#[pyfunction]
fn sysid_score(y_pred: Vec<f64>, y_test: Vec<f64>) -> PyResult<f64> {
    metrics::sysid_score(&y_pred, &y_test).map_err(to_py)
}

/// Runs a config file and returns the summary as a JSON string.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: std::path::PathBuf) -> PyResult<String> {
    let summary = py.detach(|| experiment::run_experiment(&config)).map_err(to_py)?;
    Ok(serde_json::to_string(&summary).expect("summary serializes"))
}

/// Writes a synthetic dataset (`twosource`, `lowrank` or `lti`) and returns the config path.
#[pyfunction]
#[pyo3(signature = (kind, out, seed = 0))]
fn generate(kind: &str, out: std::path::PathBuf, seed: u64) -> PyResult<String> {
    let kind: synth::DatasetKind = kind.parse().map_err(to_py)?;
    let path = synth::generate(kind, &out, seed).map_err(to_py)?;
    Ok(path.display().to_string())
}

#[pymodule]
fn adcg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySuperres>()?;
    m.add_class::<PyLti>()?;
    m.add_class::<PyMatComp>()?;
    m.add_class::<PyMoment>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(apply_forward, m)?)?;
    m.add_function(wrap_pyfunction!(caratheodory_prune, m)?)?;
    m.add_function(wrap_pyfunction!(project_capped_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(solve_weights, m)?)?;
    m.add_function(wrap_pyfunction!(match_sources, m)?)?;
    m.add_function(wrap_pyfunction!(sysid_score, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    Ok(())
}
