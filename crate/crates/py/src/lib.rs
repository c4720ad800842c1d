//! Python bindings: element models, training, the composition QCQP and the
//! oracles.

use std::collections::HashMap;

use hjbnav::env::{self, MotionProfile, TrainingRange};
use hjbnav::gp::KernelParams;
use hjbnav::model;
use hjbnav::safety::{self, LinearConstraint, Role, SafetyParams};
use hjbnav::scene::{self, Scenario, StreetCrossingConfig};
use hjbnav::trainer::{self, CostParams, ElementConfig, TrainConfig, TrainStatus};
use hjbnav::validation::{self, GridSpec, ValueIterationOptions};
use nalgebra::{DVector, Vector2};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: hjbnav::Error) -> PyErr {
    match e {
        hjbnav::Error::Io(e) => PyIOError::new_err(e.to_string()),
        hjbnav::Error::Config(_)
        | hjbnav::Error::Dimension { .. }
        | hjbnav::Error::Json(_)
        | hjbnav::Error::Model(_)
        | hjbnav::Error::NonFinite(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn v2(p: (f64, f64)) -> Vector2<f64> {
    Vector2::new(p.0, p.1)
}

/// Rectangle or convex polygon, centered on the element origin.
#[pyclass(name = "ElementShape", module = "hjbnav_py", from_py_object)]
#[derive(Clone)]
pub struct PyShape {
    inner: env::ElementShape,
}

#[pymethods]
impl PyShape {
    #[staticmethod]
    fn rectangle(width: f64, height: f64) -> PyResult<Self> {
        Ok(Self { inner: env::ElementShape::rectangle(width, height).map_err(err)? })
    }

    #[staticmethod]
    fn polygon(vertices: Vec<(f64, f64)>) -> PyResult<Self> {
        let v = vertices.into_iter().map(|(x, y)| [x, y]).collect();
        Ok(Self { inner: env::ElementShape::polygon(v).map_err(err)? })
    }

    /// Negative inside, zero on the boundary.
    fn signed_distance(&self, x: f64, y: f64) -> f64 {
        env::signed_distance(&Vector2::new(x, y), &self.inner)
    }

    #[getter]
    fn circumradius(&self) -> f64 {
        self.inner.circumradius()
    }

    fn __repr__(&self) -> String {
        format!("ElementShape({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

/// A trained value function and policy for one element.
#[pyclass(name = "ElementModel", module = "hjbnav_py", from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: model::ElementModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: model::ElementModel::load(path.as_ref()).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: model::ElementModel::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(err)
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        self.inner.value(&Vector2::new(x, y))
    }

    fn value_grad(&self, x: f64, y: f64) -> (f64, f64) {
        let g = self.inner.value_grad(&Vector2::new(x, y));
        (g.x, g.y)
    }

    fn policy(&self, x: f64, y: f64) -> (f64, f64) {
        let u = self.inner.policy(&Vector2::new(x, y));
        (u.x, u.y)
    }

    /// Model of the element reflected through the y axis, motion included.
    fn mirrored_x(&self) -> PyResult<Self> {
        Ok(Self { inner: self.inner.mirrored_x().map_err(err)? })
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.training.radius
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.training.lambda
    }

    #[getter]
    fn qc(&self) -> f64 {
        self.inner.training.qc
    }

    #[getter]
    fn num_points(&self) -> usize {
        self.inner.gp.num_points()
    }

    #[getter]
    fn velocity(&self) -> (f64, f64) {
        let v = self.inner.element.motion.velocity;
        (v.x, v.y)
    }

    #[getter]
    fn shape(&self) -> PyShape {
        PyShape { inner: self.inner.element.shape.clone() }
    }

    fn __repr__(&self) -> String {
        let t = &self.inner.training;
        format!(
            "ElementModel(points={}, radius={}, lambda={}, qc={}, epochs={})",
            self.inner.gp.num_points(),
            t.radius,
            t.lambda,
            t.qc,
            t.epochs
        )
    }
}

/// Train one element. Returns the model and the per-epoch mean |residual|.
#[pyfunction]
#[pyo3(signature = (
    shape, motion = (0.0, 0.0), radius = 8.0, epochs = 20_000, max_steps = 100, lambda_ = 0.1, qc = 0.0,
    eta = 1e-2, u_max = 1.0, sigma = None, w_term = 10.0, lengthscale = 1.0, spacing = None, seed = 0,
    init_value = 0.0, curriculum_epochs = 0
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    shape: &PyShape,
    motion: (f64, f64),
    radius: f64,
    epochs: usize,
    max_steps: usize,
    lambda_: f64,
    qc: f64,
    eta: f64,
    u_max: f64,
    sigma: Option<f64>,
    w_term: f64,
    lengthscale: f64,
    spacing: Option<f64>,
    seed: u64,
    init_value: f64,
    curriculum_epochs: usize,
) -> PyResult<(PyModel, Vec<f64>)> {
    let element = ElementConfig {
        range: TrainingRange::new(radius, &shape.inner).map_err(err)?,
        shape: shape.inner.clone(),
        motion: MotionProfile::constant(motion.0, motion.1),
    };
    let cost = CostParams { lambda: lambda_, qc };
    let cfg = TrainConfig {
        epochs,
        max_steps,
        eta,
        sigma_explore: sigma.unwrap_or(0.5 * u_max),
        u_max,
        w_term,
        seed,
        kernel: KernelParams { lengthscale, ..Default::default() },
        spacing: spacing.unwrap_or(lengthscale),
        init_value,
        curriculum_epochs,
        ..Default::default()
    };
    let t = py.detach(|| trainer::train(&element, &cost, &cfg)).map_err(err)?;
    if let TrainStatus::Aborted { epoch, reason } = t.status {
        return Err(PyRuntimeError::new_err(format!("training aborted at epoch {epoch}: {reason}")));
    }
    let residuals = t.history.iter().map(|h| h.mean_abs_residual).collect();
    Ok((PyModel { inner: t.model }, residuals))
}

/// `(lin, const)` with dV/dt = lin . u + const.
#[pyfunction]
#[pyo3(signature = (v, u_star, lambda_ = 0.1, qc = 0.0))]
fn vdot_affine(v: f64, u_star: (f64, f64), lambda_: f64, qc: f64) -> ((f64, f64), f64) {
    let (lin, c) = safety::vdot_affine(v, &DVector::from_vec(vec![u_star.0, u_star.1]), lambda_, qc);
    ((lin[0], lin[1]), c)
}

fn constraints(cons: Vec<((f64, f64), f64)>) -> Vec<LinearConstraint> {
    cons.into_iter().map(|((a0, a1), b)| LinearConstraint { a: DVector::from_vec(vec![a0, a1]), b }).collect()
}

/// Minimize |u - u_g|^2 subject to a.u <= b for each `((a0, a1), b)` and |u| <= u_max.
#[pyfunction]
#[pyo3(signature = (u_g, cons, u_max = 1.0))]
fn solve_qcqp<'py>(
    py: Python<'py>,
    u_g: (f64, f64),
    cons: Vec<((f64, f64), f64)>,
    u_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cons = constraints(cons);
    let ug = DVector::from_vec(vec![u_g.0, u_g.1]);
    let r = safety::solve_qcqp(&ug, &cons, u_max);
    let k = safety::kkt_certificate(&r.u, &ug, &cons, u_max);
    let d = PyDict::new(py);
    d.set_item("u", (r.u[0], r.u[1]))?;
    d.set_item("status", r.status.to_string())?;
    d.set_item("active_set", r.active_set)?;
    d.set_item("ball_active", r.ball_active)?;
    d.set_item("objective", r.objective)?;
    d.set_item("kkt_residual", k.stationarity)?;
    d.set_item("max_violation", k.max_violation)?;
    Ok(d)
}

/// Brute-force QCQP oracle; `None` when no grid point is feasible.
#[pyfunction]
#[pyo3(signature = (u_g, cons, u_max = 1.0, resolution = 401))]
fn qcqp_grid_search(
    u_g: (f64, f64),
    cons: Vec<((f64, f64), f64)>,
    u_max: f64,
    resolution: usize,
) -> PyResult<Option<((f64, f64), f64)>> {
    let r = validation::qcqp_grid_search(&DVector::from_vec(vec![u_g.0, u_g.1]), &constraints(cons), u_max, resolution)
        .map_err(err)?;
    Ok(r.map(|(u, obj)| ((u[0], u[1]), obj)))
}

fn safety_params(v_min: f64, c: Vec<f64>, q: f64, lambda: f64, qc: f64, u_max: f64) -> PyResult<SafetyParams> {
    let p = SafetyParams { c, q, v_min, lambda, qc, u_max };
    p.validate().map_err(err)?;
    Ok(p)
}

/// One composition step. `goal` and each obstacle are `(center, model)`.
#[pyfunction]
#[pyo3(signature = (agent, goal, obstacles, v_min = 0.0, c = vec![1.0], q = 0.5, lambda_ = 0.1, qc = 0.0, u_max = 1.0))]
#[allow(clippy::too_many_arguments)]
fn compose_step<'py>(
    py: Python<'py>,
    agent: (f64, f64),
    goal: ((f64, f64), PyRef<'py, PyModel>),
    obstacles: Vec<((f64, f64), PyRef<'py, PyModel>)>,
    v_min: f64,
    c: Vec<f64>,
    q: f64,
    lambda_: f64,
    qc: f64,
    u_max: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = safety_params(v_min, c, q, lambda_, qc, u_max)?;
    let mut views = vec![safety::ElementView { center: v2(goal.0), role: Role::Goal, model: Some(&goal.1.inner) }];
    for (center, m) in &obstacles {
        views.push(safety::ElementView { center: v2(*center), role: Role::Obstacle, model: Some(&m.inner) });
    }
    let out = safety::compose_step(&v2(agent), &views, &p).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("u", (out.u.x, out.u.y))?;
    d.set_item("goal_policy", (out.goal_policy.x, out.goal_policy.y))?;
    d.set_item("status", out.result.status.to_string())?;
    d.set_item("active_set", out.result.active_set.clone())?;
    d.set_item("values", out.obstacles.iter().map(|o| o.value).collect::<Vec<_>>())?;
    d.set_item("in_range", out.obstacles.iter().map(|o| o.in_range).collect::<Vec<_>>())?;
    d.set_item("slacks", out.obstacles.iter().map(|o| o.slack).collect::<Vec<_>>())?;
    Ok(d)
}

/// Grid value-iteration oracle over the square [-half_width, half_width]^2.
/// Returns `(xs, ys, values)` with `values[j][i]` at `(xs[i], ys[j])`.
#[pyfunction]
#[pyo3(signature = (shape, motion = (0.0, 0.0), lambda_ = 0.1, qc = 1.0, u_max = 1.0, dt = 0.01, half_width = 8.0, n = 201, range_radius = None))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn value_iteration(
    py: Python<'_>,
    shape: &PyShape,
    motion: (f64, f64),
    lambda_: f64,
    qc: f64,
    u_max: f64,
    dt: f64,
    half_width: f64,
    n: usize,
    range_radius: Option<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let grid = GridSpec::square(half_width, n, range_radius);
    let m = MotionProfile::constant(motion.0, motion.1);
    let cost = CostParams { lambda: lambda_, qc };
    let vf = py
        .detach(|| validation::value_iteration(&shape.inner, &m, &cost, u_max, dt, &grid, &ValueIterationOptions::default()))
        .map_err(err)?;
    let xs = (0..n).map(|i| vf.spec.node(i, 0).x).collect();
    let ys = (0..n).map(|j| vf.spec.node(0, j).y).collect();
    let values = vf.values.chunks(n).map(|r| r.to_vec()).collect();
    Ok((xs, ys, values))
}

fn trace_dict<'py>(py: Python<'py>, t: &scene::RunTrace, p: &SafetyParams) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", t.seed)?;
    d.set_item("outcome", t.outcome.to_string())?;
    d.set_item("steps", t.steps.len())?;
    d.set_item("min_signed_distance", t.min_signed_distance)?;
    d.set_item("min_barrier_margin", t.min_barrier_margin(p))?;
    d.set_item("positions", t.steps.iter().map(|s| (s.position.x, s.position.y)).collect::<Vec<_>>())?;
    d.set_item("final_position", (t.final_position.x, t.final_position.y))?;
    Ok(d)
}

fn model_map(models: HashMap<String, PyRef<'_, PyModel>>) -> HashMap<String, model::ElementModel> {
    models.into_iter().map(|(k, m)| (k, m.inner.clone())).collect()
}

/// Run a scenario (JSON text) over `seeds` with models keyed by name.
#[pyfunction]
#[pyo3(signature = (scenario_json, models, seeds, v_min = 0.0, c = vec![1.0], q = 0.5, lambda_ = 0.1, qc = 0.0, u_max = 1.0))]
#[allow(clippy::too_many_arguments)]
fn run_scenario<'py>(
    py: Python<'py>,
    scenario_json: &str,
    models: HashMap<String, PyRef<'py, PyModel>>,
    seeds: Vec<u64>,
    v_min: f64,
    c: Vec<f64>,
    q: f64,
    lambda_: f64,
    qc: f64,
    u_max: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let s: Scenario = serde_json::from_str(scenario_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    s.validate().map_err(err)?;
    let p = safety_params(v_min, c, q, lambda_, qc, u_max)?;
    let models = model_map(models);
    let traces = py.detach(|| scene::run_batch(&s, &models, &p, &seeds)).map_err(err)?;
    traces.iter().map(|t| trace_dict(py, t, &p)).collect()
}

/// The street-crossing layout as scenario JSON.
#[pyfunction]
fn street_crossing_scenario() -> PyResult<String> {
    let s = scene::build_street_crossing(&StreetCrossingConfig::default()).map_err(err)?;
    serde_json::to_string_pretty(&s).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Train the goal, car and mirrored reverse-car models for the street crossing.
#[pyfunction]
#[pyo3(signature = (epochs = 20_000, seed = 0))]
fn train_street_crossing(py: Python<'_>, epochs: usize, seed: u64) -> PyResult<HashMap<String, PyModel>> {
    let cfg = StreetCrossingConfig::default();
    let m = py.detach(|| scene::train_street_crossing(&cfg, epochs, seed)).map_err(err)?;
    Ok(m.into_iter().map(|(k, inner)| (k, PyModel { inner })).collect())
}

/// Run the street crossing with its tuned composition parameters.
#[pyfunction]
#[pyo3(signature = (models, seeds))]
fn simulate_street_crossing<'py>(
    py: Python<'py>,
    models: HashMap<String, PyRef<'py, PyModel>>,
    seeds: Vec<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let s = scene::build_street_crossing(&StreetCrossingConfig::default()).map_err(err)?;
    let p = scene::street_crossing_safety();
    let models = model_map(models);
    let traces = py.detach(|| scene::run_batch(&s, &models, &p, &seeds)).map_err(err)?;
    traces.iter().map(|t| trace_dict(py, t, &p)).collect()
}

#[pymodule]
fn hjbnav_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyShape>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(vdot_affine, m)?)?;
    m.add_function(wrap_pyfunction!(solve_qcqp, m)?)?;
    m.add_function(wrap_pyfunction!(qcqp_grid_search, m)?)?;
    m.add_function(wrap_pyfunction!(compose_step, m)?)?;
    m.add_function(wrap_pyfunction!(value_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(street_crossing_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(train_street_crossing, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_street_crossing, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
