//! Python bindings for the magnetic geodesic toolkit.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use maglab::action::{self, ActionConvention, LoopPath};
use maglab::cli::{self, ExperimentConfig};
use maglab::dynamics::{self, BumpParams, FieldKind, FlowState, TurnConvention};
use maglab::geometry::{self, HPoint};
use maglab::search::{self, CriticalKind, MinimaxOptions, SearchOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(p: (f64, f64)) -> PyResult<HPoint> {
    HPoint::new(p.0, p.1).map_err(value_err)
}

/// A magnetic system on the genus-two octagon surface.
#[pyclass(name = "MagneticSystem", frozen)]
#[derive(Clone)]
struct PySystem {
    inner: dynamics::MagneticSystem,
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (s=1.0, k=0.02, field="oscillating", amplitude=2.0, radius=1.0, p0=(0.0, 1.0), convention="lagrangian"))]
    fn new(s: f64, k: f64, field: &str, amplitude: f64, radius: f64, p0: (f64, f64), convention: &str) -> PyResult<Self> {
        let field = match field {
            "constant" => FieldKind::Constant,
            "oscillating" => FieldKind::Oscillating(BumpParams { amplitude, radius, center: point(p0)? }),
            other => return Err(PyValueError::new_err(format!("unknown field kind {other:?}"))),
        };
        let convention = match convention {
            "lagrangian" => TurnConvention::Lagrangian,
            "left-turn" => TurnConvention::LeftTurn,
            other => return Err(PyValueError::new_err(format!("unknown convention {other:?}"))),
        };
        let inner = dynamics::MagneticSystem::build(s, field, k, convention).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn energy(&self) -> f64 {
        self.inner.energy
    }

    #[getter]
    fn strength(&self) -> f64 {
        self.inner.strength
    }

    fn with_energy(&self, k: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_energy(k).map_err(value_err)? })
    }

    /// Field density `f` at `(x, y)`.
    fn density(&self, p: (f64, f64)) -> PyResult<f64> {
        Ok(self.inner.density(point(p)?))
    }

    fn field_minimum_point(&self) -> (f64, f64) {
        let p = self.inner.field_minimum_point();
        (p.x, p.y)
    }

    fn total_flux(&self) -> f64 {
        self.inner.total_flux()
    }

    /// `(mane_analytic, mane_dynamical, tau_plus, tau_plus_star)`.
    fn critical_values(&self) -> PyResult<(Option<f64>, f64, f64, f64)> {
        let v = action::tau_plus_star(&self.inner, action::ManeOptions::default()).map_err(value_err)?;
        Ok((v.mane_analytic, v.mane_dynamical, v.tau_plus, v.tau_plus_star))
    }

    /// Samples `(t, x, y, vx, vy)` of the orbit from `start` in direction
    /// `angle` at the system energy.
    #[pyo3(signature = (start, angle, time, dt=1e-3, stride=10))]
    fn integrate(&self, start: (f64, f64), angle: f64, time: f64, dt: f64, stride: usize) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
        let state = FlowState::at_energy(point(start)?, angle, self.inner.energy);
        let tr = dynamics::integrate_sampled(state, &self.inner, time, dt, stride).map_err(value_err)?;
        Ok(tr.times.iter().zip(&tr.samples).map(|(t, s)| (*t, s.q.x, s.q.y, s.v.vx, s.v.vy)).collect())
    }

    /// Prime period of the orbit on the surface, or `None`.
    fn closure_period(&self, start: (f64, f64), angle: f64, horizon: f64) -> PyResult<Option<f64>> {
        let state = FlowState::at_energy(point(start)?, angle, self.inner.energy);
        dynamics::closure_check(state, &self.inner, horizon).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("MagneticSystem(s={}, k={}, field={:?})", self.inner.strength, self.inner.energy, self.inner.field)
    }
}

/// A closed loop with free period.
#[pyclass(name = "Loop", frozen)]
#[derive(Clone)]
struct PyLoop {
    inner: LoopPath,
}

#[pymethods]
impl PyLoop {
    #[new]
    fn new(points: Vec<(f64, f64)>, period: f64) -> PyResult<Self> {
        let pts = points.into_iter().map(point).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: LoopPath::new(pts, period).map_err(value_err)? })
    }

    /// Hyperbolic circle traversed counterclockwise for `orientation > 0`.
    #[staticmethod]
    #[pyo3(signature = (center, radius, period, n, orientation=1.0))]
    fn circle(center: (f64, f64), radius: f64, period: f64, n: usize, orientation: f64) -> PyResult<Self> {
        Ok(Self { inner: LoopPath::circle(point(center)?, radius, orientation, period, n).map_err(value_err)? })
    }

    #[getter]
    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.points.iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period
    }

    fn length(&self) -> f64 {
        self.inner.length()
    }

    fn iterate(&self, n: usize) -> PyResult<Self> {
        Ok(Self { inner: action::iterate_loop(&self.inner, n).map_err(value_err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// `S_k` of a contractible loop.
#[pyfunction]
fn action_value(lp: &PyLoop, system: &PySystem, k: f64) -> PyResult<f64> {
    action::action_value(&lp.inner, &system.inner, k, &ActionConvention::new()).map_err(value_err)
}

/// Hyperbolic distance between two points of the upper half-plane.
#[pyfunction]
fn hyperbolic_distance(p: (f64, f64), q: (f64, f64)) -> PyResult<f64> {
    Ok(geometry::hyperbolic_distance(point(p)?, point(q)?))
}

/// A converged critical loop of the action.
#[pyclass(name = "CriticalPoint", frozen)]
#[derive(Clone)]
struct PyCritical {
    inner: search::CriticalPoint,
}

#[pymethods]
impl PyCritical {
    #[getter]
    fn value(&self) -> f64 {
        self.inner.value
    }
    #[getter]
    fn index(&self) -> usize {
        self.inner.index
    }
    #[getter]
    fn nullity(&self) -> usize {
        self.inner.nullity
    }
    #[getter]
    fn ode_residual(&self) -> f64 {
        self.inner.ode_residual
    }
    #[getter]
    fn period(&self) -> f64 {
        self.inner.loop_path.period
    }
    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            CriticalKind::Minimizer => "minimizer",
            CriticalKind::MountainPass => "mountain-pass",
            CriticalKind::Other => "other",
        }
    }
    #[getter]
    fn loop_path(&self) -> PyLoop {
        PyLoop { inner: self.inner.loop_path.clone() }
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("critical point serializes")
    }

    fn __repr__(&self) -> String {
        format!("CriticalPoint(kind={}, value={}, index={})", self.kind(), self.inner.value, self.inner.index)
    }
}

/// Local minimizer reached by descent from `seed`; raises if descent ends
/// without a critical loop.
#[pyfunction]
fn find_local_min(py: Python<'_>, seed: &PyLoop, system: &PySystem, k: f64) -> PyResult<PyCritical> {
    let report = py
        .allow_threads(|| search::find_local_min(&seed.inner, &system.inner, k, &ActionConvention::new(), &SearchOptions::default()))
        .map_err(value_err)?;
    report
        .critical
        .map(|inner| PyCritical { inner })
        .ok_or_else(|| PyRuntimeError::new_err(format!("descent ended {:?} at S = {}", report.status, report.value)))
}

/// Mountain pass between `minimizer` and its double iterate, lifted to
/// the `n`-th iterates.
#[pyfunction]
#[pyo3(signature = (minimizer, system, k, n=1))]
fn mountain_pass(py: Python<'_>, minimizer: &PyCritical, system: &PySystem, k: f64, n: usize) -> PyResult<(PyCritical, bool)> {
    let valley = action::iterate_loop(&minimizer.inner.loop_path, 2).map_err(value_err)?;
    let mp = py
        .allow_threads(|| {
            search::mountain_pass(&minimizer.inner, &valley, n, &system.inner, k, &ActionConvention::new(), &MinimaxOptions::default())
        })
        .map_err(value_err)?;
    Ok((PyCritical { inner: mp.critical }, mp.converged))
}

#[pyfunction]
fn morse_index(lp: &PyLoop, system: &PySystem, k: f64) -> PyResult<usize> {
    Ok(search::morse_index(&lp.inner, &system.inner, k, &ActionConvention::new()).map_err(value_err)?.index)
}

/// Whether two critical loops are geometrically distinct on the surface.
#[pyfunction]
fn distinct(a: &PyCritical, b: &PyCritical, system: &PySystem) -> PyResult<bool> {
    search::distinctness(&a.inner, &b.inner, system.inner.group()).map_err(value_err)
}

/// Runs a CLI subcommand on a TOML configuration and returns its printed
/// lines and whether it succeeded.
#[pyfunction]
#[pyo3(signature = (subcommand, config="", out=None))]
fn run_cli(py: Python<'_>, subcommand: &str, config: &str, out: Option<std::path::PathBuf>) -> PyResult<(Vec<String>, bool)> {
    let command = match subcommand {
        "flow" => cli::Command::Flow,
        "critical-values" => cli::Command::CriticalValues,
        "find-orbits" => cli::Command::FindOrbits,
        "scan" => cli::Command::Scan,
        "selftest" => cli::Command::Selftest,
        other => return Err(PyValueError::new_err(format!("unknown subcommand {other:?}"))),
    };
    let mut cfg = ExperimentConfig::from_toml(config).map_err(value_err)?;
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    let outcome = py.allow_threads(|| cli::run(command, &cfg)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((outcome.lines, outcome.success))
}

#[pymodule]
fn maglab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyLoop>()?;
    m.add_class::<PyCritical>()?;
    m.add_function(wrap_pyfunction!(action_value, m)?)?;
    m.add_function(wrap_pyfunction!(hyperbolic_distance, m)?)?;
    m.add_function(wrap_pyfunction!(find_local_min, m)?)?;
    m.add_function(wrap_pyfunction!(mountain_pass, m)?)?;
    m.add_function(wrap_pyfunction!(morse_index, m)?)?;
    m.add_function(wrap_pyfunction!(distinct, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
