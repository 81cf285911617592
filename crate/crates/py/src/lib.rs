//! Python bindings: configs travel as JSON strings, results come back as
//! plain Python lists, tuples and dicts.

use std::path::PathBuf;
use std::sync::Mutex;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use prefmorl::env::{EnvSpec, MoEnv};
use prefmorl::golden::{epsilon_bar, epsilon_star, GoldenSpec};
use prefmorl::preference::{fit_map, ComparisonRecord, GpPreferenceModel, KernelParams, Outcome, Source};
use prefmorl::session::{load_checkpoint, save_checkpoint, RunMode, Session, SessionConfig};
use prefmorl::{ObjectiveVector, WeightVector};

create_exception!(prefmorl, PrefmorlError, PyException);

fn err(e: prefmorl::Error) -> PyErr {
    PrefmorlError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    PrefmorlError::new_err(e.to_string())
}

fn objective(values: Vec<f64>) -> PyResult<ObjectiveVector> {
    ObjectiveVector::new(values).map_err(err)
}

/// Hands a serializable value to Python through the `json` module.
fn to_python<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(json_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_outcome(verdict: &str) -> PyResult<Outcome> {
    verdict.parse().map_err(err)
}

#[pyfunction]
fn das_dennis(m: usize, h: usize) -> PyResult<Vec<Vec<f64>>> {
    let ws = prefmorl::das_dennis(m, h).map_err(err)?;
    Ok(ws.into_iter().map(|w| w.as_slice().to_vec()).collect())
}

#[pyfunction]
fn dominates(a: Vec<f64>, b: Vec<f64>) -> PyResult<bool> {
    prefmorl::dominates(&objective(a)?, &objective(b)?).map_err(err)
}

#[pyfunction]
fn nondominated_filter(points: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    let pts = points.into_iter().map(objective).collect::<PyResult<Vec<_>>>()?;
    prefmorl::nondominated_filter(&pts).map_err(err)
}

/// `(epsilon_star, epsilon_bar)` of `points` against a golden spec given as JSON.
#[pyfunction]
fn epsilon_metrics(points: Vec<Vec<f64>>, golden_json: &str) -> PyResult<(f64, f64)> {
    let g: GoldenSpec = serde_json::from_str(golden_json).map_err(json_err)?;
    let pts = points.into_iter().map(objective).collect::<PyResult<Vec<_>>>()?;
    Ok((epsilon_star(&pts, &g).map_err(err)?, epsilon_bar(&pts, &g).map_err(err)?))
}

#[pyfunction]
fn example_config() -> String {
    serde_json::to_string_pretty(&SessionConfig::example()).expect("config serializes")
}

/// A session driven step by step from Python.
#[pyclass(name = "Session")]
struct PySession {
    inner: Mutex<Session>,
}

impl PySession {
    fn with<R>(&self, f: impl FnOnce(&mut Session) -> R) -> R {
        f(&mut self.inner.lock().expect("session lock"))
    }
}

#[pymethods]
impl PySession {
    #[new]
    #[pyo3(signature = (config_json, baseline = false))]
    fn new(config_json: &str, baseline: bool) -> PyResult<Self> {
        let cfg = SessionConfig::from_json(config_json).map_err(err)?;
        let mode = if baseline { RunMode::Baseline } else { RunMode::Preference };
        Ok(Self {
            inner: Mutex::new(Session::new(cfg, mode).map_err(err)?),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let state = load_checkpoint(&path).map_err(err)?;
        Ok(Self {
            inner: Mutex::new(Session::from_state(state).map_err(err)?),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.with(|s| save_checkpoint(s.state(), &path)).map_err(err)
    }

    #[getter]
    fn phase(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let p = self.with(|s| s.phase());
        to_python(py, &p)
    }

    /// Runs the next block of computation and returns the new phase.
    fn advance(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let p = py.detach(|| self.with(|s| s.advance())).map_err(err)?;
        to_python(py, &p)
    }

    fn pending_query(&self, py: Python<'_>) -> PyResult<Option<Py<PyAny>>> {
        self.with(|s| s.pending_query().cloned())
            .map(|q| to_python(py, &q))
            .transpose()
    }

    /// `verdict` is one of `a_better`, `b_better`, `indifferent`.
    fn submit_feedback(&self, query_id: u64, verdict: &str) -> PyResult<()> {
        let outcome = parse_outcome(verdict)?;
        self.with(|s| s.submit_feedback(query_id, outcome, Source::Human))
            .map_err(err)
    }

    fn stop(&self) {
        self.with(|s| s.stop());
    }

    /// Finishes the session with the configured simulated decision maker.
    fn run_simulated(&self, py: Python<'_>) -> PyResult<()> {
        py.detach(|| self.with(|s| s.run_simulated())).map_err(err)
    }

    /// Active members as dicts with `id`, `objectives`, `weights`, `times_queried`.
    fn archive(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let members: Vec<serde_json::Value> = self.with(|s| {
            s.state()
                .archive
                .tasks
                .iter()
                .map(|t| {
                    serde_json::json!({
                        "id": t.id,
                        "objectives": t.objective_estimate.values(),
                        "weights": t.weight.as_slice(),
                        "times_queried": t.times_queried,
                    })
                })
                .collect()
        });
        to_python(py, &members)
    }

    fn epsilons(&self) -> Option<(f64, f64)> {
        self.with(|s| s.state().epsilons())
    }

    fn metrics(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let m = self.with(|s| s.state().metrics.clone());
        to_python(py, &m)
    }

    fn comparisons(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let c = self.with(|s| s.state().comparisons.clone());
        to_python(py, &c)
    }

    #[getter]
    fn env_steps(&self) -> u64 {
        self.with(|s| s.state().archive.env_steps)
    }
}

/// Runs a full preference-guided session and returns the finished session.
#[pyfunction]
fn run_session(py: Python<'_>, config_json: &str) -> PyResult<PySession> {
    let s = PySession::new(config_json, false)?;
    s.run_simulated(py)?;
    Ok(s)
}

#[pyfunction]
fn run_baseline(py: Python<'_>, config_json: &str) -> PyResult<PySession> {
    let s = PySession::new(config_json, true)?;
    s.run_simulated(py)?;
    Ok(s)
}

/// Pairwise-preference utility model.
#[pyclass(name = "PreferenceModel")]
struct PyPreferenceModel {
    inner: GpPreferenceModel,
}

#[pymethods]
impl PyPreferenceModel {
    /// `comparisons` holds `(a, b, verdict)` triples.
    #[staticmethod]
    #[pyo3(signature = (comparisons, length_scale = 1.0, signal_variance = 1.0))]
    fn fit(comparisons: Vec<(Vec<f64>, Vec<f64>, String)>, length_scale: f64, signal_variance: f64) -> PyResult<Self> {
        let data = comparisons
            .into_iter()
            .map(|(a, b, v)| Ok(ComparisonRecord::new(objective(a)?, objective(b)?, parse_outcome(&v)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let kernel = KernelParams {
            length_scale,
            signal_variance,
            ..KernelParams::default()
        };
        Ok(Self {
            inner: fit_map(&data, kernel).map_err(err)?,
        })
    }

    /// Posterior `(mean, variance)` of the utility at `f`.
    fn predict(&self, f: Vec<f64>) -> PyResult<(f64, f64)> {
        self.inner.predict(&f).map_err(err)
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }
}

/// A multi-objective environment built from an env spec, e.g.
/// `{"id": "mmsd", "params": {}}`.
#[pyclass(name = "Env")]
struct PyEnv {
    inner: Mutex<Box<dyn MoEnv>>,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec: EnvSpec = serde_json::from_str(spec_json).map_err(json_err)?;
        Ok(Self {
            inner: Mutex::new(spec.build().map_err(err)?),
        })
    }

    fn reset(&self) -> Vec<f64> {
        self.inner.lock().expect("env lock").reset()
    }

    /// Returns `(observation, reward_vector, done)`.
    fn step(&self, action: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>, bool)> {
        let out = self.inner.lock().expect("env lock").step(&action).map_err(err)?;
        Ok((out.observation, out.reward, out.done))
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.lock().expect("env lock").state_dim()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.lock().expect("env lock").action_dim()
    }

    #[getter]
    fn objective_count(&self) -> usize {
        self.inner.lock().expect("env lock").objective_count()
    }
}

/// Moves `w` toward `reference` by `eta`; both on the simplex.
#[pyfunction]
fn shift_weight(w: Vec<f64>, reference: Vec<f64>, eta: f64) -> PyResult<Vec<f64>> {
    let w = WeightVector::new(w).map_err(err)?;
    let r = WeightVector::new(reference).map_err(err)?;
    Ok(prefmorl::weights::shift_weight(&w, &r, eta).map_err(err)?.as_slice().to_vec())
}

#[pymodule(name = "prefmorl")]
fn prefmorl_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PrefmorlError", m.py().get_type::<PrefmorlError>())?;
    m.add_function(wrap_pyfunction!(das_dennis, m)?)?;
    m.add_function(wrap_pyfunction!(dominates, m)?)?;
    m.add_function(wrap_pyfunction!(nondominated_filter, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(example_config, m)?)?;
    m.add_function(wrap_pyfunction!(shift_weight, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(run_baseline, m)?)?;
    m.add_class::<PySession>()?;
    m.add_class::<PyPreferenceModel>()?;
    m.add_class::<PyEnv>()?;
    Ok(())
}
