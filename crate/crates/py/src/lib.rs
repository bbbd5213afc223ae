//! Python bindings. Structured results cross the boundary as JSON and come
//! back as plain dicts and lists; configs are accepted the same way.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rsc_core::envs::{ToyEnv as CoreEnv, ToyEnvConfig};
use rsc_core::mdp::{optimal_policy, FiniteMdp as CoreMdp};
use rsc_core::scmdp::{marginalize, robust_sc_value_iteration, ScMdpSpec};
use rsc_core::trainer::{self, TrainConfig};
use rsc_core::RscError;

fn to_py(err: RscError) -> PyErr {
    if err.is_validation() || matches!(err, RscError::Io(_)) {
        PyValueError::new_err(err.to_string())
    } else {
        PyArithmeticError::new_err(err.to_string())
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Serializes through JSON into native Python objects.
fn to_object<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Worst-case expectation `min P·v` over the TV ball of radius `sigma`
/// around `p0`. Returns `(value, worst_distribution)`.
#[pyfunction]
fn tv_worst_case_expectation(p0: Vec<f64>, v: Vec<f64>, sigma: f64) -> PyResult<(f64, Vec<f64>)> {
    let wc = rsc_core::robust::tv_worst_case_expectation(&p0, &v, sigma).map_err(to_py)?;
    Ok((wc.value, wc.worst))
}

/// Episodic tabular MDP.
#[pyclass(name = "FiniteMdp", from_py_object)]
#[derive(Clone)]
struct FiniteMdp {
    inner: CoreMdp,
}

#[pymethods]
impl FiniteMdp {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CoreMdp::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    /// Optimal values and policy: `{"values": {"v", "q"}, "policy": ...}`.
    fn solve<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let (policy, values) = optimal_policy(&self.inner);
        to_object(py, &serde_json::json!({ "values": values, "policy": policy }))
    }

    /// Robust value iteration with a TV ball around each kernel row.
    fn robust_solve<'py>(&self, py: Python<'py>, sigma: f64) -> PyResult<Bound<'py, PyAny>> {
        let report = rsc_core::robust::robust_value_iteration_rmdp(&self.inner, sigma).map_err(to_py)?;
        to_object(py, &report)
    }
}

/// MDP whose kernels depend on an unobserved confounder.
#[pyclass(name = "ScMdp", from_py_object)]
#[derive(Clone)]
struct ScMdp {
    inner: ScMdpSpec,
}

#[pymethods]
impl ScMdp {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ScMdpSpec::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn confounder_size(&self) -> usize {
        self.inner.confounder_size()
    }

    /// The plain MDP obtained by averaging out the nominal confounder.
    fn marginalize(&self) -> PyResult<FiniteMdp> {
        Ok(FiniteMdp { inner: marginalize(&self.inner).map_err(to_py)? })
    }

    /// Robust optimum over a TV ball around the confounder distribution.
    fn robust_solve<'py>(&self, py: Python<'py>, sigma: f64) -> PyResult<Bound<'py, PyAny>> {
        let report = robust_sc_value_iteration(&self.inner, sigma).map_err(to_py)?;
        to_object(py, &report)
    }
}

#[pyfunction]
fn build_standard_mdp(horizon: usize) -> PyResult<FiniteMdp> {
    Ok(FiniteMdp { inner: rsc_core::hard_instance::build_standard_mdp(horizon).map_err(to_py)? })
}

#[pyfunction]
fn build_rsc_mdp(horizon: usize) -> PyResult<ScMdp> {
    Ok(ScMdp { inner: rsc_core::hard_instance::build_rsc_mdp(horizon).map_err(to_py)? })
}

#[pyfunction]
#[pyo3(signature = (horizon, sigma1, sigma2))]
fn verify_theorem2<'py>(py: Python<'py>, horizon: usize, sigma1: f64, sigma2: f64) -> PyResult<Bound<'py, PyAny>> {
    let report = rsc_core::hard_instance::verify_theorem2(horizon, sigma1, sigma2).map_err(to_py)?;
    to_object(py, &report)
}

/// Donor row for replacing dimension `dim` of `states[target]`.
#[pyfunction]
fn swap_donor(states: Vec<Vec<f64>>, target: usize, dim: usize) -> PyResult<usize> {
    rsc_core::augment::swap_donor(&states, target, dim).map_err(to_py)
}

/// Swaps one random dimension of `states[target]`. Returns
/// `(new_state, dim, donor)`.
#[pyfunction]
fn permute_dimension(states: Vec<Vec<f64>>, target: usize, seed: u64) -> PyResult<(Vec<f64>, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rsc_core::augment::permute_dimension(&states, target, &mut rng).map_err(to_py)
}

/// Point-mass environment; the config is the JSON environment section.
#[pyclass(name = "ToyEnv")]
struct ToyEnv {
    env: CoreEnv,
    rng: ChaCha8Rng,
}

#[pymethods]
impl ToyEnv {
    #[new]
    fn new(config_json: &str) -> PyResult<Self> {
        let config: ToyEnvConfig = parse(config_json)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { env: CoreEnv::new(config).map_err(to_py)?, rng })
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.env.config().obs_dim()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.env.reset(&mut self.rng)
    }

    /// Returns `(observation, reward, done)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool)> {
        let s = self.env.step(&action).map_err(to_py)?;
        Ok((s.observation, s.reward, s.done))
    }
}

/// Trains from a JSON training config. Returns the metrics dict; with
/// `output_stem`, the agent is also saved there.
#[pyfunction]
#[pyo3(signature = (config_json, output_stem=None))]
fn train<'py>(py: Python<'py>, config_json: &str, output_stem: Option<std::path::PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let config: TrainConfig = parse(config_json)?;
    let outcome = py.detach(|| trainer::train(&config)).map_err(to_py)?;
    if let Some(stem) = output_stem {
        trainer::save_agent(&stem, &outcome.agent).map_err(to_py)?;
    }
    to_object(py, &outcome.metrics)
}

/// Deterministic-policy returns of a saved agent.
#[pyfunction]
#[pyo3(signature = (checkpoint_stem, env_json, episodes=10, seed=12345))]
fn evaluate<'py>(
    py: Python<'py>,
    checkpoint_stem: std::path::PathBuf,
    env_json: &str,
    episodes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let env: ToyEnvConfig = parse(env_json)?;
    let agent = trainer::load_agent(&checkpoint_stem).map_err(to_py)?;
    let summary = trainer::evaluate(&agent, &env, episodes, seed).map_err(to_py)?;
    to_object(py, &summary)
}

#[pymodule]
fn rsc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<FiniteMdp>()?;
    m.add_class::<ScMdp>()?;
    m.add_class::<ToyEnv>()?;
    m.add_function(wrap_pyfunction!(tv_worst_case_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(build_standard_mdp, m)?)?;
    m.add_function(wrap_pyfunction!(build_rsc_mdp, m)?)?;
    m.add_function(wrap_pyfunction!(verify_theorem2, m)?)?;
    m.add_function(wrap_pyfunction!(swap_donor, m)?)?;
    m.add_function(wrap_pyfunction!(permute_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
