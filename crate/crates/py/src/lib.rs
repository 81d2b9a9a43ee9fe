//! Python bindings: process and channel models, GoT tensors, the belief
//! engine, PSBO, single episodes and sweeps.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sleepsched_core as core;
use sleepsched_core::harness::{run_sweep as core_run_sweep, ExperimentConfig, SweepSpec};
use sleepsched_core::schedulers::{psbo_decide as core_psbo_decide, threshold_theta as core_threshold_theta, PsboParams};
use sleepsched_core::{AckReport, CostWeights, EnergyProfile, LinkEstimator, MetricKind, ProcessSpace, ProcessState, RngSeed, StrategyId};

fn to_py(e: core::Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn metric(name: &str) -> PyResult<MetricKind> {
    match name {
        "aoi" => Ok(MetricKind::Aoi),
        "aoii" => Ok(MetricKind::Aoii),
        other => Err(PyValueError::new_err(format!("metric must be \"aoi\" or \"aoii\", got {other:?}"))),
    }
}

fn strategy(name: &str) -> PyResult<StrategyId> {
    name.parse().map_err(to_py)
}

fn space(n_states: usize) -> PyResult<ProcessSpace> {
    ProcessSpace::new(n_states).map_err(to_py)
}

#[pyclass(name = "MarkovChain", module = "sleepsched", from_py_object)]
#[derive(Clone)]
struct PyMarkovChain {
    inner: core::MarkovChain,
}

#[pymethods]
impl PyMarkovChain {
    #[new]
    fn new(transitions: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: core::MarkovChain::new(transitions).map_err(to_py)?,
        })
    }

    /// Birth-death chain moving to a neighbouring state with total rate `p_change`.
    #[staticmethod]
    fn adjacent(n_states: usize, p_change: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::adjacent_state_process(n_states, p_change).map_err(to_py)?,
        })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows().to_vec()
    }

    fn stationary(&self) -> Vec<f64> {
        self.inner.stationary()
    }

    /// Samples a path of `steps` states after `start`.
    #[pyo3(signature = (start, steps, seed=0))]
    fn sample(&self, start: usize, steps: usize, seed: u64) -> PyResult<Vec<usize>> {
        let mut rng = RngSeed::new(seed, 0).rng();
        let mut x = start;
        (0..steps)
            .map(|_| {
                x = self.inner.step(x, &mut rng).map_err(to_py)?;
                Ok(x)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("MarkovChain(n_states={})", self.inner.n_states())
    }
}

#[pyclass(name = "ChannelChain", module = "sleepsched", from_py_object)]
#[derive(Clone)]
struct PyChannelChain {
    inner: core::ChannelChain,
}

#[pymethods]
impl PyChannelChain {
    #[staticmethod]
    #[pyo3(signature = (data_erasure=0.01))]
    fn default_leo(data_erasure: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::ChannelChain::default_leo(0.0)
                .with_data_erasure(data_erasure)
                .map_err(to_py)?,
        })
    }

    /// Fits a chain to round-trip delays (ms) sampled once per step.
    #[staticmethod]
    #[pyo3(signature = (delays_ms, bin_ms=20.0, data_erasure=0.0))]
    fn fit(delays_ms: Vec<f64>, bin_ms: f64, data_erasure: f64) -> PyResult<Self> {
        let trace = core::DelayTrace::from_delays(&delays_ms).map_err(to_py)?;
        Ok(Self {
            inner: core::fit_channel_from_trace(&trace, bin_ms, data_erasure).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::ChannelChain::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn transitions(&self) -> Vec<Vec<f64>> {
        self.inner.chain.rows().to_vec()
    }

    fn round_trips(&self) -> Vec<f64> {
        self.inner.states.iter().map(|s| s.round_trip()).collect()
    }
}

#[pyclass(name = "GoTensor", module = "sleepsched", from_py_object)]
#[derive(Clone)]
struct PyGoTensor {
    inner: core::GoTensor,
}

#[pymethods]
impl PyGoTensor {
    /// Tensor from a nested `[x][x_rx][age]` list.
    #[new]
    #[pyo3(signature = (costs, metric="aoii"))]
    fn new(costs: Vec<Vec<Vec<f64>>>, metric: &str) -> PyResult<Self> {
        let n = costs.len();
        let len = costs.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if n == 0 || len == 0 {
            return Err(PyValueError::new_err("costs must be a non-empty [x][x_rx][age] array"));
        }
        let flat: Vec<f64> = costs.into_iter().flatten().flatten().collect();
        let inner = core::GoTensor::from_flat(n, len as u32 - 1, self::metric(metric)?, flat).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Mismatch cost `alpha * age` for critical states, `beta * age` otherwise.
    #[staticmethod]
    #[pyo3(signature = (n_states, critical=vec![0], alpha=1.0, beta=0.001, cap=core::DEFAULT_AGE_CAP))]
    fn got_a(n_states: usize, critical: Vec<usize>, alpha: f64, beta: f64, cap: u32) -> PyResult<Self> {
        let critical: Vec<ProcessState> = critical.into_iter().map(ProcessState).collect();
        Ok(Self {
            inner: core::make_got_a(&space(n_states)?, &critical, alpha, beta, cap).map_err(to_py)?,
        })
    }

    /// Random linear-in-age tensor with variability `v`.
    #[staticmethod]
    #[pyo3(signature = (n_states, v=0.1, cap=core::DEFAULT_AGE_CAP, seed=1))]
    fn got_b(n_states: usize, v: f64, cap: u32, seed: u64) -> PyResult<Self> {
        let mut rng = RngSeed::new(seed, 0).rng();
        Ok(Self {
            inner: core::make_got_b(&space(n_states)?, v, cap, &mut rng).map_err(to_py)?.tensor,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn get(&self, x: usize, x_rx: usize, age: u32) -> PyResult<f64> {
        self.inner.try_get(x, x_rx, age).map_err(to_py)
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn cap(&self) -> u32 {
        self.inner.cap()
    }

    #[getter]
    fn metric(&self) -> &'static str {
        match self.inner.metric() {
            MetricKind::Aoi => "aoi",
            MetricKind::Aoii => "aoii",
        }
    }
}

/// The device's belief about the process, the receiver and the age metric.
#[pyclass(name = "Belief", module = "sleepsched", from_py_object)]
#[derive(Clone)]
struct PyBelief {
    inner: core::Belief,
}

fn ack(acked: Option<bool>, round_trip: f64) -> Option<AckReport> {
    acked.map(|a| if a { AckReport::acked(round_trip) } else { AckReport::lost() })
}

#[pymethods]
impl PyBelief {
    /// Belief right after sensing `x0` and delivering it.
    #[new]
    #[pyo3(signature = (n_states, cap=core::DEFAULT_AGE_CAP, metric="aoii", x0=0, prior_count=1.0))]
    fn new(n_states: usize, cap: u32, metric: &str, x0: usize, prior_count: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::Belief::synchronized(n_states, cap, self::metric(metric)?, x0, prior_count).map_err(to_py)?,
        })
    }

    /// Replaces the transition counts.
    fn set_counts(&mut self, counts: Vec<Vec<f64>>) -> PyResult<()> {
        self.inner = self.inner.clone().with_counts(counts).map_err(to_py)?;
        Ok(())
    }

    fn set_sleep(&mut self, n_sleep: u32) {
        self.inner.set_sleep(n_sleep);
    }

    /// Advances one step. `sensed` must be given exactly when awake; `acked`
    /// is the feedback for a transmission in this step, if any.
    #[pyo3(signature = (t, sensed=None, acked=None, round_trip=0.0))]
    fn update(&mut self, t: u64, sensed: Option<usize>, acked: Option<bool>, round_trip: f64) -> PyResult<()> {
        self.inner.update(t, sensed, ack(acked, round_trip)).map_err(to_py)
    }

    /// Replays any pending sleep steps, then applies the awake update at `t`.
    #[pyo3(signature = (t, sensed, acked=None, round_trip=0.0))]
    fn wake_at(&mut self, t: u64, sensed: usize, acked: Option<bool>, round_trip: f64) -> PyResult<()> {
        self.inner.wake_at(t, sensed, ack(acked, round_trip)).map_err(to_py)
    }

    fn predict_cost(&self, got: &PyGoTensor) -> PyResult<f64> {
        self.inner.predict_cost(&got.inner).map_err(to_py)
    }

    fn mismatch_probability(&self) -> f64 {
        self.inner.mismatch_probability()
    }

    fn transition_estimate(&self) -> Vec<Vec<f64>> {
        self.inner.normalized_proc_est()
    }

    #[getter]
    fn d_x(&self) -> Vec<f64> {
        self.inner.d_x().to_vec()
    }

    #[getter]
    fn d_x_rx(&self) -> Vec<f64> {
        self.inner.d_x_rx().to_vec()
    }

    #[getter]
    fn n_sleep(&self) -> u32 {
        self.inner.n_sleep()
    }

    fn is_asleep_at(&self, t: u64) -> bool {
        self.inner.is_asleep_at(t)
    }
}

/// Optimal sleep length under the belief, with link statistics given as
/// acknowledged and lost attempt counts.
#[pyfunction]
#[pyo3(signature = (belief, got, w_e=1.0, w_qual=1.0, acks=0, losses=0, round_trip=0.064, max_sleep=300, tail=0.0))]
#[allow(clippy::too_many_arguments)]
fn psbo_decide(
    belief: &PyBelief,
    got: &PyGoTensor,
    w_e: f64,
    w_qual: f64,
    acks: u32,
    losses: u32,
    round_trip: f64,
    max_sleep: u32,
    tail: f64,
) -> PyResult<u32> {
    let mut link = LinkEstimator::with_prior(EnergyProfile::default().t_tx);
    for _ in 0..acks {
        link.record(true, Some(round_trip));
    }
    for _ in 0..losses {
        link.record(false, None);
    }
    let weights = CostWeights::new(w_e, w_qual).map_err(to_py)?;
    core_psbo_decide(
        &belief.inner,
        &link,
        &got.inner,
        &weights,
        &EnergyProfile::default(),
        &PsboParams::default(),
        max_sleep,
        tail,
    )
    .map(|a| a.0)
    .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (w_e=1.0, w_qual=1.0))]
fn threshold_theta(w_e: f64, w_qual: f64) -> PyResult<u32> {
    let weights = CostWeights::new(w_e, w_qual).map_err(to_py)?;
    core_threshold_theta(&weights, &EnergyProfile::default()).map_err(to_py)
}

fn load_config(config: &str, base_dir: Option<PathBuf>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_toml_str(config).map_err(to_py)?;
    if let Some(dir) = base_dir {
        cfg.base_dir = dir;
    }
    Ok(cfg)
}

/// Runs one episode from TOML config text and returns its summary. With
/// `records=True` the per-step ledger is included under `"records"`.
#[pyfunction]
#[pyo3(signature = (config="", strategy=None, seed=None, records=false, base_dir=None))]
fn run_episode<'py>(
    py: Python<'py>,
    config: &str,
    strategy: Option<&str>,
    seed: Option<u64>,
    records: bool,
    base_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = load_config(config, base_dir)?;
    if let Some(s) = strategy {
        cfg.strategy = self::strategy(s)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let prepared = cfg.prepare().map_err(to_py)?;
    let sim = prepared.sim_config(cfg.strategy, RngSeed::new(cfg.seed, 0), records);
    let ledger = py.detach(|| core::run_episode(sim)).map_err(to_py)?;
    let s = ledger.summary();
    let out = PyDict::new(py);
    out.set_item("c_e", s.c_e)?;
    out.set_item("c_qual", s.c_qual)?;
    out.set_item("c_avg", s.c_avg)?;
    out.set_item("steps", s.steps)?;
    out.set_item("seed", s.seed)?;
    out.set_item("transmissions", ledger.transmissions())?;
    out.set_item("acks", ledger.acks())?;
    if let Some(rs) = ledger.records() {
        let rows = rs
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("step", r.step)?;
                d.set_item("energy_j", r.energy_j)?;
                d.set_item("quality_cost", r.quality_cost)?;
                d.set_item("total_cost", r.total_cost)?;
                d.set_item("slept", r.slept)?;
                d.set_item("transmitted", r.transmitted)?;
                d.set_item("acked", r.acked)?;
                d.set_item("aoi_rx", r.aoi_rx)?;
                d.set_item("aoii", r.aoii)?;
                Ok(d)
            })
            .collect::<PyResult<Vec<_>>>()?;
        out.set_item("records", rows)?;
    }
    Ok(out)
}

/// Runs the `[sweep]` section of a TOML config. Returns one dict per episode
/// and, when `out_dir` is given, also writes the usual CSV and JSON files.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None, base_dir=None))]
fn run_sweep<'py>(
    py: Python<'py>,
    config: &str,
    out_dir: Option<PathBuf>,
    base_dir: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = load_config(config, base_dir)?;
    let spec = SweepSpec::from_config(&cfg).map_err(to_py)?;
    let results = py.detach(|| core_run_sweep(&spec)).map_err(to_py)?;
    if let Some(dir) = out_dir {
        results
            .write_all(&dir, core::harness::preset_name(spec.repetitions))
            .map_err(to_py)?;
    }
    results
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("parameter_value", r.parameter_value)?;
            d.set_item("strategy", r.strategy.as_str())?;
            d.set_item("repetition", r.repetition)?;
            d.set_item("c_e", r.c_e)?;
            d.set_item("c_qual", r.c_qual)?;
            d.set_item("c_avg", r.c_avg)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn sleepsched(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarkovChain>()?;
    m.add_class::<PyChannelChain>()?;
    m.add_class::<PyGoTensor>()?;
    m.add_class::<PyBelief>()?;
    m.add_function(wrap_pyfunction!(psbo_decide, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_theta, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add("STRATEGIES", StrategyId::ALL.map(StrategyId::as_str).to_vec())?;
    m.add("DEFAULT_AGE_CAP", core::DEFAULT_AGE_CAP)?;
    Ok(())
}
