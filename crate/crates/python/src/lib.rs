//! Python bindings. Structured results (verdicts, reports, traces) cross
//! the boundary as JSON and come back as plain dicts and lists.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;

use ::srpsim::adversary::{catalog, AdversaryClass};
use ::srpsim::engine::{self, RunOutput};
use ::srpsim::harness::{self, CampaignSpec, RunReport};
use ::srpsim::qos;
use ::srpsim::scenario as sc;
use ::srpsim::ScenarioError;
use ::srpsim::simcore::LinkSchedule;
use ::srpsim::srp::Mode;
use ::srpsim::{verifier, GKind, NodeId, Time, Topology};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scenario_err(e: ScenarioError) -> PyErr {
    match e {
        ScenarioError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// Parses a lowercase enum name the same way scenario files do.
fn parse<T: DeserializeOwned>(what: &str, s: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} {s:?}")))
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn nodes(ids: Vec<u32>) -> Vec<NodeId> {
    ids.into_iter().map(NodeId).collect()
}

/// A validated scenario.
#[pyclass(name = "Scenario", module = "srpsim", frozen)]
struct PyScenario {
    inner: sc::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        sc::parse_scenario(text).map(|inner| Self { inner }).map_err(scenario_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        sc::load_scenario(path).map(|inner| Self { inner }).map_err(scenario_err)
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.config.seed
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Same scenario with every adversary restricted to the independent class.
    fn demoted(&self) -> Self {
        Self {
            inner: engine::demote(&self.inner),
        }
    }

    /// Runs the scenario and checks its expectations. Uses the file's seed
    /// when none is given.
    #[pyo3(signature = (seed=None))]
    fn run(&self, py: Python<'_>, seed: Option<u64>) -> PyResult<PyRun> {
        let seed = seed.unwrap_or(self.inner.config.seed);
        let inner = &self.inner;
        let (out, report) = py
            .detach(|| harness::run_scenario(inner, seed))
            .map_err(value_err)?;
        Ok(PyRun { out, report })
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?})", self.inner.name())
    }
}

/// Outcome of one run.
#[pyclass(name = "Run", module = "srpsim", frozen)]
struct PyRun {
    out: RunOutput,
    report: RunReport,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn seed(&self) -> u64 {
        self.out.seed
    }

    /// 64-bit trace digest.
    #[getter]
    fn digest(&self) -> u64 {
        self.out.digest
    }

    #[getter]
    fn passed(&self) -> bool {
        self.report.passed()
    }

    #[getter]
    fn exit_code(&self) -> i32 {
        self.report.exit_code()
    }

    #[getter]
    fn violations(&self) -> Vec<String> {
        self.report.violations.clone()
    }

    /// Accepted routes as lists of node ids.
    #[getter]
    fn routes(&self) -> Vec<Vec<u32>> {
        self.out
            .accepted
            .iter()
            .map(|r| r.route.iter().map(|n| n.0).collect())
            .collect()
    }

    #[getter]
    fn verdicts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.report.verdicts)
    }

    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.report.summary)
    }

    fn trace_jsonl(&self) -> String {
        self.out.trace.to_jsonl()
    }

    fn __repr__(&self) -> String {
        format!(
            "Run(scenario={:?}, seed={}, routes={}, passed={})",
            self.report.scenario,
            self.out.seed,
            self.out.accepted.len(),
            self.report.passed()
        )
    }
}

fn topology(links: Vec<(u32, u32, Vec<(Time, Time)>)>) -> PyResult<Topology> {
    Topology::new(
        links
            .into_iter()
            .map(|(a, b, up)| LinkSchedule::new(NodeId(a), NodeId(b), up)),
    )
    .map_err(value_err)
}

#[pyfunction]
fn check_loop_free(route: Vec<u32>) -> bool {
    verifier::check_loop_free(&nodes(route))
}

/// `links` holds `(a, b, [(start, end), ...])` up-intervals.
/// Returns `(fresh, stale_links)`.
#[pyfunction]
fn check_fresh(
    route: Vec<u32>,
    links: Vec<(u32, u32, Vec<(Time, Time)>)>,
    t1: Time,
    t2: Time,
) -> PyResult<(bool, Vec<(u32, u32)>)> {
    let (ok, stale) = verifier::check_fresh(&nodes(route), &topology(links)?, t1, t2).map_err(value_err)?;
    Ok((ok, stale.into_iter().map(|(a, b)| (a.0, b.0)).collect()))
}

/// Returns `(weakly_fresh, witness)` with witness `(j, k, detour)` or None.
#[pyfunction]
fn check_weakly_fresh(
    route: Vec<u32>,
    links: Vec<(u32, u32, Vec<(Time, Time)>)>,
    t1: Time,
    t2: Time,
) -> PyResult<(bool, Option<(usize, usize, Vec<u32>)>)> {
    let (ok, w) = verifier::check_weakly_fresh(&nodes(route), &topology(links)?, t1, t2).map_err(value_err)?;
    Ok((ok, w.map(|w| (w.j, w.k, w.detour.into_iter().map(|n| n.0).collect()))))
}

#[pyfunction]
fn route_metric(kind: &str, metrics: Vec<f64>) -> PyResult<f64> {
    qos::route_metric(parse("metric kind", kind)?, &metrics).map_err(value_err)
}

#[pyfunction]
fn delta_good(kind: &str, n: usize, epsilon: f64, delta_tilde: f64) -> PyResult<f64> {
    Ok(qos::delta_good(parse::<GKind>("metric kind", kind)?, n, epsilon, delta_tilde))
}

#[pyfunction]
fn check_metric_consistency(m_own: f64, m_reported: f64, epsilon: f64) -> bool {
    qos::check_metric_consistency(m_own, m_reported, epsilon)
}

/// The attack catalog as a list of dicts.
#[pyfunction]
fn list_attacks<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    let entries: Vec<serde_json::Value> = catalog()
        .iter()
        .map(|e| {
            serde_json::json!({
                "name": e.name,
                "requirement": e.requirement,
                "params": e.params,
                "summary": e.summary,
            })
        })
        .collect();
    to_py(py, &entries)
}

/// Built-in scenarios.
#[pyfunction]
fn corpus() -> PyResult<Vec<PyScenario>> {
    ::srpsim::corpus::corpus()
        .into_iter()
        .map(|f| {
            sc::Scenario::from_file(f)
                .map(|inner| PyScenario { inner })
                .map_err(scenario_err)
        })
        .collect()
}

/// Seeded campaign over random topologies. Returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (runs=1000, class="independent", mode="basic", max_nodes=8, seed=0))]
fn fuzz<'py>(
    py: Python<'py>,
    runs: usize,
    class: &str,
    mode: &str,
    max_nodes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    if !(3..=64).contains(&max_nodes) {
        return Err(PyValueError::new_err("max_nodes must be between 3 and 64"));
    }
    let spec = CampaignSpec {
        runs,
        class: parse::<AdversaryClass>("adversary class", class)?,
        mode: parse::<Mode>("mode", mode)?,
        max_nodes,
        seed,
    };
    let report = py.detach(|| harness::fuzz_campaign(&spec));
    to_py(py, &report)
}

#[pymodule]
fn srpsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(check_loop_free, m)?)?;
    m.add_function(wrap_pyfunction!(check_fresh, m)?)?;
    m.add_function(wrap_pyfunction!(check_weakly_fresh, m)?)?;
    m.add_function(wrap_pyfunction!(route_metric, m)?)?;
    m.add_function(wrap_pyfunction!(delta_good, m)?)?;
    m.add_function(wrap_pyfunction!(check_metric_consistency, m)?)?;
    m.add_function(wrap_pyfunction!(list_attacks, m)?)?;
    m.add_function(wrap_pyfunction!(corpus, m)?)?;
    m.add_function(wrap_pyfunction!(fuzz, m)?)?;
    Ok(())
}
