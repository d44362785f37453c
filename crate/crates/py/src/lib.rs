use normal_market::graphs::Graphs;
use normal_market::markets::{fixture, fixture_catalog};
use normal_market::mechanism::{equilibrium_replay, ReplayConfig};
use normal_market::population::{validate_well_behaved, PopulationSpec};
use normal_market::scalar::{format_scalar, parse_scalar, Scalar};
use normal_market::solver::{classify, find_equilibria_in, verify_equilibrium_in, EquilibriumCandidate};
use normal_market::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::Serialize;

create_exception!(normal_market, MarketError, PyRuntimeError);

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Parse(_) | Error::Spec { .. } | Error::NotFound(_) | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => MarketError::new_err(e.to_string()),
    }
}

/// Converts any serializable value into plain Python objects through `json.loads`.
fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| MarketError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A market population, either a built-in fixture or a parsed JSON spec.
#[pyclass(name = "Market", module = "normal_market", frozen)]
struct PyMarket {
    label: String,
    spec: PopulationSpec,
    frontier: Option<Scalar>,
}

impl PyMarket {
    fn build_graphs(&self) -> PyResult<Graphs> {
        Ok(Graphs::from_spec(&self.spec).map_err(to_py_err)?.with_frontier(self.frontier.clone()))
    }
}

#[pymethods]
impl PyMarket {
    /// Loads a built-in fixture such as `"trading?v=0.43"`.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        let f = fixture(name).map_err(to_py_err)?;
        Ok(PyMarket { label: f.name, spec: f.spec, frontier: f.truncation_frontier })
    }

    /// Parses a JSON population spec.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec = PopulationSpec::from_json(text).map_err(to_py_err)?;
        Ok(PyMarket { label: "json".into(), spec, frontier: None })
    }

    #[getter]
    fn label(&self) -> &str {
        &self.label
    }

    fn to_json(&self) -> String {
        self.spec.to_json()
    }

    /// Per-condition well-behavedness report.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, &validate_well_behaved(&self.spec))
    }

    /// Equilibrium set with its classification, rationals as `"p/q"` strings.
    fn solve<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let set = find_equilibria_in(&self.build_graphs()?).map_err(to_py_err)?;
        to_python(py, &serde_json::json!({ "summary": classify(&set), "equilibria": set }))
    }

    /// One-line human summary of the equilibrium set.
    fn summary(&self) -> PyResult<String> {
        Ok(find_equilibria_in(&self.build_graphs()?).map_err(to_py_err)?.to_string())
    }

    /// Checks a candidate given as a dict or a JSON string.
    fn verify<'py>(&self, py: Python<'py>, candidate: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let text: String = if candidate.is_instance_of::<PyString>() {
            candidate.extract()?
        } else {
            py.import("json")?.call_method1("dumps", (candidate,))?.extract()?
        };
        let cand: EquilibriumCandidate =
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("candidate: {e}")))?;
        to_python(py, &verify_equilibrium_in(&self.build_graphs()?, &cand))
    }

    /// Demand graph, border sets, supply graph and augmented regions.
    fn graphs<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let g = self.build_graphs()?;
        let doc = serde_json::json!({
            "d_max": format_scalar(g.d_max()),
            "s_max": format_scalar(g.s_max()),
            "demand_graph": g.demand_graph(),
            "augmented_demand": g.augmented_demand(),
            "border_v0": g.vertical_border(),
            "border_v1": g.farthest_border(),
            "border_v2": g.sharp_border(),
            "border_v3": g.admissible_border(),
            "supply_graph": g.supply_graph(),
            "augmented_supply": g.augmented_supply(),
        });
        to_python(py, &doc)
    }

    /// Replays the first equilibrium candidate on sampled finite markets.
    #[pyo3(signature = (n = 1000, mediators = 10, replications = 20, seed = 0, mu_bar = "1/2"))]
    fn replay<'py>(
        &self,
        py: Python<'py>,
        n: usize,
        mediators: usize,
        replications: usize,
        seed: u64,
        mu_bar: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mu_bar = parse_scalar(mu_bar).map_err(to_py_err)?;
        let set = find_equilibria_in(&self.build_graphs()?).map_err(to_py_err)?;
        let eq = set
            .candidates
            .first()
            .map(|c| c.candidate.clone())
            .ok_or_else(|| MarketError::new_err("no equilibrium to replay"))?;
        let cfg = ReplayConfig { n, mediators, replications, seed, mu_bar };
        let report = py.detach(|| equilibrium_replay(&self.spec, &eq, &cfg)).map_err(to_py_err)?;
        to_python(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Market({:?})", self.label)
    }
}

/// Built-in fixtures with their expected outcomes.
#[pyfunction]
fn fixtures<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    let items: Vec<_> =
        fixture_catalog().into_iter().map(|f| serde_json::json!({ "name": f.name, "expected": f.expected })).collect();
    to_python(py, &items)
}

/// Solves a fixture or JSON spec in one call.
#[pyfunction]
fn solve<'py>(py: Python<'py>, source: &str) -> PyResult<Bound<'py, PyAny>> {
    let market = match source.strip_prefix("fixture:") {
        Some(name) => PyMarket::fixture(name)?,
        None => PyMarket::from_json(source)?,
    };
    market.solve(py)
}

#[pymodule]
#[pyo3(name = "normal_market")]
fn normal_market_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("MarketError", m.py().get_type::<MarketError>())?;
    m.add_class::<PyMarket>()?;
    m.add_function(wrap_pyfunction!(fixtures, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    Ok(())
}
