//! Python bindings: constraint sets, graphs, the editing environment,
//! training and generation, search baselines and composition.

use graph_pcg::baselines::{self, EAParams, SearchStats, DEFAULT_RANDOM_BUDGET};
use graph_pcg::composer::{self, CompositeGraph, JunctionRule};
use graph_pcg::constraints::builtin;
use graph_pcg::env::{self as genv, EnvSpec, Representation};
use graph_pcg::export::{self, DotOptions};
use graph_pcg::learner::{self, ModelArtifact, TrainSpec};
use graph_pcg::{bench, cli, init_random, CellIndex, Error, GraphConfig, GraphState};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Training(_) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for graph_pcg::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyclass(name = "ConstraintSet", module = "graphpcg", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyConstraintSet {
    inner: graph_pcg::ConstraintSet,
}

#[pymethods]
impl PyConstraintSet {
    /// Parses constraint JSON text.
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self { inner: graph_pcg::ConstraintSet::parse(text).or_py()? })
    }

    /// A file path or a bundled name such as `set1` or `set1_economy`.
    #[staticmethod]
    fn load(name_or_path: &str) -> PyResult<Self> {
        Ok(Self { inner: cli::load_constraints(name_or_path).or_py()? })
    }

    #[staticmethod]
    fn builtin(id: usize) -> PyResult<Self> {
        builtin::set(id)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyValueError::new_err(format!("no bundled set {id}")))
    }

    fn type_names(&self) -> Vec<String> {
        (0..self.inner.num_types()).map(|t| self.inner.type_name(t as u8).to_string()).collect()
    }

    fn requires(&self, name: &str) -> PyResult<Vec<String>> {
        let t = self.code(name)?;
        Ok(self.inner.requires(t).iter().map(|&r| self.inner.type_name(r).to_string()).collect())
    }

    fn edge_allowed(&self, a: &str, b: &str) -> PyResult<bool> {
        Ok(self.inner.edge_allowed(self.code(a)?, self.code(b)?))
    }

    fn is_valid(&self, graph: &PyGraph) -> bool {
        self.inner.is_valid(&graph.inner)
    }

    fn violations(&self, graph: &PyGraph) -> usize {
        self.inner.violation_total(&graph.inner)
    }

    /// Per-node violation counts.
    fn node_violations(&self, graph: &PyGraph) -> Vec<usize> {
        self.inner.total_violations(&graph.inner).per_node
    }

    fn __repr__(&self) -> String {
        format!("ConstraintSet({})", self.type_names().join(", "))
    }
}

impl PyConstraintSet {
    fn code(&self, name: &str) -> PyResult<u8> {
        self.inner
            .type_code(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown node type {name:?}")))
    }

    fn config(&self, text: &str) -> PyResult<GraphConfig> {
        let config = self.inner.parse_config(text).or_py()?;
        self.inner.check_config(&config).or_py()?;
        Ok(config)
    }
}

#[pyclass(name = "GraphState", module = "graphpcg", skip_from_py_object)]
#[derive(Clone)]
pub struct PyGraph {
    inner: GraphState,
}

#[pymethods]
impl PyGraph {
    /// `diagonal` holds type codes; `empty` is the padding code.
    #[new]
    #[pyo3(signature = (diagonal, empty, edges = Vec::new()))]
    fn new(diagonal: Vec<u8>, empty: u8, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self { inner: GraphState::from_edges(diagonal, empty, edges).or_py()? })
    }

    /// Random start state for a configuration such as `U=2,V=2,W=1`.
    #[staticmethod]
    #[pyo3(signature = (cs, config, max_size, seed = 0, edge_prob = 0.5))]
    fn random(cs: &PyConstraintSet, config: &str, max_size: usize, seed: u64, edge_prob: f64) -> PyResult<Self> {
        let config = cs.config(config)?;
        Ok(Self { inner: init_random(&config, max_size, edge_prob, seed).or_py()? })
    }

    #[staticmethod]
    fn from_json(text: &str, cs: &PyConstraintSet) -> PyResult<Self> {
        Ok(Self { inner: export::graph_from_json_str(text, &cs.inner).or_py()? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn diagonal(&self) -> Vec<u8> {
        self.inner.diagonal().to_vec()
    }

    /// Edges as (row, col) with row > col.
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().map(|c| (c.row, c.col)).collect()
    }

    fn has_edge(&self, a: usize, b: usize) -> bool {
        self.inner.has_edge(a, b)
    }

    fn toggle(&mut self, row: usize, col: usize) -> PyResult<()> {
        self.inner.toggle(CellIndex::new(row, col).or_py()?).or_py()
    }

    fn to_json(&self, cs: &PyConstraintSet) -> PyResult<String> {
        export::graph_to_json_string(&self.inner, &cs.inner).or_py()
    }

    #[pyo3(signature = (cs, direction = None))]
    fn to_dot(&self, cs: &PyConstraintSet, direction: Option<Vec<String>>) -> PyResult<String> {
        Ok(export::graph_to_dot(&self.inner, &cs.inner, &dot_options(cs, direction)?))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("GraphState(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

fn dot_options(cs: &PyConstraintSet, direction: Option<Vec<String>>) -> PyResult<DotOptions> {
    match direction {
        Some(names) => {
            DotOptions::with_direction(&cs.inner, &names.iter().map(String::as_str).collect::<Vec<_>>()).or_py()
        }
        None => Ok(DotOptions::default()),
    }
}

#[pyclass(name = "Env", module = "graphpcg", unsendable)]
pub struct PyEnv {
    inner: genv::Env,
    cs: PyConstraintSet,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (cs, max_size, representation = "graph-wide"))]
    fn new(cs: &PyConstraintSet, max_size: usize, representation: &str) -> PyResult<Self> {
        let repr: Representation = representation.parse().or_py()?;
        let spec = EnvSpec::new(max_size, repr, "python");
        Ok(Self { inner: genv::Env::new(spec, cs.inner.clone()).or_py()?, cs: cs.clone() })
    }

    #[getter]
    fn action_count(&self) -> usize {
        self.inner.spec().action_count()
    }

    #[getter]
    fn observation_shape(&self) -> (usize, usize, usize) {
        let [a, b, c] = self.inner.observation_shape();
        (a, b, c)
    }

    #[getter]
    fn state(&self) -> PyGraph {
        PyGraph { inner: self.inner.state().clone() }
    }

    /// Starts an episode; without `config` one is sampled. Returns the
    /// flattened one-hot observation.
    #[pyo3(signature = (config = None, seed = 0))]
    fn reset(&mut self, config: Option<&str>, seed: u64) -> PyResult<Vec<f32>> {
        let config = config.map(|c| self.cs.config(c)).transpose()?;
        Ok(self.inner.reset(config.as_ref(), seed).or_py()?.data)
    }

    /// Returns (observation, reward, done, info).
    fn step<'py>(&mut self, py: Python<'py>, action: usize) -> PyResult<(Vec<f32>, f32, bool, Bound<'py, PyDict>)> {
        let out = self.inner.step(action).or_py()?;
        let info = PyDict::new(py);
        info.set_item("changed", out.info.changed)?;
        info.set_item("valid", out.info.valid)?;
        info.set_item("iterations", out.info.iterations)?;
        info.set_item("changes", out.info.changes)?;
        info.set_item("termination", out.info.termination.map(|t| t.to_string()))?;
        Ok((out.observation.data, out.reward, out.done, info))
    }
}

#[pyclass(name = "Model", module = "graphpcg", frozen)]
pub struct PyModel {
    inner: ModelArtifact,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: ModelArtifact::load(path).or_py()? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).or_py()
    }

    #[getter]
    fn max_size(&self) -> usize {
        self.inner.max_size()
    }

    #[getter]
    fn representation(&self) -> String {
        self.inner.env_spec().representation.to_string()
    }

    #[getter]
    fn constraints(&self) -> PyConstraintSet {
        PyConstraintSet { inner: self.inner.constraints.clone() }
    }

    /// Greedy generation for a configuration. Returns (graph, valid, iterations).
    #[pyo3(signature = (config, seed = 0))]
    fn generate(&self, config: &str, seed: u64) -> PyResult<(PyGraph, bool, usize)> {
        let cs = PyConstraintSet { inner: self.inner.constraints.clone() };
        let config = cs.config(config)?;
        let (g, trace) = learner::generate(&self.inner, &config, seed).or_py()?;
        Ok((PyGraph { inner: g }, trace.valid, trace.iterations))
    }

    /// Fraction of valid graphs and mean iterations over sampled configurations.
    #[pyo3(signature = (samples = 500, seed = 0))]
    fn validity_rate(&self, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        bench::validity_rate(&self.inner, samples, seed).or_py()
    }
}

/// Trains a policy; `steps` must be a multiple of `rollout`.
#[pyfunction]
#[pyo3(signature = (cs, max_size, representation = "graph-wide", steps = 500_000, seed = 0, rollout = 1250))]
fn train(
    cs: &PyConstraintSet,
    max_size: usize,
    representation: &str,
    steps: usize,
    seed: u64,
    rollout: usize,
) -> PyResult<PyModel> {
    let repr: Representation = representation.parse().or_py()?;
    let mut spec = TrainSpec::new(EnvSpec::new(max_size, repr, "python"), steps, seed);
    spec.rollout_len = rollout;
    let out = learner::train(&spec, &cs.inner).or_py()?;
    Ok(PyModel { inner: out.artifact })
}

fn stats_dict<'py>(py: Python<'py>, st: &SearchStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("success", st.success)?;
    d.set_item("evaluations", st.evaluations)?;
    d.set_item("iterations", st.iterations)?;
    d.set_item("final_violations", st.final_violations)?;
    d.set_item("seconds", st.duration.as_secs_f64())?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (cs, config, max_size, seed = 0, budget = DEFAULT_RANDOM_BUDGET))]
fn random_search<'py>(
    py: Python<'py>,
    cs: &PyConstraintSet,
    config: &str,
    max_size: usize,
    seed: u64,
    budget: u64,
) -> PyResult<(PyGraph, Bound<'py, PyDict>)> {
    let config = cs.config(config)?;
    let (g, st) = baselines::random_search(&cs.inner, &config, max_size, seed, budget).or_py()?;
    Ok((PyGraph { inner: g }, stats_dict(py, &st)?))
}

#[pyfunction]
#[pyo3(signature = (cs, config, max_size, seed = 0, population = 50, max_generations = 10_000))]
fn ea_generate<'py>(
    py: Python<'py>,
    cs: &PyConstraintSet,
    config: &str,
    max_size: usize,
    seed: u64,
    population: usize,
    max_generations: u64,
) -> PyResult<(PyGraph, Bound<'py, PyDict>)> {
    let config = cs.config(config)?;
    let params = EAParams { population, max_generations, ..EAParams::with_seed(seed) };
    let (g, st) = baselines::ea_generate(&cs.inner, &config, max_size, &params).or_py()?;
    Ok((PyGraph { inner: g }, stats_dict(py, &st)?))
}

#[pyclass(name = "Composite", module = "graphpcg", frozen)]
pub struct PyComposite {
    inner: CompositeGraph,
    cs: PyConstraintSet,
}

#[pymethods]
impl PyComposite {
    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_subgraphs(&self) -> usize {
        self.inner.subgraphs.len()
    }

    fn is_valid(&self) -> bool {
        composer::validate_composite(&self.inner, &self.cs.inner)
    }

    fn flatten(&self) -> PyResult<PyGraph> {
        Ok(PyGraph { inner: self.inner.flatten().or_py()? })
    }

    fn to_json(&self) -> PyResult<String> {
        export::json_string(&export::composite_to_json(&self.inner, &self.cs.inner).or_py()?).or_py()
    }

    #[pyo3(signature = (direction = None))]
    fn to_dot(&self, direction: Option<Vec<String>>) -> PyResult<String> {
        export::composite_to_dot(&self.inner, &self.cs.inner, &dot_options(&self.cs, direction)?).or_py()
    }
}

/// Chains valid graphs: each one after the first is linked to the graphs
/// before it by `edges` junctions from a `from_type` node to a `to_type` node.
#[pyfunction]
#[pyo3(signature = (cs, graphs, from_type, to_type, edges = 1, seed = 0))]
fn compose(
    cs: &PyConstraintSet,
    graphs: Vec<PyRef<'_, PyGraph>>,
    from_type: &str,
    to_type: &str,
    edges: usize,
    seed: u64,
) -> PyResult<PyComposite> {
    let (first, rest) = graphs
        .split_first()
        .ok_or_else(|| PyValueError::new_err("compose needs at least one graph"))?;
    let rule = JunctionRule::by_name(&cs.inner, from_type, to_type).or_py()?.with_edges(edges);
    let mut c = CompositeGraph::new(&first.inner).or_py()?;
    for (i, g) in rest.iter().enumerate() {
        c = composer::concatenate(&c, &g.inner, &rule, &cs.inner, seed.wrapping_add(i as u64)).or_py()?;
    }
    Ok(PyComposite { inner: c, cs: cs.clone() })
}

#[pymodule]
pub fn graphpcg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConstraintSet>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyComposite>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(random_search, m)?)?;
    m.add_function(wrap_pyfunction!(ea_generate, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    Ok(())
}
