use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use reactodiff::deterministic::{mild_solve, ForcingPath, Problem, SolveMode, Trajectory};
use reactodiff::discretization::{Field, SpatialGrid};
use reactodiff::harness::{self, ExperimentConfig, ExperimentKind, InitialConfig, ReportBundle};
use reactodiff::report::Cell;
use reactodiff::stochastic::{chs_sweep, chs_time_grid, SpdeSolver};
use reactodiff::yosida::{eval_reaction, resolvent_J, yosida_F};

fn err(e: reactodiff::Error) -> PyErr {
    match e {
        reactodiff::Error::ConfigInvalid { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn field(grid: &Arc<SpatialGrid>, values: Vec<f64>) -> PyResult<Field> {
    Field::from_values(grid, values).map_err(err)
}

fn values(f: &Field) -> Vec<f64> {
    f.values().as_slice().to_vec()
}

fn trajectory_dict<'py>(py: Python<'py>, tr: &Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", tr.time_grid.nodes().to_vec())?;
    d.set_item("states", tr.states.iter().map(values).collect::<Vec<_>>())?;
    d.set_item("norm_h", tr.states.iter().map(|s| s.norm_h()).collect::<Vec<_>>())?;
    d.set_item("norm_sup", tr.states.iter().map(|s| s.norm_sup()).collect::<Vec<_>>())?;
    Ok(d)
}

/// A validated experiment config.
#[pyclass(name = "Config", module = "reactodiff_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::from_json(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::load(&path).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.run.master_seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.run.master_seed = seed;
    }

    #[getter]
    fn kind(&self) -> String {
        serde_json::to_value(&self.inner.run.experiment)
            .ok()
            .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_owned))
            .unwrap_or_default()
    }

    /// Runs the experiment on `threads` workers; the GIL is released meanwhile.
    #[pyo3(signature = (threads = 1))]
    fn run(&self, py: Python<'_>, threads: usize) -> PyResult<PyReport> {
        let cfg = self.inner.clone();
        let bundle = py
            .detach(move || {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build();
                match pool {
                    Ok(pool) => pool.install(|| harness::run_experiment(&cfg)).map_err(err),
                    Err(e) => Err(PyRuntimeError::new_err(e.to_string())),
                }
            })?;
        Ok(PyReport { inner: bundle })
    }

    fn problem(&self) -> PyResult<PyProblem> {
        let problem = self.inner.build_problem().map_err(err)?;
        Ok(PyProblem { cfg: self.inner.clone(), problem })
    }

    /// Nodal values of the experiment's initial datum (`which` is "x" or "z").
    #[pyo3(signature = (which = "x"))]
    fn initial(&self, which: &str) -> PyResult<Vec<f64>> {
        let grid = self.inner.grid().map_err(err)?;
        let spec = initial_spec(&self.inner.run.experiment, which)
            .ok_or_else(|| PyValueError::new_err(format!("experiment has no initial datum {which:?}")))?;
        Ok(values(&spec.build(&grid).map_err(err)?))
    }

    /// Space-time regularity sums of the configured noise at each alpha.
    fn chs(&self, py: Python<'_>, alphas: Vec<f64>) -> PyResult<Py<PyList>> {
        let problem = self.inner.build_problem().map_err(err)?;
        let model = self.inner.build_noise(problem.grid()).map_err(err)?;
        let (s, t) = (self.inner.run.s, self.inner.run.t_end);
        let tg = chs_time_grid(s, t).map_err(err)?;
        let rows = py.detach(|| chs_sweep(problem.family(), &model, s, t, &alphas, &tg)).map_err(err)?;
        let out = PyList::empty(py);
        for r in rows {
            out.append(json_to_py(py, &serde_json::to_value(r).unwrap())?)?;
        }
        Ok(out.unbind())
    }

    /// One pathwise SPDE solve `X = Y + Z` driven by the Wiener path of `seed`.
    #[pyo3(signature = (seed, x = None))]
    fn spde_path<'py>(&self, py: Python<'py>, seed: u64, x: Option<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
        let problem = self.inner.build_problem().map_err(err)?;
        let model = self.inner.build_noise(problem.grid()).map_err(err)?;
        let tg = self.inner.time_grid().map_err(err)?;
        let scheme = self.inner.scheme(&tg);
        let x = match x {
            Some(v) => field(problem.grid(), v)?,
            None => field(problem.grid(), self.initial("x")?)?,
        };
        let solver = SpdeSolver::new(problem, model, tg, scheme, self.inner.mild_options()).map_err(err)?;
        let sample = py
            .detach(|| {
                let path = solver.sample_path(seed);
                solver.solve(&x, &path)
            })
            .map_err(err)?;
        let d = trajectory_dict(py, &sample.x)?;
        d.set_item("seed", sample.seed)?;
        d.set_item("convolution", sample.z.states.iter().map(values).collect::<Vec<_>>())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Config(kind={:?}, seed={})", self.kind(), self.seed())
    }
}

fn initial_spec<'a>(kind: &'a ExperimentKind, which: &str) -> Option<&'a InitialConfig> {
    use ExperimentKind::*;
    match (kind, which) {
        (DeterministicSolve { x }, "x")
        | (EstimateAudit { x, .. }, "x")
        | (KConvergence { x, .. }, "x")
        | (NConvergence { x, .. }, "x")
        | (SpdeEnsemble { x, .. }, "x")
        | (TransitionTable { x, .. }, "x") => Some(x),
        (EstimateAudit { z, .. }, "z") => Some(z),
        (SpdeEnsemble { z, .. }, "z") | (TransitionTable { z, .. }, "z") => z.as_ref(),
        _ => None,
    }
}

/// Report of one run: audits, summary and CSV tables.
#[pyclass(name = "Report", module = "reactodiff_py")]
struct PyReport {
    inner: ReportBundle,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn passed(&self) -> bool {
        self.inner.passed()
    }

    #[getter]
    fn audits(&self) -> Vec<(String, bool, String)> {
        self.inner.audits.iter().map(|a| (a.name.clone(), a.passed, a.detail.clone())).collect()
    }

    #[getter]
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.summary)
    }

    #[getter]
    fn table_names(&self) -> Vec<String> {
        self.inner.tables.iter().map(|t| t.name.clone()).collect()
    }

    /// Columns of a table as lists keyed by header.
    fn table<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyDict>> {
        let t = self
            .inner
            .table(name)
            .ok_or_else(|| PyValueError::new_err(format!("no table named {name:?}")))?;
        let d = PyDict::new(py);
        for (j, h) in t.header.iter().enumerate() {
            let col = PyList::empty(py);
            for row in &t.rows {
                match &row[j] {
                    Cell::Num(v) => col.append(*v)?,
                    Cell::Int(v) => col.append(*v)?,
                    Cell::Bool(v) => col.append(*v)?,
                    Cell::Text(v) => col.append(v)?,
                }
            }
            d.set_item(h, col)?;
        }
        Ok(d)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner.to_json()).unwrap()
    }

    /// Writes report.json and the CSV tables into `out_dir`.
    fn write(&self, out_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        harness::emit_report(&self.inner, &out_dir).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(kind={:?}, passed={}, audits={})",
            self.inner.kind.as_deref().unwrap_or(""),
            self.inner.passed(),
            self.inner.audits.len()
        )
    }
}

/// Assembled problem of a config: grid, reaction and propagator.
#[pyclass(name = "Problem", module = "reactodiff_py")]
struct PyProblem {
    cfg: ExperimentConfig,
    problem: Problem,
}

#[pymethods]
impl PyProblem {
    #[getter]
    fn dimension(&self) -> usize {
        self.problem.grid().dimension()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.problem.grid().len()
    }

    /// Working dissipativity shift of the reaction.
    #[getter]
    fn zeta(&self) -> f64 {
        self.problem.zeta_working()
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        let d = self.dimension();
        self.problem.grid().nodes().map(|p| p[..d].to_vec()).collect()
    }

    fn reaction(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = field(self.problem.grid(), x)?;
        Ok(values(&eval_reaction(self.problem.reaction(), t, &x)))
    }

    /// Resolvent `J_k(t, x)`; needs `k` above the dissipativity shift.
    fn resolvent(&self, k: f64, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = field(self.problem.grid(), x)?;
        Ok(values(&resolvent_J(self.problem.reaction(), k, t, &x).map_err(err)?.value))
    }

    fn yosida(&self, k: f64, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = field(self.problem.grid(), x)?;
        Ok(values(&yosida_F(self.problem.reaction(), k, t, &x).map_err(err)?))
    }

    /// Deterministic mild solution on the config's time grid.
    #[pyo3(signature = (x, mode = None))]
    fn solve<'py>(&self, py: Python<'py>, x: Vec<f64>, mode: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let x = field(self.problem.grid(), x)?;
        let tg = self.cfg.time_grid().map_err(err)?;
        let scheme = self.cfg.scheme(&tg);
        let mut opts = self.cfg.mild_options();
        opts.mode = match mode {
            None => opts.mode,
            Some("yosida_cascade") => SolveMode::YosidaCascade,
            Some("semi_implicit") => SolveMode::SemiImplicit,
            Some(m) => return Err(PyValueError::new_err(format!("unknown mode {m:?}"))),
        };
        let forcing = ForcingPath::zero(&tg, self.problem.grid());
        let tr = py
            .detach(|| mild_solve(&self.problem, &x, &forcing, &tg, &scheme, &opts))
            .map_err(err)?;
        trajectory_dict(py, &tr)
    }
}

#[pyfunction]
fn schema() -> &'static str {
    harness::CONFIG_SCHEMA
}

#[pymodule]
fn reactodiff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", harness::ARTIFACT_VERSION)?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(schema, m)?)?;
    Ok(())
}
