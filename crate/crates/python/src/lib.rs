//! Python bindings: environment, opponent zoo, classifier, oracle and the
//! experiment runner.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use probe_core::classifier::{dataset_generate, read_dataset, write_dataset, Trajectory, TrajectoryClassifier};
use probe_core::grid_env::{resolve_moves as core_resolve, Action, GridMap, Pos};
use probe_core::nn::{Adam, AdamConfig, Checkpoint};
use probe_core::opponent_zoo::{OpponentClass, OpponentPolicy};
use probe_core::orchestrator::{
    bayes_oracle_posterior, evaluate, parse_metrics_csv, run_experiment, BayesOracle, ExperimentConfig, LabelPassThrough,
    LoadedRun, MapSpec, TrajectoryPredictor,
};
use probe_core::rollout::{episode_rng, rollout_episode, EnvSpec, UniformPolicy};
use probe_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::Format { .. } | Error::Unsupported(_) | Error::Dimension(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn class_from(id: usize) -> PyResult<OpponentClass> {
    OpponentClass::from_id(id).ok_or_else(|| PyValueError::new_err(format!("class id {id} out of range 0..9")))
}

fn classes_from(ids: Option<Vec<usize>>) -> PyResult<Vec<OpponentClass>> {
    match ids {
        Some(ids) => ids.into_iter().map(class_from).collect(),
        None => Ok(OpponentClass::ALL.to_vec()),
    }
}

fn action_from(i: usize) -> PyResult<Action> {
    Action::from_index(i).ok_or_else(|| PyValueError::new_err(format!("action {i} out of range 0..4")))
}

fn map_from(rows: Option<Vec<String>>) -> PyResult<GridMap> {
    match rows {
        Some(rows) => GridMap::parse(&rows.join("\n")).map_err(to_py),
        None => Ok(GridMap::default_map()),
    }
}

/// Gridworld settings: map, episode length and opponent primary weight.
#[pyclass(name = "Env", module = "probe_arena", frozen)]
struct PyEnv {
    inner: EnvSpec,
}

#[pymethods]
impl PyEnv {
    /// `rows` uses '.' for free cells and '#' for obstacles; defaults to the
    /// built-in 4x4 map.
    #[new]
    #[pyo3(signature = (rows=None, episode_length=128, primary_weight=0.7))]
    fn new(rows: Option<Vec<String>>, episode_length: usize, primary_weight: f64) -> PyResult<Self> {
        let inner = EnvSpec::new(map_from(rows)?, episode_length, primary_weight).map_err(to_py)?;
        Ok(PyEnv { inner })
    }

    #[getter]
    fn rows(&self) -> Vec<String> {
        self.inner.map.to_text().lines().map(str::to_owned).collect()
    }

    #[getter]
    fn episode_length(&self) -> usize {
        self.inner.episode_length
    }

    /// One episode against `class_id` with a uniform-random probe.
    #[pyo3(signature = (class_id, seed, stream=0))]
    fn rollout(&self, class_id: usize, seed: u64, stream: u64) -> PyResult<PyTrajectory> {
        let mut rng = episode_rng(seed, stream);
        let rec = rollout_episode(&self.inner, &UniformPolicy, class_from(class_id)?, &mut rng).map_err(to_py)?;
        Ok(PyTrajectory { inner: rec.trajectory })
    }

    /// `episodes` uniform-probe trajectories with classes drawn from `class_ids`.
    #[pyo3(signature = (episodes, seed, class_ids=None))]
    fn dataset(&self, episodes: usize, seed: u64, class_ids: Option<Vec<usize>>) -> PyResult<Vec<PyTrajectory>> {
        let set = classes_from(class_ids)?;
        let data = dataset_generate(&self.inner, &UniformPolicy, &set, episodes, seed).map_err(to_py)?;
        Ok(data.into_iter().map(|inner| PyTrajectory { inner }).collect())
    }
}

#[pyclass(name = "Trajectory", module = "probe_arena", frozen, from_py_object)]
#[derive(Clone)]
struct PyTrajectory {
    inner: Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn label(&self) -> usize {
        self.inner.label.id()
    }

    #[getter]
    fn actions(&self) -> Vec<usize> {
        self.inner.actions.iter().map(|a| a.index()).collect()
    }

    /// Cell codes per state (0 free, 1 obstacle, 2 agent, 3 opponent), row-major.
    #[getter]
    fn states(&self) -> Vec<Vec<u8>> {
        self.inner.states.iter().map(|s| s.cells().to_vec()).collect()
    }

    /// `(agent, opponent)` positions as `(row, col)` for every state.
    fn positions(&self) -> Vec<((usize, usize), (usize, usize))> {
        self.inner
            .states
            .iter()
            .map(|s| {
                let (a, o) = (s.agent(), s.opponent());
                ((a.row, a.col), (o.row, o.col))
            })
            .collect()
    }

    fn render(&self, t: usize) -> PyResult<String> {
        self.inner
            .states
            .get(t)
            .map(|s| s.render())
            .ok_or_else(|| PyValueError::new_err(format!("state {t} out of range")))
    }

    fn __len__(&self) -> usize {
        self.inner.steps()
    }
}

#[pyclass(name = "Classifier", module = "probe_arena")]
struct PyClassifier {
    inner: TrajectoryClassifier,
    adam: Option<Adam>,
}

#[pymethods]
impl PyClassifier {
    #[new]
    #[pyo3(signature = (width=4, height=4, hidden_size=64, seed=0))]
    fn new(width: usize, height: usize, hidden_size: usize, seed: u64) -> Self {
        let inner = TrajectoryClassifier::new(width, height, hidden_size, &mut ChaCha8Rng::seed_from_u64(seed));
        PyClassifier { inner, adam: None }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::read(&path).map_err(to_py)?;
        let inner = TrajectoryClassifier::from_checkpoint(&ck).map_err(to_py)?;
        Ok(PyClassifier { inner, adam: None })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_checkpoint().write(&path).map_err(to_py)
    }

    /// Posterior rows, one per prefix of the trajectory.
    fn classify(&self, trajectory: &PyTrajectory) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.classify(&trajectory.inner).map_err(to_py)?.rows)
    }

    /// Mini-batch Adam training; optimizer state persists across calls.
    #[pyo3(signature = (data, epochs=20, batch_size=32, lr=0.001, seed=0))]
    fn fit(&mut self, data: Vec<PyTrajectory>, epochs: usize, batch_size: usize, lr: f64, seed: u64) -> PyResult<f64> {
        let data: Vec<Trajectory> = data.into_iter().map(|t| t.inner).collect();
        let inner = &self.inner;
        let adam = self.adam.get_or_insert_with(|| Adam::new(AdamConfig::with_lr(lr), inner));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.inner.fit(&data, adam, epochs, batch_size, &mut rng).map_err(to_py)
    }

    /// Fraction of trajectories whose final-row argmax is the label.
    fn accuracy(&self, data: Vec<PyTrajectory>) -> PyResult<f64> {
        let mut hits = 0usize;
        for t in &data {
            if self.inner.classify(&t.inner).map_err(to_py)?.final_prediction() == t.inner.label.id() {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len().max(1) as f64)
    }
}

/// Response distribution over the four actions for `class_id` given the agent's action.
#[pyfunction]
#[pyo3(signature = (class_id, agent_action, primary_weight=0.7))]
fn opponent_distribution(class_id: usize, agent_action: usize, primary_weight: f64) -> PyResult<Vec<f64>> {
    let policy = OpponentPolicy::new(class_from(class_id)?, primary_weight).map_err(to_py)?;
    Ok(policy.action_distribution(action_from(agent_action)?).to_vec())
}

#[pyfunction]
fn class_name(class_id: usize) -> PyResult<String> {
    Ok(class_from(class_id)?.name())
}

/// Resolves one simultaneous move; returns the new `(agent, opponent)` positions.
#[pyfunction]
#[pyo3(signature = (agent, agent_action, opponent, opponent_action, rows=None))]
fn resolve_moves(
    agent: (usize, usize),
    agent_action: usize,
    opponent: (usize, usize),
    opponent_action: usize,
    rows: Option<Vec<String>>,
) -> PyResult<((usize, usize), (usize, usize))> {
    let map = map_from(rows)?;
    let (a, o) = core_resolve(
        &map,
        Pos::new(agent.0, agent.1),
        action_from(agent_action)?,
        Pos::new(opponent.0, opponent.1),
        action_from(opponent_action)?,
    );
    Ok(((a.row, a.col), (o.row, o.col)))
}

/// Exact Bayes posterior rows over the 9 classes (zero outside `class_ids`).
#[pyfunction]
#[pyo3(signature = (trajectory, class_ids=None, primary_weight=0.7))]
fn oracle_posterior(trajectory: &PyTrajectory, class_ids: Option<Vec<usize>>, primary_weight: f64) -> PyResult<Vec<Vec<f64>>> {
    let set = classes_from(class_ids)?;
    Ok(bayes_oracle_posterior(&trajectory.inner, &set, primary_weight).map_err(to_py)?.rows)
}

#[pyfunction]
fn save_dataset(path: PathBuf, data: Vec<PyTrajectory>) -> PyResult<()> {
    let data: Vec<Trajectory> = data.into_iter().map(|t| t.inner).collect();
    write_dataset(&path, &data).map_err(to_py)
}

#[pyfunction]
fn load_dataset(path: PathBuf) -> PyResult<Vec<PyTrajectory>> {
    Ok(read_dataset(&path).map_err(to_py)?.into_iter().map(|inner| PyTrajectory { inner }).collect())
}

/// Runs an experiment from a JSON config string. With `out_dir`, writes the
/// usual run directory. Returns one dict per round.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir=None))]
fn run(py: Python<'_>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<Vec<Py<pyo3::types::PyDict>>> {
    use pyo3::types::PyDict;
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    if let MapSpec::File { file } = &cfg.map {
        if file.is_relative() && out_dir.is_none() {
            return Err(PyValueError::new_err("relative map file needs an absolute path here"));
        }
    }
    let outcome = py
        .detach(|| run_experiment(cfg, out_dir.as_deref()))
        .map_err(to_py)?;
    outcome
        .history
        .iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("round", m.round)?;
            d.set_item("phase", m.phase.name())?;
            d.set_item("classifier_loss", m.classifier_loss)?;
            d.set_item("classifier_acc", m.classifier_acc)?;
            d.set_item("mean_reward", m.mean_reward)?;
            d.set_item("clip_fraction", m.clip_fraction)?;
            d.set_item("wall_ms", m.wall_ms)?;
            Ok(d.unbind())
        })
        .collect()
}

/// Held-out evaluation of a checkpoint directory. Returns
/// `(overall_accuracy, confusion rows)`.
#[pyfunction]
#[pyo3(signature = (ckpt_dir, episodes, seed=0, predictor="classifier"))]
fn evaluate_checkpoint(ckpt_dir: PathBuf, episodes: usize, seed: u64, predictor: &str) -> PyResult<(f64, Vec<Vec<usize>>)> {
    let run = LoadedRun::load(Path::new(&ckpt_dir)).map_err(to_py)?;
    let oracle = BayesOracle {
        primary_weight: run.env.primary_weight,
    };
    let p: &dyn TrajectoryPredictor = match predictor {
        "classifier" => &run.classifier,
        "bayes" => &oracle,
        "label" => &LabelPassThrough,
        other => return Err(PyValueError::new_err(format!("unknown predictor {other:?}"))),
    };
    let report = evaluate(p, run.behavior_policy(), &run.env, &run.classes, episodes, seed).map_err(to_py)?;
    Ok((report.overall_accuracy(), report.confusion.iter().map(|r| r.to_vec()).collect()))
}

type MetricsRow = (usize, String, f64, f64, f64);

/// Reads a metrics.csv into a list of `(round, phase, loss, acc, reward)` tuples.
#[pyfunction]
fn read_metrics(path: PathBuf) -> PyResult<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
    Ok(parse_metrics_csv(&text)
        .map_err(to_py)?
        .into_iter()
        .map(|m| (m.round, m.phase.name().to_string(), m.classifier_loss, m.classifier_acc, m.mean_reward))
        .collect())
}

#[pymodule]
fn probe_arena(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NUM_CLASSES", probe_core::opponent_zoo::NUM_CLASSES)?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(opponent_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(class_name, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_moves, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(save_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(read_metrics, m)?)?;
    Ok(())
}
