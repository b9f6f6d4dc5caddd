//! Python bindings: schedules, masks, the model engine, aggregation, the experiment runner and
//! the sparse model file format.

use std::path::PathBuf;

use fedsparsify::experiment::{self, ExperimentConfig, Mode, Overrides};
use fedsparsify::federation::{self, CommLedger};
use fedsparsify::model_file::SparseModelFile;
use fedsparsify::sparsify::{self, layerwise_magnitude_mask, magnitude_mask_with};
use fedsparsify::{Error, FlatParams, ModelSpec, Network, PruneMask, SparsitySchedule};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidConfig(_)
        | Error::InvalidSpec(_)
        | Error::InvalidSchedule(_)
        | Error::InvalidSparsity(_)
        | Error::DimensionMismatch { .. }
        | Error::RoundOutOfRange { .. }
        | Error::Resurrection { .. }
        | Error::Json(_)
        | Error::Format(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_spec(spec_json: &str) -> PyResult<ModelSpec> {
    serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(format!("model spec: {e}")))
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "SparsitySchedule", module = "pyfedsparsify", from_py_object)]
#[derive(Clone)]
struct PySchedule {
    inner: SparsitySchedule,
}

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (final_sparsity, total_rounds, initial_sparsity=0.0, start_round=1, frequency=1, exponent=3.0))]
    fn new(
        final_sparsity: f64,
        total_rounds: u32,
        initial_sparsity: f64,
        start_round: u32,
        frequency: u32,
        exponent: f64,
    ) -> PyResult<Self> {
        let inner = SparsitySchedule {
            initial_sparsity,
            final_sparsity,
            total_rounds,
            start_round,
            frequency,
            exponent,
        };
        inner.validate().map_err(to_py)?;
        Ok(PySchedule { inner })
    }

    /// Target sparsity after round `t` (1-based).
    fn at(&self, t: u32) -> PyResult<f64> {
        self.inner.sparsity_at_round(t).map_err(to_py)
    }

    fn targets(&self) -> PyResult<Vec<f64>> {
        self.inner.targets().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "SparsitySchedule(final_sparsity={}, total_rounds={})",
            self.inner.final_sparsity, self.inner.total_rounds
        )
    }
}

#[pyclass(name = "PruneMask", module = "pyfedsparsify", from_py_object)]
#[derive(Clone)]
struct PyMask {
    inner: PruneMask,
}

#[pymethods]
impl PyMask {
    #[new]
    fn new(kept: Vec<bool>) -> Self {
        PyMask {
            inner: PruneMask::from_bools(&kept),
        }
    }

    #[staticmethod]
    fn ones(len: usize) -> Self {
        PyMask {
            inner: PruneMask::ones(len),
        }
    }

    #[staticmethod]
    fn from_bytes(len: usize, data: &[u8]) -> PyResult<Self> {
        Ok(PyMask {
            inner: PruneMask::from_packed_bytes(len, data).map_err(to_py)?,
        })
    }

    fn to_list(&self) -> Vec<bool> {
        self.inner.to_bools()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_packed_bytes())
    }

    fn count_ones(&self) -> usize {
        self.inner.count_ones()
    }

    #[getter]
    fn sparsity(&self) -> f64 {
        self.inner.sparsity()
    }

    fn is_subset_of(&self, other: &PyMask) -> bool {
        self.inner.is_subset_of(&other.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Keeps the largest-magnitude entries so that `sparsity` of the vector is pruned. With
/// `layers` (a list of `(start, end)` ranges) each range is ranked and pruned on its own.
#[pyfunction]
#[pyo3(signature = (params, sparsity, previous=None, protected=None, layers=None))]
fn magnitude_mask(
    params: Vec<f32>,
    sparsity: f64,
    previous: Option<PyMask>,
    protected: Option<PyMask>,
    layers: Option<Vec<(usize, usize)>>,
) -> PyResult<PyMask> {
    let prev = previous.map_or_else(|| PruneMask::ones(params.len()), |m| m.inner);
    let protected = protected.as_ref().map(|m| &m.inner);
    let inner = match layers {
        Some(l) => {
            let ranges: Vec<_> = l.into_iter().map(|(a, b)| a..b).collect();
            layerwise_magnitude_mask(&params, sparsity, &prev, &ranges, protected)
        }
        None => magnitude_mask_with(&params, sparsity, &prev, protected),
    }
    .map_err(to_py)?;
    Ok(PyMask { inner })
}

#[pyfunction]
fn apply_mask(params: Vec<f32>, mask: PyMask) -> PyResult<Vec<f32>> {
    Ok(sparsify::apply_mask(&params, &mask.inner).map_err(to_py)?.0)
}

#[pyfunction]
fn prune_count(param_count: usize, sparsity: f64) -> usize {
    sparsify::prune_count(param_count, sparsity)
}

/// Cumulative parameters exchanged, plus the per-round amounts.
#[pyfunction]
#[pyo3(signature = (param_count, learners, rounds, schedule=None))]
fn simulate_comm(
    param_count: usize,
    learners: usize,
    rounds: u32,
    schedule: Option<PySchedule>,
) -> PyResult<(u64, Vec<u64>)> {
    let ledger = CommLedger::simulate(
        param_count,
        learners,
        rounds,
        schedule.as_ref().map(|s| &s.inner),
    )
    .map_err(to_py)?;
    Ok((
        ledger.cumulative,
        ledger.per_round.iter().map(|(_, c)| *c).collect(),
    ))
}

#[pyclass(name = "Model", module = "pyfedsparsify")]
struct PyModel {
    net: Network,
}

#[pymethods]
impl PyModel {
    /// `spec_json` uses the same layout as the `model` section of an experiment config.
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        Ok(PyModel {
            net: Network::new(parse_spec(spec_json)?).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (inputs, hidden))]
    fn mlp(inputs: usize, hidden: Vec<usize>) -> PyResult<Self> {
        Ok(PyModel {
            net: Network::new(ModelSpec::mlp(inputs, &hidden)).map_err(to_py)?,
        })
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.net.num_params()
    }

    #[getter]
    fn input_len(&self) -> usize {
        self.net.input_len()
    }

    fn spec_json(&self) -> PyResult<String> {
        serde_json::to_string(self.net.spec()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn init(&self, seed: u64) -> Vec<f32> {
        self.net.init(seed).0
    }

    /// One prediction per sample; `inputs` is the flattened batch.
    fn forward(&self, params: Vec<f32>, inputs: Vec<f32>) -> PyResult<Vec<f32>> {
        self.net.forward(&params, &inputs).map_err(to_py)
    }

    fn loss_and_grad(
        &self,
        params: Vec<f32>,
        inputs: Vec<f32>,
        targets: Vec<f32>,
    ) -> PyResult<(f32, Vec<f32>)> {
        self.net
            .loss_and_grad(&params, &inputs, &targets)
            .map_err(to_py)
    }

    /// `(start, end)` parameter range of every layer that has parameters.
    fn layer_ranges(&self) -> Vec<(usize, usize)> {
        self.net
            .layer_param_ranges()
            .into_iter()
            .map(|r| (r.start, r.end))
            .collect()
    }

    fn secondary_params(&self) -> PyMask {
        PyMask {
            inner: self.net.secondary_params(),
        }
    }
}

/// Sample-count-weighted average of `(params, n)` pairs.
#[pyfunction]
fn aggregate(locals: Vec<(Vec<f32>, usize)>) -> PyResult<Vec<f32>> {
    let locals: Vec<(FlatParams, usize)> = locals
        .into_iter()
        .map(|(p, n)| (FlatParams(p), n))
        .collect();
    Ok(federation::aggregate(&locals).map_err(to_py)?.0)
}

/// Runs an experiment from a JSON config and returns its summary as a dict.
#[pyfunction]
#[pyo3(signature = (config_json, mode, seed=None, out_dir=None, sparsity=None, env=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config_json: &str,
    mode: &str,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    sparsity: Option<f64>,
    env: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: Mode = serde_json::from_value(serde_json::Value::String(mode.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown mode {mode:?}")))?;
    let mut config = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    config.apply(&Overrides {
        seed,
        output_dir: out_dir,
        sparsity,
        environment: env.map(str::parse).transpose().map_err(to_py)?,
    });
    let outcome = py
        .detach(|| experiment::run(&config, mode))
        .map_err(to_py)?;
    let text = serde_json::to_string(&outcome.summary)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

#[pyfunction]
fn save_model(path: PathBuf, spec_json: &str, params: Vec<f32>, mask: PyMask) -> PyResult<usize> {
    let spec = parse_spec(spec_json)?;
    let file = SparseModelFile::from_model(&spec, &params, &mask.inner).map_err(to_py)?;
    file.save(&path).map_err(to_py)?;
    Ok(file.encoded_len())
}

/// Returns `(params, mask, sparsity)` with pruned entries zeroed.
#[pyfunction]
fn load_model(path: PathBuf) -> PyResult<(Vec<f32>, PyMask, f64)> {
    let file = SparseModelFile::load(&path).map_err(to_py)?;
    Ok((
        file.to_params().0,
        PyMask {
            inner: file.mask.clone(),
        },
        file.sparsity,
    ))
}

#[pymodule]
fn pyfedsparsify(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchedule>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(magnitude_mask, m)?)?;
    m.add_function(wrap_pyfunction!(apply_mask, m)?)?;
    m.add_function(wrap_pyfunction!(prune_count, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_comm, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(save_model, m)?)?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    Ok(())
}
