//! Python bindings for the vidchain toolkit.
//!
//! Configuration values cross the boundary as plain dicts and reports come
//! back as dicts, so the Python side sees the same JSON shapes the CLI writes.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

use vidchain_core::backbone::{AdapterParams, Backbone as CoreBackbone, BackboneConfig, Role};
use vidchain_core::chain::{self, Checkpoint as CoreCheckpoint, TrainRunConfig};
use vidchain_core::datamodel::{self, Corpus as CoreCorpus, MomentAnnotation, SyntheticConfig};
use vidchain_core::harness::{self, MomentEvalOptions, Strategy};
use vidchain_core::{localizer, moment, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Unsupported(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn from_dict<T: DeserializeOwned + Default>(py: Python<'_>, value: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let Some(dict) = value else {
        return Ok(T::default());
    };
    let text: String = py.import("json")?.call_method1("dumps", (dict,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_dict<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_name<T: DeserializeOwned>(name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown value {name:?}")))
}

/// A data directory's QA samples, moment samples, and synthetic truth.
#[pyclass(module = "vidchain")]
struct Corpus {
    inner: CoreCorpus,
}

#[pymethods]
impl Corpus {
    /// Generate a synthetic corpus. `config` takes the keys of the
    /// `synthetic` section of a pipeline config.
    #[staticmethod]
    #[pyo3(signature = (seed, config=None))]
    fn synthetic(py: Python<'_>, seed: u64, config: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg: SyntheticConfig = from_dict(py, config)?;
        let inner = datamodel::generate_synthetic_corpus(&cfg, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: datamodel::load_corpus(&dir).map_err(to_py)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        datamodel::save_corpus(&dir, &self.inner).map_err(to_py)
    }

    #[getter]
    fn n_qa(&self) -> usize {
        self.inner.qa.len()
    }

    #[getter]
    fn n_moment(&self) -> usize {
        self.inner.moment.len()
    }

    fn video_ids(&self) -> Vec<String> {
        self.inner.videos().keys().map(|k| k.to_string()).collect()
    }

    fn qa_examples<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rows: Vec<_> = self.inner.qa.iter().map(|s| &s.example).collect();
        to_dict(py, &rows)
    }

    fn __repr__(&self) -> String {
        format!("Corpus(qa={}, moment={})", self.inner.qa.len(), self.inner.moment.len())
    }
}

/// Frozen scoring heads plus the adapter shapes they expect.
#[pyclass(module = "vidchain")]
struct Backbone {
    inner: CoreBackbone,
}

#[pymethods]
impl Backbone {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(py: Python<'_>, config: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg: BackboneConfig = from_dict(py, config)?;
        Ok(Self {
            inner: CoreBackbone::new(cfg).map_err(to_py)?,
        })
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, self.inner.config())
    }

    fn init_params(&self, role: &str, seed: u64) -> PyResult<Checkpoint> {
        let role: Role = parse_name(role)?;
        Ok(Checkpoint {
            inner: CoreCheckpoint {
                params: AdapterParams::init(self.inner.config(), role, seed),
                backbone: self.inner.config().clone(),
                config: TrainRunConfig::default(),
                epoch: 0,
                train_loss_history: Vec::new(),
                degenerate_label_fraction: None,
            },
        })
    }
}

/// Adapter parameters with their training metadata.
#[pyclass(module = "vidchain")]
struct Checkpoint {
    inner: CoreCheckpoint,
}

#[pymethods]
impl Checkpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreCheckpoint::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn role(&self) -> String {
        match self.inner.params.role {
            Role::Localizer => "localizer",
            Role::Answerer => "answerer",
        }
        .to_string()
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.inner.epoch
    }

    #[getter]
    fn loss_history(&self) -> Vec<f64> {
        self.inner.train_loss_history.clone()
    }

    #[getter]
    fn degenerate_label_fraction(&self) -> Option<f64> {
        self.inner.degenerate_label_fraction
    }

    fn digest(&self) -> String {
        harness::params_digest(&self.inner.params)
    }

    fn __repr__(&self) -> String {
        format!("Checkpoint(role={}, epoch={})", self.role(), self.inner.epoch)
    }
}

#[pyfunction]
#[pyo3(signature = (backbone, corpus, config=None, init=None))]
fn pretrain_localizer(
    py: Python<'_>,
    backbone: &Backbone,
    corpus: &Corpus,
    config: Option<&Bound<'_, PyDict>>,
    init: Option<&Checkpoint>,
) -> PyResult<Checkpoint> {
    let cfg: TrainRunConfig = from_dict(py, config)?;
    let init = init.map(|c| &c.inner.params);
    let inner = chain::pretrain_localizer(&backbone.inner, &corpus.inner.moment, &cfg, init).map_err(to_py)?;
    Ok(Checkpoint { inner })
}

#[pyfunction]
#[pyo3(signature = (backbone, corpus, answerer, config=None, init=None))]
fn refine_localizer(
    py: Python<'_>,
    backbone: &Backbone,
    corpus: &Corpus,
    answerer: &Checkpoint,
    config: Option<&Bound<'_, PyDict>>,
    init: Option<&Checkpoint>,
) -> PyResult<Checkpoint> {
    let cfg: TrainRunConfig = from_dict(py, config)?;
    let inner = chain::refine_localizer(
        &backbone.inner,
        &corpus.inner.qa,
        &answerer.inner.params,
        &cfg,
        init.map(|c| &c.inner.params),
    )
    .map_err(to_py)?;
    Ok(Checkpoint { inner })
}

#[pyfunction]
#[pyo3(signature = (backbone, corpus, localizer=None, config=None, init=None))]
fn finetune_answerer(
    py: Python<'_>,
    backbone: &Backbone,
    corpus: &Corpus,
    localizer: Option<&Checkpoint>,
    config: Option<&Bound<'_, PyDict>>,
    init: Option<&Checkpoint>,
) -> PyResult<Checkpoint> {
    let cfg: TrainRunConfig = from_dict(py, config)?;
    let inner = chain::finetune_answerer(
        &backbone.inner,
        &corpus.inner.qa,
        localizer.map(|c| &c.inner.params),
        &cfg,
        init.map(|c| &c.inner.params),
    )
    .map_err(to_py)?;
    Ok(Checkpoint { inner })
}

/// Returns `(report, predictions)` as plain Python objects.
#[pyfunction]
#[pyo3(signature = (backbone, corpus, strategy, answerer, localizer=None, n=32, k=4, seed=0))]
#[allow(clippy::too_many_arguments)]
fn eval_qa<'py>(
    py: Python<'py>,
    backbone: &Backbone,
    corpus: &Corpus,
    strategy: &str,
    answerer: &Checkpoint,
    localizer: Option<&Checkpoint>,
    n: usize,
    k: usize,
    seed: u64,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let strategy: Strategy = parse_name(strategy)?;
    let (report, preds) = harness::eval_qa(
        &backbone.inner,
        &corpus.inner.qa,
        strategy,
        localizer.map(|c| &c.inner.params),
        &answerer.inner.params,
        n,
        k,
        seed,
    )
    .map_err(to_py)?;
    let mut body = report.to_json();
    body["repro_hash"] = report.repro_hash().into();
    Ok((to_dict(py, &body)?, to_dict(py, &preds)?))
}

#[pyfunction]
#[pyo3(signature = (backbone, corpus, localizer, options=None))]
fn eval_moment<'py>(
    py: Python<'py>,
    backbone: &Backbone,
    corpus: &Corpus,
    localizer: &Checkpoint,
    options: Option<&Bound<'_, PyDict>>,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let options: MomentEvalOptions = from_dict(py, options)?;
    let (report, preds) = harness::eval_moment(
        &backbone.inner,
        &corpus.inner.moment,
        &localizer.inner.params,
        &options,
    )
    .map_err(to_py)?;
    let mut body = report.to_json();
    body["repro_hash"] = report.repro_hash().into();
    Ok((to_dict(py, &body)?, to_dict(py, &preds)?))
}

/// Frame-label precision, recall and F1 of a localizer against the
/// synthetic relevance windows of the QA videos.
#[pyfunction]
fn eval_frame_labels<'py>(
    py: Python<'py>,
    backbone: &Backbone,
    corpus: &Corpus,
    localizer: &Checkpoint,
) -> PyResult<Bound<'py, PyAny>> {
    let targets = harness::qa_frame_targets(&corpus.inner).map_err(to_py)?;
    let report = harness::eval_frame_labels(&backbone.inner, &targets, &localizer.inner.params).map_err(to_py)?;
    to_dict(py, &report.to_json())
}

#[pyfunction]
fn select_topk(scores: Vec<f64>, k: usize) -> PyResult<Vec<usize>> {
    Ok(localizer::select_topk(&scores, k).map_err(to_py)?.indices)
}

/// Merge binary frame labels into `(start_s, end_s, confidence)` spans.
#[pyfunction]
fn aggregate(bits: Vec<u8>, scores: Vec<f64>, fps: f64, span_threshold: usize) -> PyResult<Vec<(f64, f64, f64)>> {
    let spans = moment::aggregate(&bits, &scores, fps, span_threshold).map_err(to_py)?;
    Ok(spans.iter().map(|s| (s.start_s, s.end_s, s.confidence)).collect())
}

#[pyfunction]
fn iou(a: (f64, f64), b: (f64, f64)) -> PyResult<f64> {
    let a = MomentAnnotation::new(a.0, a.1).map_err(to_py)?;
    let b = MomentAnnotation::new(b.0, b.1).map_err(to_py)?;
    Ok(moment::iou(&a, &b))
}

#[pymodule]
fn vidchain(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Backbone>()?;
    m.add_class::<Checkpoint>()?;
    m.add_function(wrap_pyfunction!(pretrain_localizer, m)?)?;
    m.add_function(wrap_pyfunction!(refine_localizer, m)?)?;
    m.add_function(wrap_pyfunction!(finetune_answerer, m)?)?;
    m.add_function(wrap_pyfunction!(eval_qa, m)?)?;
    m.add_function(wrap_pyfunction!(eval_moment, m)?)?;
    m.add_function(wrap_pyfunction!(eval_frame_labels, m)?)?;
    m.add_function(wrap_pyfunction!(select_topk, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    Ok(())
}
