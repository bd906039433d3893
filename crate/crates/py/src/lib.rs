//! Python bindings. Structured results cross the boundary as plain dicts
//! and lists; failures raise `firecube.FirecubeError` with a `kind`
//! attribute naming the error class.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use firecube_core::climatology::{fit_climatology as core_fit, ClimatologyTable};
use firecube_core::dataset::{self, ExtractConfig, SampleMeta, ShardKind, Split};
use firecube_core::evaluate::ScoreSource;
use firecube_core::ingest::TARGET_VARIABLE;
use firecube_core::metrics::{self, DEFAULT_BINS};
use firecube_core::pipeline::PipelineConfig;
use firecube_core::render::{render_map as core_render_map, RenderSpec};
use firecube_core::synth::WorldConfig;

create_exception!(firecube, FirecubeError, PyException);

/// Raises `FirecubeError` carrying the core error's kind.
pub fn to_py_err(e: firecube_core::Error) -> PyErr {
    let kind = e.kind();
    let err = FirecubeError::new_err(e.to_string());
    Python::attach(|py| {
        let _ = err.value(py).setattr("kind", kind);
    });
    err
}

fn config_err(msg: impl std::fmt::Display) -> PyErr {
    to_py_err(firecube_core::Error::Config(msg.to_string()))
}

trait PyResultExt<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> PyResultExt<T> for firecube_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Converts a serializable value to Python objects via JSON.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(config_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Reads an optional dict of overrides into `T`, starting from its defaults.
fn from_py<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let Some(obj) = obj else { return Ok(T::default()) };
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(config_err)
}

fn parse_split(s: &str) -> PyResult<Split> {
    s.parse().py()
}

/// Global lat/lon grid.
#[pyclass(frozen, module = "firecube")]
pub struct GeoGrid(firecube_core::GeoGrid);

#[pymethods]
impl GeoGrid {
    #[new]
    fn new(resolution_deg: f64) -> PyResult<Self> {
        firecube_core::GeoGrid::global(resolution_deg).map(Self).py()
    }

    #[getter]
    fn resolution_deg(&self) -> f64 {
        self.0.resolution_deg
    }

    #[getter]
    fn n_lat(&self) -> usize {
        self.0.n_lat
    }

    #[getter]
    fn n_lon(&self) -> usize {
        self.0.n_lon
    }

    fn latlon_to_index(&self, lat: f64, lon: f64) -> PyResult<(usize, usize)> {
        self.0.latlon_to_index(lat, lon).py()
    }

    fn index_to_latlon(&self, row: usize, col: usize) -> (f64, f64) {
        self.0.index_to_latlon(row, col)
    }

    fn __repr__(&self) -> String {
        format!("GeoGrid({}°, {}x{})", self.0.resolution_deg, self.0.n_lat, self.0.n_lon)
    }
}

/// 8-day time axis.
#[pyclass(frozen, module = "firecube")]
pub struct TimeAxis(firecube_core::TimeAxis);

#[pymethods]
impl TimeAxis {
    #[new]
    fn new(start_year: i32, end_year: i32) -> PyResult<Self> {
        firecube_core::TimeAxis::new(start_year, end_year).map(Self).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Step containing an ISO date.
    fn date_to_step(&self, date: &str) -> PyResult<usize> {
        let d = date.parse().map_err(config_err)?;
        self.0.date_to_step(d).py()
    }

    /// `(start, end)` ISO dates of a step, both inclusive.
    fn period(&self, step: usize) -> PyResult<(String, String)> {
        let p = self.0.period(step).py()?;
        Ok((p.start.to_string(), p.end().to_string()))
    }

    fn year_of(&self, step: usize) -> PyResult<i32> {
        self.0.year_of(step).py()
    }

    fn period_of_year(&self, step: usize) -> PyResult<usize> {
        self.0.period_of_year(step).py()
    }
}

/// Read access to a cube store.
#[pyclass(module = "firecube")]
pub struct Cube(firecube_core::Cube);

#[pymethods]
impl Cube {
    #[staticmethod]
    fn open(path: PathBuf) -> PyResult<Self> {
        firecube_core::Cube::open(path).map(Self).py()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.0.manifest().variables.iter().map(|v| v.name.clone()).collect()
    }

    #[getter]
    fn grid(&self) -> GeoGrid {
        GeoGrid(*self.0.grid())
    }

    #[getter]
    fn axis(&self) -> TimeAxis {
        TimeAxis(self.0.axis().clone())
    }

    /// Row-major `n_lat * n_lon` field of `name` at `step`.
    fn read_field(&self, name: &str, step: usize) -> PyResult<Vec<f32>> {
        self.0.read_field(name, step).py()
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().py()
    }
}

fn meta_tuples(meta: &[SampleMeta]) -> Vec<(usize, usize, usize, usize)> {
    meta.iter().map(|m| (m.t_input, m.lead_steps, m.row0, m.col0)).collect()
}

fn meta_structs(meta: Vec<(usize, usize, usize, usize)>) -> Vec<SampleMeta> {
    meta.into_iter().map(|(t_input, lead_steps, row0, col0)| SampleMeta { t_input, lead_steps, row0, col0 }).collect()
}

/// One dataset shard: flat `inputs [N,C,P,P]`, `targets` and `valid` `[N,P,P]`.
#[pyclass(frozen, module = "firecube")]
pub struct SampleBatch(dataset::SampleBatch);

#[pymethods]
impl SampleBatch {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        dataset::SampleBatch::read(&path).map(Self).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.0.channels
    }

    #[getter]
    fn patch(&self) -> usize {
        self.0.patch
    }

    #[getter]
    fn inputs(&self) -> Vec<f32> {
        self.0.inputs.clone()
    }

    #[getter]
    fn targets(&self) -> Vec<u8> {
        self.0.targets.clone()
    }

    #[getter]
    fn valid(&self) -> Vec<u8> {
        self.0.valid.clone()
    }

    /// `(t_input, lead_steps, row0, col0)` per sample.
    #[getter]
    fn meta(&self) -> Vec<(usize, usize, usize, usize)> {
        meta_tuples(&self.0.meta)
    }
}

/// Prediction shard: flat `preds [N,P,P]` plus the metadata of the samples
/// it scores.
#[pyclass(frozen, module = "firecube")]
pub struct PredictionBatch(dataset::PredictionBatch);

#[pymethods]
impl PredictionBatch {
    #[new]
    fn new(patch: usize, preds: Vec<f32>, meta: Vec<(usize, usize, usize, usize)>) -> PyResult<Self> {
        if preds.len() != meta.len() * patch * patch {
            return Err(to_py_err(firecube_core::Error::Shape(format!(
                "{} predictions for {} samples of {patch}x{patch}",
                preds.len(),
                meta.len()
            ))));
        }
        Ok(Self(dataset::PredictionBatch { patch, preds, meta: meta_structs(meta) }))
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        dataset::PredictionBatch::read(&path).map(Self).py()
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.0.write(&path).py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn patch(&self) -> usize {
        self.0.patch
    }

    #[getter]
    fn preds(&self) -> Vec<f32> {
        self.0.preds.clone()
    }

    #[getter]
    fn meta(&self) -> Vec<(usize, usize, usize, usize)> {
        meta_tuples(&self.0.meta)
    }
}

/// Checks a shard file against the format; `kind` is "dataset" or
/// "predictions". Returns the header.
#[pyfunction]
fn validate_shard<'py>(py: Python<'py>, path: PathBuf, kind: &str) -> PyResult<Bound<'py, PyAny>> {
    let kind = match kind {
        "dataset" => ShardKind::Dataset,
        "predictions" => ShardKind::Predictions,
        other => return Err(config_err(format!("unknown shard kind `{other}`"))),
    };
    to_py(py, &dataset::validate_shard(&path, kind).py()?)
}

/// Histogram-based streaming metrics.
#[pyclass(module = "firecube")]
pub struct MetricAccumulator(metrics::MetricAccumulator);

#[pymethods]
impl MetricAccumulator {
    #[new]
    #[pyo3(signature = (bins = DEFAULT_BINS))]
    fn new(bins: usize) -> Self {
        Self(metrics::MetricAccumulator::new(bins))
    }

    /// Adds pixels; `valid` defaults to all ones.
    #[pyo3(signature = (scores, labels, valid = None))]
    fn update(&mut self, scores: Vec<f32>, labels: Vec<u8>, valid: Option<Vec<u8>>) -> PyResult<()> {
        let valid = valid.unwrap_or_else(|| vec![1; scores.len()]);
        self.0.update(&scores, &labels, &valid).py()
    }

    fn merge(&mut self, other: &MetricAccumulator) -> PyResult<()> {
        self.0.merge(&other.0).py()
    }

    #[getter]
    fn n_valid(&self) -> u64 {
        self.0.n_valid()
    }

    #[getter]
    fn n_positive(&self) -> u64 {
        self.0.n_positive()
    }

    /// Metric dict; the best-F1 threshold comes from `selection` when given.
    #[pyo3(signature = (selection = None))]
    fn finalize<'py>(&self, py: Python<'py>, selection: Option<&MetricAccumulator>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.finalize(selection.map(|s| &s.0)).py()?)
    }

    /// `(threshold, precision, recall)` rows.
    fn pr_curve(&self) -> Vec<(f64, f64, f64)> {
        self.0.pr_curve()
    }
}

#[pyfunction]
fn auprc_exact(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::auprc_exact(&scores, &labels).py()
}

#[pyfunction]
fn auroc_exact(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    metrics::auroc_exact(&scores, &labels).py()
}

/// Writes a synthetic cube to `path`; `config` overrides world defaults.
#[pyfunction]
#[pyo3(signature = (path, config = None))]
fn generate_world<'py>(
    py: Python<'py>,
    path: PathBuf,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: WorldConfig = from_py(config)?;
    let summary = py.detach(|| firecube_core::synth::generate_world(&cfg, &path)).py()?;
    to_py(py, &summary)
}

/// Extracts one dataset per lead under `out`. Returns the extraction report.
#[pyfunction]
#[pyo3(signature = (store, out, leads = None, patch_px = None))]
fn extract<'py>(
    py: Python<'py>,
    store: PathBuf,
    out: PathBuf,
    leads: Option<Vec<usize>>,
    patch_px: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| {
            let cube = firecube_core::Cube::open(&store)?;
            let mut cfg = ExtractConfig::for_cube(&cube)?;
            if let Some(l) = leads {
                cfg.leads = l;
            }
            if let Some(p) = patch_px {
                cfg.patch_px = p;
            }
            dataset::extract(&cube, &cfg, &out)
        })
        .py()?;
    to_py(py, &report)
}

/// Fits the burned-area climatology on `years` and saves it to `out`.
#[pyfunction]
fn fit_climatology(py: Python<'_>, store: PathBuf, years: Vec<i32>, out: PathBuf) -> PyResult<()> {
    py.detach(|| {
        let cube = firecube_core::Cube::open(&store)?;
        core_fit(&cube, TARGET_VARIABLE, &years)?.save(&out)
    })
    .py()
}

/// Scores one lead's dataset with prediction shards or a saved climatology.
#[pyfunction]
#[pyo3(signature = (dataset_dir, predictions = None, climatology = None, split = "test", bins = DEFAULT_BINS))]
fn evaluate<'py>(
    py: Python<'py>,
    dataset_dir: PathBuf,
    predictions: Option<PathBuf>,
    climatology: Option<PathBuf>,
    split: &str,
    bins: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let split = parse_split(split)?;
    let report = match (predictions, climatology) {
        (Some(p), None) => {
            py.detach(|| firecube_core::evaluate::evaluate(&dataset_dir, ScoreSource::Predictions(&p), split, bins))
        }
        (None, Some(c)) => py.detach(|| {
            let table = ClimatologyTable::load(&c)?;
            firecube_core::evaluate::evaluate(&dataset_dir, ScoreSource::Climatology(&table), split, bins)
        }),
        _ => return Err(config_err("pass exactly one of predictions or climatology")),
    }
    .py()?
    .0;
    to_py(py, &report)
}

/// Synthesizes, extracts, fits the baseline, trains and evaluates every lead
/// under `workdir`.
#[pyfunction]
#[pyo3(signature = (workdir, config = None))]
fn run_pipeline<'py>(
    py: Python<'py>,
    workdir: PathBuf,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: PipelineConfig = from_py(config)?;
    let outcome = py.detach(|| firecube_core::pipeline::run_pipeline(&cfg, &workdir)).py()?;
    to_py(py, &outcome)
}

/// Writes a PNG map of a row-major global field.
#[pyfunction]
#[pyo3(signature = (field, resolution_deg, out, spec = None))]
fn render_map(field: Vec<f32>, resolution_deg: f64, out: PathBuf, spec: Option<&Bound<'_, PyAny>>) -> PyResult<()> {
    let spec: RenderSpec = from_py(spec)?;
    let grid = firecube_core::GeoGrid::global(resolution_deg).py()?;
    core_render_map(&field, &grid, &spec, &out).py()
}

#[pymodule]
pub fn firecube(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FirecubeError", m.py().get_type::<FirecubeError>())?;
    m.add_class::<GeoGrid>()?;
    m.add_class::<TimeAxis>()?;
    m.add_class::<Cube>()?;
    m.add_class::<SampleBatch>()?;
    m.add_class::<PredictionBatch>()?;
    m.add_class::<MetricAccumulator>()?;
    m.add_function(wrap_pyfunction!(validate_shard, m)?)?;
    m.add_function(wrap_pyfunction!(auprc_exact, m)?)?;
    m.add_function(wrap_pyfunction!(auroc_exact, m)?)?;
    m.add_function(wrap_pyfunction!(generate_world, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(fit_climatology, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(render_map, m)?)?;
    Ok(())
}
