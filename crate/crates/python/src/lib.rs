//! Python module `odflow`: configuration, the staged pipeline, zone
//! partitions, metrics and trained checkpoints.

use std::fs::File;
use std::path::PathBuf;

use odflow_core::cli::{CliError, Run, RunConfig};
use odflow_core::features::Variant;
use odflow_core::geo::{load_partition, partition_to_geojson, ZonePartition};
use odflow_core::model::{load_checkpoint, ForecastModel};
use odflow_core::pipeline::{self, MetricsReport};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Internal(_) => PyRuntimeError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

/// Run configuration; `RunConfig()` gives the defaults.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    fn new() -> Self {
        Self { inner: RunConfig::default() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml(text)
            .map(|inner| Self { inner })
            .map_err(|issues| value_err(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")))
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        RunConfig::from_file(&path)
            .map(|inner| Self { inner })
            .map_err(|issues| value_err(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")))
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Validation problems as `"key: message"` strings.
    fn problems(&self) -> Vec<String> {
        self.inner.problems().iter().map(|i| i.to_string()).collect()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
        self.inner.normalize();
    }

    #[getter]
    fn out_dir(&self) -> String {
        self.inner.out_dir.clone()
    }

    #[setter]
    fn set_out_dir(&mut self, dir: String) {
        self.inner.out_dir = dir;
    }

    #[getter]
    fn variants(&self) -> Vec<String> {
        self.inner.variants.clone()
    }

    #[setter]
    fn set_variants(&mut self, variants: Vec<String>) {
        self.inner.variants = variants;
    }

    #[getter]
    fn epochs(&self) -> usize {
        self.inner.train.epochs
    }

    #[setter]
    fn set_epochs(&mut self, epochs: usize) {
        self.inner.train.epochs = epochs;
    }

    #[getter]
    fn synth_days(&self) -> usize {
        self.inner.synth.days
    }

    #[setter]
    fn set_synth_days(&mut self, days: usize) {
        self.inner.synth.days = days;
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(seed={}, out_dir={:?}, variants={:?})", self.inner.seed, self.inner.out_dir, self.inner.variants)
    }
}

/// Staged pipeline bound to one output directory.
#[pyclass(name = "Pipeline", unsendable)]
struct PyPipeline {
    run: Run,
}

#[pymethods]
impl PyPipeline {
    #[new]
    fn new(config: &PyRunConfig) -> PyResult<Self> {
        let issues = config.inner.problems();
        if !issues.is_empty() {
            return Err(value_err(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")));
        }
        Ok(Self { run: Run::open(config.inner.clone()).map_err(cli_err)? })
    }

    /// Runs one stage by name; `report` and `all` return the report text.
    fn run(&mut self, stage: &str) -> PyResult<Option<String>> {
        let r = &mut self.run;
        match stage {
            "synth" => r.synth().map(|_| None),
            "aggregate" => r.aggregate().map(|_| None),
            "graphs" => r.graphs().map(|_| None),
            "featurize" => r.featurize().map(|_| None),
            "train" => r.train().map(|_| None),
            "eval" => r.eval().map(|_| None),
            "report" => r.report().map(Some),
            "all" => r.all().map(Some),
            other => return Err(value_err(format!("unknown stage {other:?}"))),
        }
        .map_err(cli_err)
    }

    #[getter]
    fn out_dir(&self) -> PathBuf {
        self.run.out_dir().to_path_buf()
    }
}

/// Zone partition with greedy pairwise aggregation.
#[pyclass(name = "Partition", from_py_object)]
#[derive(Clone)]
struct PyPartition {
    inner: ZonePartition,
}

#[pymethods]
impl PyPartition {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_partition(&path).map(|inner| Self { inner }).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn zone_ids(&self) -> Vec<String> {
        self.inner.zone_ids()
    }

    fn aggregate_to(&self, target: usize) -> PyResult<Self> {
        self.inner.aggregate_to(target).map(|inner| Self { inner }).map_err(value_err)
    }

    fn shared_perimeter(&self, a: &str, b: &str) -> Option<f64> {
        self.inner.shared_perimeter(a, b)
    }

    fn to_geojson(&self) -> String {
        partition_to_geojson(&self.inner).to_string()
    }
}

/// A trained checkpoint.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: ForecastModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_checkpoint(&path).map(|inner| Self { inner }).map_err(value_err)
    }

    #[getter]
    fn variant(&self) -> Option<String> {
        self.inner.variant.map(|v| v.to_string())
    }

    #[getter]
    fn n_od(&self) -> usize {
        self.inner.dims.n_od
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.dims.features
    }

    fn param_names(&self) -> Vec<String> {
        self.inner.names().iter().map(|s| s.to_string()).collect()
    }
}

/// Metrics rows as dicts, in report order.
#[pyfunction]
fn read_metrics(py: Python<'_>, path: PathBuf) -> PyResult<Vec<Py<PyDict>>> {
    let file = File::open(&path).map_err(value_err)?;
    let report = MetricsReport::read_csv(file).map_err(value_err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("variant", &r.variant)?;
            d.set_item("scenario", &r.scenario)?;
            d.set_item("mse", r.mse)?;
            d.set_item("mape", r.mape)?;
            d.set_item("hours", r.hours)?;
            d.set_item("zero_fraction", r.zero_fraction)?;
            Ok(d.unbind())
        })
        .collect()
}

#[pyfunction]
fn render_report(path: PathBuf) -> PyResult<String> {
    let file = File::open(&path).map_err(value_err)?;
    Ok(MetricsReport::read_csv(file).map_err(value_err)?.to_text())
}

#[pyfunction]
fn variants() -> Vec<String> {
    Variant::names()
}

#[pyfunction]
fn variant_columns(name: &str) -> PyResult<Vec<String>> {
    let v: Variant = name.parse().map_err(value_err)?;
    Ok(v.spec().column_names())
}

#[pyfunction]
fn mse(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    pipeline::mse(&predicted, &actual).map_err(value_err)
}

/// MAPE over entries whose actual value is non-zero.
#[pyfunction]
fn mape(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    pipeline::mape(&predicted, &actual).map_err(value_err)
}

#[pymodule]
fn odflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyPipeline>()?;
    m.add_class::<PyPartition>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(read_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    m.add_function(wrap_pyfunction!(variants, m)?)?;
    m.add_function(wrap_pyfunction!(variant_columns, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    Ok(())
}
