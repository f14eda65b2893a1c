//! Python bindings: datasets, partitions, full experiment runs, synthesis
//! from saved trajectories, and the meta-gradient selftest.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use dynafed_core::blobs::{generate_blobs, BlobsSpec};
use dynafed_core::config::ExperimentConfig;
use dynafed_core::error::Error;
use dynafed_core::experiment::{self, TrainAlgo};
use dynafed_core::federation;
use dynafed_core::idx::load_idx;
use dynafed_core::rng::Rng;
use dynafed_core::synthesis::SyntheticDataset;

fn to_py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// A labeled dataset (inputs plus integer class labels).
#[pyclass]
struct Dataset {
    inner: federation::LabeledDataset,
}

#[pymethods]
impl Dataset {
    /// Gaussian blobs with class centers on a circle.
    #[staticmethod]
    #[pyo3(signature = (classes=5, dims=2, per_class=200, radius=4.0, std=0.5, seed=0))]
    fn blobs(
        classes: usize,
        dims: usize,
        per_class: usize,
        radius: f64,
        std: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let spec = BlobsSpec { classes, dims, per_class, radius, std };
        let inner = generate_blobs(&spec, &mut Rng::new(seed)).map_err(to_py_err)?;
        Ok(Dataset { inner })
    }

    /// Parse an IDX image/label file pair.
    #[staticmethod]
    fn from_idx(images: PathBuf, labels: PathBuf) -> PyResult<Self> {
        Ok(Dataset { inner: load_idx(&images, &labels).map_err(to_py_err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.class_count
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.inputs.row(i).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, dims={}, classes={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.class_count
        )
    }
}

/// Disjoint per-client sample assignment with size weights.
#[pyclass]
struct Partition {
    inner: federation::Partition,
}

#[pymethods]
impl Partition {
    /// Per-class Dirichlet allocation; smaller alpha means more skew.
    #[staticmethod]
    #[pyo3(signature = (dataset, clients, alpha, seed=0))]
    fn dirichlet(dataset: &Dataset, clients: usize, alpha: f64, seed: u64) -> PyResult<Self> {
        let inner = federation::dirichlet_partition(
            &dataset.inner.labels,
            dataset.inner.class_count,
            clients,
            alpha,
            &mut Rng::new(seed).split("partition"),
        )
        .map_err(to_py_err)?;
        Ok(Partition { inner })
    }

    #[getter]
    fn clients(&self) -> usize {
        self.inner.client_count()
    }

    fn sizes(&self) -> Vec<usize> {
        self.inner.client_indices.iter().map(Vec::len).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    fn client_indices(&self, client: usize) -> PyResult<Vec<usize>> {
        self.inner
            .client_indices
            .get(client)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("client {client} out of range")))
    }

    fn class_histogram(&self, client: usize, dataset: &Dataset) -> PyResult<Vec<usize>> {
        if client >= self.inner.client_count() {
            return Err(PyValueError::new_err(format!("client {client} out of range")));
        }
        Ok(self.inner.class_histogram(client, &dataset.inner))
    }

    fn __repr__(&self) -> String {
        format!("Partition(clients={})", self.inner.client_count())
    }
}

/// A learned synthetic dataset: inputs plus soft label rows.
#[pyclass]
struct SyntheticData {
    inner: SyntheticDataset,
}

#[pymethods]
impl SyntheticData {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(SyntheticData {
            inner: dynafed_core::checkpoint::load_synthetic(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dynafed_core::checkpoint::save_synthetic(&path, &self.inner).map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.len()
    }

    fn inputs(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.x.row(i).to_vec()).collect()
    }

    /// Softmax of the learned logits, one probability row per sample.
    fn soft_labels(&self) -> Vec<Vec<f64>> {
        let soft = self.inner.soft_targets();
        (0..self.inner.len()).map(|i| soft.row(i).to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "SyntheticData(n={}, dims={}, classes={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.class_count()
        )
    }
}

fn load_config(config_toml: &str, seed: Option<u64>, output_dir: Option<PathBuf>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_toml(config_toml).map_err(to_py_err)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

/// Run a full federated experiment from a TOML document.
///
/// Returns a dict with the summary and one metrics dict per round; output
/// files land in the config's output directory.
#[pyfunction]
#[pyo3(signature = (config_toml, algo="fedavg", seed=None, output_dir=None))]
fn run_experiment(
    py: Python<'_>,
    config_toml: &str,
    algo: &str,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> PyResult<Py<PyDict>> {
    let cfg = load_config(config_toml, seed, output_dir)?;
    let algo = TrainAlgo::parse(algo).map_err(to_py_err)?;
    let (output, summary) = experiment::execute_train(&cfg, algo).map_err(to_py_err)?;

    let result = PyDict::new(py);
    let summary_dict = PyDict::new(py);
    summary_dict.set_item("algo", &summary.algo)?;
    summary_dict.set_item("seed", summary.seed)?;
    summary_dict.set_item("final_acc", summary.final_acc)?;
    result.set_item("summary", summary_dict)?;

    let rows = PyList::empty(py);
    for m in &output.metrics {
        let row = PyDict::new(py);
        row.set_item("round", m.round)?;
        row.set_item("phase", m.phase)?;
        row.set_item("test_loss", m.test_loss)?;
        row.set_item("test_acc", m.test_acc)?;
        row.set_item("pre_ft_acc", m.pre_ft_acc)?;
        row.set_item("post_ft_acc", m.test_acc)?;
        rows.append(row)?;
    }
    result.set_item("metrics", rows)?;
    if output.synthetic.is_some() {
        result.set_item("dsyn_path", cfg.output_dir.join("dsyn.dyna"))?;
    }
    result.set_item("output_dir", &cfg.output_dir)?;
    Ok(result.unbind())
}

/// Learn a synthetic dataset from a saved trajectory checkpoint.
#[pyfunction]
#[pyo3(signature = (config_toml, trajectory, seed=None, output_dir=None))]
fn synthesize(
    config_toml: &str,
    trajectory: PathBuf,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> PyResult<SyntheticData> {
    let cfg = load_config(config_toml, seed, output_dir)?;
    let inner = experiment::execute_synth(&cfg, &trajectory).map_err(to_py_err)?;
    Ok(SyntheticData { inner })
}

/// Partition statistics (sizes, weights, histograms) as a JSON string.
#[pyfunction]
#[pyo3(signature = (config_toml, seed=None))]
fn partition_stats(config_toml: &str, seed: Option<u64>) -> PyResult<String> {
    let cfg = load_config(config_toml, seed, None)?;
    experiment::partition_stats_json(&cfg).map_err(to_py_err)
}

/// Max relative error of the synthesis meta-gradients against central
/// finite differences on the tiny fixed instance.
#[pyfunction]
fn meta_gradient_selftest() -> PyResult<f64> {
    experiment::selftest_meta_gradient().map_err(to_py_err)
}

#[pymodule]
fn dynafed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Partition>()?;
    m.add_class::<SyntheticData>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(partition_stats, m)?)?;
    m.add_function(wrap_pyfunction!(meta_gradient_selftest, m)?)?;
    Ok(())
}
