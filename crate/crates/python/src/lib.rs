//! Python bindings for `predsens_core`.
//!
//! Datasets cross the boundary as lists of rows plus a label list and the
//! protected column index; reports come back as plain dicts.

use predsens_core::audit;
use predsens_core::data::{self, CausalModelSpec, FeatureColumn, LabelBias, Provenance, TabularDataset};
use predsens_core::digest::params_digest;
use predsens_core::experiment::{self, ExperimentRecipe};
use predsens_core::monitor::{self, Baseline, Verdict};
use predsens_core::nn::{self, ModelFile, NetworkParams, NetworkSpec, TrainConfig};
use predsens_core::{sensitivity, Error};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyString};
use serde::Serialize;
use serde_json::Value;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numerical { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn flatten(rows: &[Vec<f64>]) -> PyResult<(Vec<f64>, usize)> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok((rows.concat(), d))
}

fn dataset(rows: &[Vec<f64>], labels: Vec<u8>, protected_index: usize) -> PyResult<TabularDataset> {
    let (features, d) = flatten(rows)?;
    let columns = (0..d).map(|i| FeatureColumn::numeric(format!("x{i}"))).collect();
    TabularDataset::new(columns, features, labels, protected_index, Provenance::Original).map_err(py_err)
}

fn dataset_dict<'py>(py: Python<'py>, data: &TabularDataset) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let rows: Vec<Vec<f64>> = data.rows().map(<[f64]>::to_vec).collect();
    d.set_item("columns", data.column_names())?;
    d.set_item("features", rows)?;
    d.set_item("labels", data.labels().iter().map(|&y| u32::from(y)).collect::<Vec<_>>())?;
    d.set_item("protected_index", data.protected_index())?;
    Ok(d)
}

/// A feed-forward network with ReLU hidden layers and a sigmoid output.
#[pyclass(module = "predsens")]
struct Network {
    params: NetworkParams,
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (input_dim, hidden_widths = vec![32], seed = 0))]
    fn new(input_dim: usize, hidden_widths: Vec<usize>, seed: u64) -> PyResult<Self> {
        let params = nn::init_network(&NetworkSpec::new(input_dim, hidden_widths, seed)).map_err(py_err)?;
        Ok(Network { params })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let params = ModelFile::load(path).and_then(|f| f.params()).map_err(py_err)?;
        Ok(Network { params })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        ModelFile::new(&self.params).save(path).map_err(py_err)
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    fn digest(&self) -> String {
        params_digest(&self.params)
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<f64> {
        self.params.forward(&x).map_err(py_err)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<bool> {
        self.params.predict(&x).map_err(py_err)
    }

    fn input_gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.params.input_gradient(&x).map_err(py_err)?.values)
    }

    /// Trains in place with Adam on binary cross-entropy; returns the mean
    /// loss after each epoch.
    #[pyo3(signature = (features, targets, epochs = 40, learning_rate = 0.001, batch_size = 32, shuffle_seed = 0))]
    fn train(
        &mut self,
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        shuffle_seed: u64,
    ) -> PyResult<Vec<f64>> {
        let (flat, d) = flatten(&features)?;
        let cfg = TrainConfig {
            epochs,
            learning_rate,
            batch_size,
            shuffle_seed,
            ..TrainConfig::default()
        };
        let report = nn::train_on(self.params.clone(), &flat, d, &targets, &cfg).map_err(py_err)?;
        self.params = report.params;
        Ok(report.epoch_losses)
    }

    fn __repr__(&self) -> String {
        let widths: Vec<String> = self.params.spec.hidden_widths.iter().map(|w| w.to_string()).collect();
        format!(
            "Network(input_dim={}, hidden_widths=[{}])",
            self.params.input_dim(),
            widths.join(", ")
        )
    }
}

/// `{ps, psw, grad_abs, featurewise}` for the classifier `f` at `x`, weighted
/// by the protected-status model `a`.
#[pyfunction]
fn prediction_sensitivity<'py>(py: Python<'py>, a: &Network, f: &Network, x: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let record = sensitivity::prediction_sensitivity(&a.params, &f.params, &x).map_err(py_err)?;
    to_py(py, &record)
}

#[pyfunction]
fn roc_curve<'py>(py: Python<'py>, scores: Vec<f64>, positives: Vec<bool>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &audit::roc_curve(&scores, &positives).map_err(py_err)?)
}

#[pyfunction]
fn statistical_parity_difference(predictions: Vec<bool>, protected: Vec<u8>) -> PyResult<f64> {
    audit::statistical_parity_difference(&predictions, &protected).map_err(py_err)
}

#[pyfunction]
fn disparate_impact_ratio(predictions: Vec<bool>, protected: Vec<u8>) -> PyResult<f64> {
    audit::disparate_impact_ratio(&predictions, &protected).map_err(py_err)
}

/// Samples the two-feature causal model; `biased` draws the protected
/// attribute with `Pr = p_pos / p_neg` given the label.
#[pyfunction]
#[pyo3(signature = (n_samples = 5000, seed = 0, biased = false, p_pos = 0.25, p_neg = 0.75))]
fn generate_synthetic(
    py: Python<'_>,
    n_samples: usize,
    seed: u64,
    biased: bool,
    p_pos: f64,
    p_neg: f64,
) -> PyResult<Bound<'_, PyDict>> {
    let spec = CausalModelSpec {
        n_samples,
        seed,
        bias: biased.then_some(LabelBias {
            p_protected_given_positive: p_pos,
            p_protected_given_negative: p_neg,
        }),
        ..CausalModelSpec::default()
    };
    let data = if biased {
        data::generate_biased_synthetic(&spec)
    } else {
        data::generate_fair_synthetic(&spec)
    }
    .map_err(py_err)?;
    dataset_dict(py, &data)
}

/// Original rows followed by copies with the protected value negated.
#[pyfunction]
fn counterfactual_augment(
    py: Python<'_>,
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
    protected_index: usize,
) -> PyResult<Bound<'_, PyDict>> {
    let data = dataset(&features, labels, protected_index)?;
    dataset_dict(py, &data::counterfactual_augment(&data).map_err(py_err)?)
}

#[pyfunction]
fn compute_baseline<'py>(py: Python<'py>, f: &Network, a: &Network, rows: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    let ps = rows
        .iter()
        .map(|x| sensitivity::prediction_sensitivity(&a.params, &f.params, x).map(|r| r.ps))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    to_py(py, &monitor::baseline_from_scores(&ps, &f.params, &a.params).map_err(py_err)?)
}

/// `"alarm"` iff `ps > mean_ps + k_sigma * std_ps`, else `"ok"`.
#[pyfunction]
#[pyo3(signature = (ps, mean_ps, std_ps, k_sigma = monitor::DEFAULT_K_SIGMA))]
fn check(ps: f64, mean_ps: f64, std_ps: f64, k_sigma: f64) -> &'static str {
    let baseline = Baseline {
        mean_ps,
        std_ps,
        n: 0,
        classifier_digest: String::new(),
        protected_model_digest: String::new(),
    };
    match monitor::check(ps, &baseline, k_sigma).verdict {
        Verdict::Ok => "ok",
        Verdict::Alarm => "alarm",
    }
}

/// Runs an experiment recipe given as a JSON string and returns the report.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, recipe_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let recipe = ExperimentRecipe::from_json(recipe_json).map_err(py_err)?;
    let report = py.detach(|| experiment::run_experiment(&recipe)).map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
fn predsens(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(prediction_sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(statistical_parity_difference, m)?)?;
    m.add_function(wrap_pyfunction!(disparate_impact_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(counterfactual_augment, m)?)?;
    m.add_function(wrap_pyfunction!(compute_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
