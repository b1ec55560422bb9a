//! Python bindings. Matrices cross the boundary as lists of rows; reports
//! come back as plain dicts decoded from the same JSON the CLI writes.

use gnnfair::aggregate::{aggregate, AggregationSpec};
use gnnfair::graph::{load_bundle, save_bundle, GraphBundle};
use gnnfair::harness::{
    run_biased_selection, run_bound_audit_world, run_disparity, run_noisy, ModelKind, TrialPlan,
};
use gnnfair::model::{margin_loss_from_logits, MlpClassifier};
use gnnfair::pac_bayes::{
    covering_count, prior_sigma, spectral_tail_check, theorem1_rhs, theorem2_rhs, BoundConfig,
};
use gnnfair::subgroup::{centrality_scores, CentralityKind, SplitKind};
use gnnfair::synth::{gen_assumption_world, gen_homophilous, save_world, HomophilyConfig, WorldConfig, WorldLayout};
use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(err("rows must all have the same length"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(err)
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn model_kind(name: &str) -> PyResult<ModelKind> {
    match name {
        "sgc" => Ok(ModelKind::SgcForm),
        "mlp" => Ok(ModelKind::Mlp),
        _ => Err(err(format!("model must be 'sgc' or 'mlp', got {name:?}"))),
    }
}

fn split_kind(name: &str) -> PyResult<SplitKind> {
    Ok(match name {
        "agg" => SplitKind::AggDistance,
        "geodesic" => SplitKind::Geodesic,
        "degree" => SplitKind::Degree,
        "closeness" => SplitKind::Closeness,
        "betweenness" => SplitKind::Betweenness,
        "pagerank" => SplitKind::Pagerank,
        _ => return Err(err(format!("unknown split {name:?}"))),
    })
}

fn centrality_kind(name: &str) -> PyResult<CentralityKind> {
    Ok(match name {
        "degree" => CentralityKind::Degree,
        "closeness" => CentralityKind::Closeness,
        "betweenness" => CentralityKind::Betweenness,
        "pagerank" => CentralityKind::Pagerank,
        _ => return Err(err(format!("unknown centrality {name:?}"))),
    })
}

/// A graph with node features and labels.
#[pyclass(name = "GraphBundle", frozen)]
struct PyBundle {
    inner: GraphBundle,
}

#[pymethods]
impl PyBundle {
    #[new]
    #[pyo3(signature = (num_nodes, edges, features, labels, num_classes, name = "bundle"))]
    fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        name: &str,
    ) -> PyResult<Self> {
        let inner = GraphBundle::new(name, num_nodes, edges, to_matrix(features)?, labels, num_classes).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_bundle(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_bundle(&self.inner, path).map_err(err)
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.features())
    }

    /// Aggregated features under `"identity"`, `"one_step_mean"` or `"two_step_norm"`.
    fn aggregate(&self, spec: &str) -> PyResult<Vec<Vec<f64>>> {
        let spec = match spec {
            "identity" => AggregationSpec::Identity,
            "one_step_mean" => AggregationSpec::OneStepMean,
            "two_step_norm" => AggregationSpec::TwoStepNorm,
            _ => return Err(err(format!("unknown aggregation {spec:?}"))),
        };
        Ok(to_rows(aggregate(&self.inner, &self.inner.to_csr(), spec).matrix()))
    }

    fn centrality(&self, kind: &str) -> PyResult<Vec<f64>> {
        let scores = centrality_scores(&self.inner.to_csr(), centrality_kind(kind)?).map_err(err)?;
        Ok(scores.into_values().collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "GraphBundle(name={:?}, nodes={}, edges={}, classes={})",
            self.inner.name(),
            self.inner.num_nodes(),
            self.inner.edges().len(),
            self.inner.num_classes()
        )
    }
}

/// ReLU MLP without biases; each layer is an `out x in` list of rows.
#[pyclass(name = "MlpClassifier", frozen)]
struct PyMlp {
    inner: MlpClassifier,
}

#[pymethods]
impl PyMlp {
    #[new]
    fn new(layers: Vec<Vec<Vec<f64>>>) -> PyResult<Self> {
        let layers = layers.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: MlpClassifier::new(layers).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: MlpClassifier::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    fn forward(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.forward(to_matrix(rows)?.view()).map_err(err)?))
    }

    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        self.inner.predict(to_matrix(rows)?.view()).map_err(err)
    }

    fn weight_norms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &self.inner.weight_norms().map_err(err)?)
    }
}

#[pyfunction]
#[pyo3(signature = (n_per_class = 400, num_classes = 4, dim = 16, intra_p = 0.01, inter_p = 0.001,
    center_sep = 1.0, noise_std = 1.0, degree_heterogeneity = 0.0, communities = 1, community_sep = 0.0,
    cross_community = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn synth_homophilous(
    n_per_class: usize,
    num_classes: usize,
    dim: usize,
    intra_p: f64,
    inter_p: f64,
    center_sep: f64,
    noise_std: f64,
    degree_heterogeneity: f64,
    communities: usize,
    community_sep: f64,
    cross_community: f64,
    seed: u64,
) -> PyResult<PyBundle> {
    let cfg = HomophilyConfig {
        n_per_class,
        num_classes,
        dim,
        intra_p,
        inter_p,
        center_sep,
        noise_std,
        degree_heterogeneity,
        communities_per_class: communities,
        community_sep,
        cross_community,
        seed,
    };
    Ok(PyBundle { inner: gen_homophilous(&cfg).map_err(err)? })
}

/// The community-structured bundle used by the acceptance suite.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn community_benchmark(seed: u64) -> PyResult<PyBundle> {
    Ok(PyBundle { inner: gen_homophilous(&HomophilyConfig::community_benchmark(seed)).map_err(err)? })
}

#[allow(clippy::too_many_arguments)]
fn plan(
    model: &str,
    split: &str,
    groups: usize,
    trials: usize,
    seed: u64,
    train_per_class: usize,
    val: usize,
    test: usize,
) -> PyResult<TrialPlan> {
    let p = TrialPlan {
        split: split_kind(split)?,
        groups,
        trials,
        seed,
        train_per_class,
        val_count: val,
        test_count: test,
        ..TrialPlan::new(model_kind(model)?)
    };
    p.validate().map_err(err)?;
    Ok(p)
}

/// Per-subgroup accuracy over repeated trials.
#[pyfunction]
#[pyo3(signature = (bundle, model = "sgc", split = "agg", groups = 5, trials = 40, seed = 0,
    train_per_class = 20, val = 500, test = 1000))]
#[allow(clippy::too_many_arguments)]
fn audit<'py>(
    py: Python<'py>,
    bundle: &PyBundle,
    model: &str,
    split: &str,
    groups: usize,
    trials: usize,
    seed: u64,
    train_per_class: usize,
    val: usize,
    test: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = plan(model, split, groups, trials, seed, train_per_class, val, test)?;
    let report = py.detach(|| run_disparity(&bundle.inner, &p)).map_err(err)?;
    to_dict(py, &report)
}

/// Clean versus noise-injected audit with matched splits.
#[pyfunction]
#[pyo3(signature = (bundle, alpha = 5.0, model = "mlp", split = "agg", groups = 5, trials = 40, seed = 0,
    train_per_class = 20, val = 500, test = 1000))]
#[allow(clippy::too_many_arguments)]
fn noisy_experiment<'py>(
    py: Python<'py>,
    bundle: &PyBundle,
    alpha: f64,
    model: &str,
    split: &str,
    groups: usize,
    trials: usize,
    seed: u64,
    train_per_class: usize,
    val: usize,
    test: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = plan(model, split, groups, trials, seed, train_per_class, val, test)?;
    let report = py.detach(|| run_noisy(&bundle.inner, &p, alpha)).map_err(err)?;
    to_dict(py, &report)
}

/// Uniform versus centrality-biased training selection.
#[pyfunction]
#[pyo3(signature = (bundle, dominant_class, centrality = "pagerank", model = "sgc", trials = 40, seed = 0,
    train_per_class = 20, val = 400, test = 1000))]
#[allow(clippy::too_many_arguments)]
fn biased_experiment<'py>(
    py: Python<'py>,
    bundle: &PyBundle,
    dominant_class: usize,
    centrality: &str,
    model: &str,
    trials: usize,
    seed: u64,
    train_per_class: usize,
    val: usize,
    test: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = plan(model, "agg", 1, trials, seed, train_per_class, val, test)?;
    let kind = centrality_kind(centrality)?;
    let report = py.detach(|| run_biased_selection(&bundle.inner, &p, kind, dominant_class)).map_err(err)?;
    to_dict(py, &report)
}

/// Generates an assumption world, optionally saves it, and runs the
/// per-subgroup bound audit on it.
#[pyfunction]
#[pyo3(signature = (n_0 = 30, s_m = 10, dim = 2, epsilon_m = 0.5, c = 0.5, num_classes = 2, spread = 3.0,
    scattered = true, groups = 4, trials = 10, val = 60, test = 240, gamma = None, mc_samples = 200, seed = 0,
    save_to = None))]
#[allow(clippy::too_many_arguments)]
fn world_bound_audit<'py>(
    py: Python<'py>,
    n_0: usize,
    s_m: usize,
    dim: usize,
    epsilon_m: f64,
    c: f64,
    num_classes: usize,
    spread: f64,
    scattered: bool,
    groups: usize,
    trials: usize,
    val: usize,
    test: usize,
    gamma: Option<f64>,
    mc_samples: usize,
    seed: u64,
    save_to: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let world = gen_assumption_world(&WorldConfig {
        n_0,
        s_m,
        dim,
        epsilon_m,
        c,
        num_classes,
        spread,
        layout: if scattered { WorldLayout::Scattered } else { WorldLayout::Line },
        seed,
    })
    .map_err(err)?;
    if let Some(dir) = save_to {
        save_world(&world, dir).map_err(err)?;
    }
    let p = TrialPlan { groups, trials, seed, val_count: val, test_count: test, ..TrialPlan::default() };
    let cfg = BoundConfig { gamma, mc_samples, seed, ..BoundConfig::default() };
    let report = py.detach(|| run_bound_audit_world(&world, &p, &cfg)).map_err(err)?;
    to_dict(py, &report)
}

#[pyfunction]
fn margin_loss(logits: Vec<Vec<f64>>, labels: Vec<usize>, gamma: f64) -> PyResult<f64> {
    margin_loss_from_logits(to_matrix(logits)?.view(), &labels, gamma).map_err(err)
}

#[pyfunction(name = "prior_sigma")]
fn py_prior_sigma(gamma: f64, epsilon_m: f64, depth: usize, max_width: usize, lambda_: f64, n_0: usize, alpha: f64) -> PyResult<f64> {
    prior_sigma(gamma, epsilon_m, depth, max_width, lambda_, n_0, alpha).map_err(err)
}

#[pyfunction(name = "theorem1_rhs")]
fn py_theorem1(train_margin_loss: f64, kl: f64, lambda_: f64, n_0: usize, delta: f64, discrepancy: f64) -> PyResult<f64> {
    theorem1_rhs(train_margin_loss, kl, lambda_, n_0, delta, discrepancy).map_err(err)
}

#[pyfunction(name = "theorem2_rhs")]
fn py_theorem2(train_margin_loss: f64, kl: f64, lambda_: f64, n_0: usize, delta: f64, discrepancy: f64) -> PyResult<f64> {
    theorem2_rhs(train_margin_loss, kl, lambda_, n_0, delta, discrepancy).map_err(err)
}

#[pyfunction(name = "covering_count")]
fn py_covering_count(depth: usize, c_max_frobenius: f64, b_m: f64, gamma: f64) -> f64 {
    covering_count(depth, c_max_frobenius, b_m, gamma)
}

#[pyfunction(name = "spectral_tail_check")]
#[pyo3(signature = (sigma, b, rows, cols, t, trials = 10_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn py_spectral_tail<'py>(
    py: Python<'py>,
    sigma: f64,
    b: usize,
    rows: usize,
    cols: usize,
    t: f64,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| spectral_tail_check(sigma, b, rows, cols, t, trials, seed)).map_err(err)?;
    to_dict(py, &r)
}

#[pymodule]
fn gnnfair_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBundle>()?;
    m.add_class::<PyMlp>()?;
    m.add_function(wrap_pyfunction!(synth_homophilous, m)?)?;
    m.add_function(wrap_pyfunction!(community_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(noisy_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(biased_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(world_bound_audit, m)?)?;
    m.add_function(wrap_pyfunction!(margin_loss, m)?)?;
    m.add_function(wrap_pyfunction!(py_prior_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(py_theorem1, m)?)?;
    m.add_function(wrap_pyfunction!(py_theorem2, m)?)?;
    m.add_function(wrap_pyfunction!(py_covering_count, m)?)?;
    m.add_function(wrap_pyfunction!(py_spectral_tail, m)?)?;
    Ok(())
}
