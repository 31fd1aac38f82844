//! Python bindings. Structured results cross the boundary as plain dicts and
//! lists; datasets, classifiers and embeddings are wrapped as classes.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use gapent_core::capacity::{self, Convention};
use gapent_core::featuregen::{self, Envelope, Generator, HeavyTailSpec, PlantOptions};
use gapent_core::harness::{self, acceptance, ExperimentConfig};
use gapent_core::{bounds, classify, norm, spectral, Error, NormSpec, RngStream};

fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Parse(_) | Error::Config { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn norm_of(p: f64) -> PyResult<NormSpec> {
    NormSpec::lp(p).map_err(err)
}

fn generator(model: &str, n: usize, c: f64, alpha: f64, envelope: &str) -> PyResult<Generator> {
    let envelope = match envelope {
        "exact" => Envelope::Exact,
        "uniform" => Envelope::Uniform,
        other => return Err(PyValueError::new_err(format!("unknown envelope {other:?}"))),
    };
    let spec = match model {
        "magnitude" => HeavyTailSpec::magnitude(n, c, alpha, envelope),
        "sparse" => HeavyTailSpec::sparse(n, c, alpha),
        other => return Err(PyValueError::new_err(format!("unknown model {other:?}"))),
    };
    let g = Generator::HeavyTail(spec);
    g.validate().map_err(err)?;
    Ok(g)
}

fn convention(name: &str) -> PyResult<Convention> {
    match name {
        "strict" => Ok(Convention::Strict),
        "separating" => Ok(Convention::Separating),
        other => Err(PyValueError::new_err(format!(
            "unknown convention {other:?}"
        ))),
    }
}

#[pyclass(name = "GapClassifier", module = "gapent", from_py_object)]
#[derive(Clone)]
pub struct PyGapClassifier {
    inner: norm::GapClassifier,
}

#[pymethods]
impl PyGapClassifier {
    #[new]
    #[pyo3(signature = (w, b, delta, p = 2.0))]
    fn new(w: Vec<f64>, b: f64, delta: f64, p: f64) -> PyResult<Self> {
        Ok(PyGapClassifier {
            inner: norm::GapClassifier::new(w, b, delta, norm_of(p)?).map_err(err)?,
        })
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w.clone()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.norm.p
    }

    /// `⟨w, x⟩ - b`.
    fn signed_margin(&self, x: Vec<f64>) -> PyResult<f64> {
        let v = norm::FeatureVector::new(x, self.inner.norm).map_err(err)?;
        norm::signed_margin(&self.inner, &v).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        classify::classifier_to_json(&self.inner).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGapClassifier {
            inner: classify::classifier_from_json(text).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "GapClassifier(dim={}, b={}, delta={}, p={})",
            self.inner.w.len(),
            self.inner.b,
            self.inner.delta,
            self.inner.norm.p
        )
    }
}

#[pyclass(name = "LabeledDataset", module = "gapent")]
pub struct PyLabeledDataset {
    inner: featuregen::LabeledDataset,
}

#[pymethods]
impl PyLabeledDataset {
    #[new]
    #[pyo3(signature = (points, labels, p = 2.0))]
    fn new(points: Vec<Vec<f64>>, labels: Vec<i8>, p: f64) -> PyResult<Self> {
        Ok(PyLabeledDataset {
            inner: featuregen::LabeledDataset::from_parts(points, &labels, norm_of(p)?)
                .map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, p = 2.0))]
    fn read_csv(path: PathBuf, p: f64) -> PyResult<Self> {
        let file = std::fs::File::open(&path).map_err(|e| err(e.into()))?;
        let inner =
            featuregen::LabeledDataset::read_csv(file, norm_of(p)?, &path.display().to_string())
                .map_err(err)?;
        Ok(PyLabeledDataset { inner })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| err(e.into()))?;
        self.inner.write_csv(file).map_err(err)
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner
            .points()
            .into_iter()
            .map(<[f64]>::to_vec)
            .collect()
    }

    #[getter]
    fn labels(&self) -> Vec<i8> {
        self.inner.labels()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// The hidden classifier used to label a planted dataset.
    fn planted_classifier(&self) -> Option<PyGapClassifier> {
        self.inner
            .planted_classifier()
            .map(|c| PyGapClassifier { inner: c.clone() })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "LabeledDataset(len={}, dim={})",
            self.inner.len(),
            self.inner.dim()
        )
    }
}

#[pyclass(name = "SpectralEmbedding", module = "gapent")]
pub struct PySpectralEmbedding {
    inner: spectral::SpectralEmbedding,
}

#[pymethods]
impl PySpectralEmbedding {
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner
            .features
            .iter()
            .map(|f| f.coords.clone())
            .collect()
    }

    #[getter]
    fn k(&self) -> u32 {
        self.inner.k
    }

    fn mean_squared_norm(&self) -> f64 {
        spectral::mean_squared_norm(&self.inner)
    }

    /// `Σ λ^{2k} / n` over the eigenvalues in use.
    fn eigenvalue_moment(&self) -> f64 {
        spectral::eigenvalue_moment(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "SpectralEmbedding(n={}, k={})",
            self.inner.n(),
            self.inner.k
        )
    }
}

/// Planted dataset from a heavy-tailed model.
#[pyfunction]
#[pyo3(signature = (ell, delta = 0.0, *, model = "magnitude", n = 16, C = 1.0, alpha = 1.5, envelope = "exact", random_offset = false, p = 2.0, seed = 0, stream = 0))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn generate(
    ell: usize,
    delta: f64,
    model: &str,
    n: usize,
    C: f64,
    alpha: f64,
    envelope: &str,
    random_offset: bool,
    p: f64,
    seed: u64,
    stream: u64,
) -> PyResult<PyLabeledDataset> {
    let gen = generator(model, n, C, alpha, envelope)?;
    let opts = PlantOptions {
        random_offset,
        norm: norm_of(p)?,
    };
    let inner = featuregen::plant_labeled_dataset(
        &gen,
        ell,
        delta,
        opts,
        &mut RngStream::new(seed, stream),
    )
    .map_err(err)?;
    Ok(PyLabeledDataset { inner })
}

/// Maximum-margin training. Returns `(classifier, margin)`.
#[pyfunction]
fn train(py: Python<'_>, data: &PyLabeledDataset) -> PyResult<(PyGapClassifier, f64)> {
    let t = py
        .detach(|| classify::max_margin_train(&data.inner))
        .map_err(err)?;
    Ok((
        PyGapClassifier {
            inner: t.classifier,
        },
        t.margin,
    ))
}

#[pyfunction]
#[pyo3(signature = (classifier, data, gap_tolerant = true))]
fn empirical_risk(
    classifier: &PyGapClassifier,
    data: &PyLabeledDataset,
    gap_tolerant: bool,
) -> PyResult<f64> {
    classify::empirical_risk(&classifier.inner, &data.inner, gap_tolerant).map_err(err)
}

/// Whether `labels` is realizable with margin `delta`; returns a dict with the
/// achieved margin, an upper bound and the witness classifier.
#[pyfunction]
#[pyo3(signature = (points, labels, delta, p = 2.0))]
fn gap_feasible<'py>(
    py: Python<'py>,
    points: Vec<Vec<f64>>,
    labels: Vec<i8>,
    delta: f64,
    p: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let norm = norm_of(p)?;
    let r = py
        .detach(|| classify::gap_feasible(&points, &labels, delta, norm))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("feasible", r.feasible)?;
    d.set_item("achieved_margin", r.achieved_margin)?;
    d.set_item("upper_bound", r.upper_bound)?;
    d.set_item("certified", r.certified)?;
    d.set_item("witness", r.witness.map(|inner| PyGapClassifier { inner }))?;
    Ok(d.into_any())
}

#[pyfunction]
#[pyo3(signature = (points, delta, p = 2.0, convention = "strict"))]
fn count_dichotomies(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    delta: f64,
    p: f64,
    convention: &str,
) -> PyResult<u64> {
    let (norm, conv) = (norm_of(p)?, self::convention(convention)?);
    py.detach(|| capacity::count_dichotomies_with(&points, delta, norm, conv))
        .map_err(err)
}

/// Monte-Carlo annealed entropy; returns a dict with `mean_lnN`, `ci_halfwidth`
/// and the per-trial counts.
#[pyfunction]
#[pyo3(signature = (ell, delta, trials = 200, *, model = "magnitude", n = 16, C = 1.0, alpha = 1.5, envelope = "exact", p = 2.0, convention = "strict", seed = 0, stream = 0))]
#[allow(non_snake_case, clippy::too_many_arguments)]
fn annealed_entropy<'py>(
    py: Python<'py>,
    ell: usize,
    delta: f64,
    trials: usize,
    model: &str,
    n: usize,
    C: f64,
    alpha: f64,
    envelope: &str,
    p: f64,
    convention: &str,
    seed: u64,
    stream: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let gen = generator(model, n, C, alpha, envelope)?;
    let (norm, conv) = (norm_of(p)?, self::convention(convention)?);
    let rng = RngStream::new(seed, stream);
    let est = py
        .detach(|| capacity::annealed_entropy_mc_with(&gen, ell, delta, norm, trials, &rng, conv))
        .map_err(err)?;
    to_py(py, &est)
}

/// Largest shattered set found by random search; returns `(m, witness)`.
#[pyfunction]
#[pyo3(signature = (dim, delta, *, radius = 1.0, p = 2.0, budget = 10_000, seed = 0))]
fn vc_search(
    py: Python<'_>,
    dim: usize,
    delta: f64,
    radius: f64,
    p: f64,
    budget: usize,
    seed: u64,
) -> PyResult<(usize, Vec<Vec<f64>>)> {
    let norm = norm_of(p)?;
    let r = py
        .detach(|| {
            capacity::vc_search(
                dim,
                radius,
                delta,
                norm,
                budget,
                &mut RngStream::new(seed, 0),
            )
        })
        .map_err(err)?;
    Ok((r.m, r.witness))
}

/// Diffusion map of a graph given as `(u, v)` or `(u, v, weight)` edges.
#[pyfunction]
#[pyo3(signature = (n, edges, k = 1, drop_top = false))]
fn diffusion_map(
    n: usize,
    edges: Vec<Vec<f64>>,
    k: u32,
    drop_top: bool,
) -> PyResult<PySpectralEmbedding> {
    let mut list = Vec::with_capacity(edges.len());
    for e in &edges {
        let (u, v, w) = match e.as_slice() {
            [u, v] => (*u, *v, 1.0),
            [u, v, w] => (*u, *v, *w),
            _ => return Err(PyValueError::new_err("edges are (u, v) or (u, v, weight)")),
        };
        if u < 0.0 || v < 0.0 || u.fract() != 0.0 || v.fract() != 0.0 {
            return Err(PyValueError::new_err(format!(
                "bad vertex index in edge {e:?}"
            )));
        }
        list.push((u as usize, v as usize, w));
    }
    let g = spectral::Graph::new(n, list).map_err(err)?;
    Ok(PySpectralEmbedding {
        inner: spectral::diffusion_map_with(&g, k, drop_top).map_err(err)?,
    })
}

/// Diffusion map of a seeded G(n, p) graph without isolated vertices.
#[pyfunction]
#[pyo3(signature = (n, edge_probability, k = 1, drop_top = false, seed = 0))]
fn random_graph_embedding(
    n: usize,
    edge_probability: f64,
    k: u32,
    drop_top: bool,
    seed: u64,
) -> PyResult<PySpectralEmbedding> {
    let g =
        spectral::erdos_renyi(n, edge_probability, &mut RngStream::new(seed, 0)).map_err(err)?;
    Ok(PySpectralEmbedding {
        inner: spectral::diffusion_map_with(&g, k, drop_top).map_err(err)?,
    })
}

/// Evaluates a named bound; returns its report as a dict.
#[pyfunction]
fn bound<'py>(
    py: Python<'py>,
    name: &str,
    params: BTreeMap<String, f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let r = bounds::report(name, &params).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn bound_names() -> Vec<&'static str> {
    bounds::BOUND_NAMES.to_vec()
}

#[pyfunction]
fn zeta(s: f64) -> PyResult<f64> {
    bounds::zeta(s).map_err(err)
}

/// Runs an experiment config (JSON text). With `out`, also writes the run
/// directory. Returns the summary as a dict.
#[pyfunction]
#[pyo3(signature = (config, out = None, workers = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    out: Option<PathBuf>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(config).map_err(err)?;
    let record = py.detach(|| harness::run(&cfg, workers)).map_err(err)?;
    let summary = to_py(py, &record)?;
    if let Some(root) = out {
        let dir = harness::write_run(&cfg, &record, &root).map_err(err)?;
        summary.set_item("directory", dir.display().to_string())?;
    }
    Ok(summary)
}

/// Runs the acceptance suite; returns the per-criterion summary.
#[pyfunction]
#[pyo3(signature = (seed = acceptance::DEFAULT_SEED))]
fn verify<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let s = py.detach(|| acceptance::verify_all(seed, &acceptance::VerifyOptions::default()));
    to_py(py, &s)
}

#[pymodule]
fn gapent(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGapClassifier>()?;
    m.add_class::<PyLabeledDataset>()?;
    m.add_class::<PySpectralEmbedding>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_risk, m)?)?;
    m.add_function(wrap_pyfunction!(gap_feasible, m)?)?;
    m.add_function(wrap_pyfunction!(count_dichotomies, m)?)?;
    m.add_function(wrap_pyfunction!(annealed_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(vc_search, m)?)?;
    m.add_function(wrap_pyfunction!(diffusion_map, m)?)?;
    m.add_function(wrap_pyfunction!(random_graph_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(bound, m)?)?;
    m.add_function(wrap_pyfunction!(bound_names, m)?)?;
    m.add_function(wrap_pyfunction!(zeta, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
