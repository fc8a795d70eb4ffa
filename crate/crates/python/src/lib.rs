//! Python bindings: graph loading, statistics, the two experiments and the
//! synthetic generator.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use donmine_core::embed::{
    relations_from_metapath, train_hin2vec, train_metapath2vec, Hin2vecParams, SgnsParams,
};
use donmine_core::graph::{load_graph_dir, snapshot_split};
use donmine_core::stats::{
    distribution_curve, spearman_rcc as core_srcc, tail_slope as core_tail, CurveMode,
};
use donmine_core::tasks::{
    list_metrics, run_prediction as core_prediction, run_recommendation as core_recommendation,
    ApMode, FeatureGroup, Method, PredictionParams, RankedList, RecParams,
};
use donmine_core::walks::{generate_walks as core_walks, parse_metapath};
use donmine_core::{EdgeKind, ErrorClass, HinGraph, NodeId, NodeKind};

create_exception!(donmine, DonmineError, PyException);
create_exception!(donmine, UsageError, DonmineError);
create_exception!(donmine, DataError, DonmineError);
create_exception!(donmine, TaskError, DonmineError);

fn py_err(e: donmine_core::Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Usage => UsageError::new_err(msg),
        ErrorClass::Data => DataError::new_err(msg),
        ErrorClass::Task => TaskError::new_err(msg),
    }
}

fn config<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(text) => {
            serde_json::from_str(text).map_err(|e| UsageError::new_err(format!("config: {e}")))
        }
    }
}

/// A typed user/video graph loaded from `nodes.csv` and `edges.csv`.
#[pyclass(frozen)]
struct Graph {
    inner: HinGraph,
}

impl Graph {
    fn id(&self, external: &str, kind: NodeKind) -> PyResult<NodeId> {
        self.inner
            .find(external, kind)
            .ok_or_else(|| DataError::new_err(format!("no {kind} `{external}`")))
    }

    fn name(&self, id: NodeId) -> String {
        self.inner.node(id).external_id.clone()
    }
}

#[pymethods]
impl Graph {
    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_graph_dir(dir).map_err(py_err)?,
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn users(&self) -> Vec<String> {
        self.inner
            .nodes_of_kind(NodeKind::User)
            .iter()
            .map(|&n| self.name(n))
            .collect()
    }

    fn videos(&self) -> Vec<String> {
        self.inner
            .nodes_of_kind(NodeKind::Video)
            .iter()
            .map(|&n| self.name(n))
            .collect()
    }

    /// Edge count of `"Follow"` or `"Donate"`.
    fn edge_count(&self, kind: &str) -> PyResult<usize> {
        let kind = match kind {
            "Follow" => EdgeKind::Follow,
            "Donate" => EdgeKind::Donate,
            other => return Err(UsageError::new_err(format!("unknown edge kind `{other}`"))),
        };
        Ok(self.inner.edge_count(kind))
    }

    fn followers(&self, user: &str) -> PyResult<usize> {
        Ok(self
            .inner
            .in_degree(self.id(user, NodeKind::User)?, EdgeKind::Follow))
    }

    fn video_attribute(&self, video: &str, attr: &str) -> PyResult<Option<u64>> {
        let v = self.id(video, NodeKind::Video)?;
        Ok(self.inner.node(v).attrs.get(attr).copied())
    }

    /// Users within `k` undirected hops of `video`.
    #[pyo3(signature = (video, k=2, exclude_existing_donors=true))]
    fn k_hop_candidates(
        &self,
        video: &str,
        k: usize,
        exclude_existing_donors: bool,
    ) -> PyResult<Vec<String>> {
        let v = self.id(video, NodeKind::Video)?;
        let c = self
            .inner
            .k_hop_candidates(v, k, exclude_existing_donors)
            .map_err(py_err)?;
        Ok(c.into_iter().map(|n| self.name(n)).collect())
    }

    /// Meta-path walks as lists of external ids.
    #[pyo3(signature = (metapath, walks_per_node, walk_length, seed))]
    fn walks(
        &self,
        metapath: &str,
        walks_per_node: usize,
        walk_length: usize,
        seed: u64,
    ) -> PyResult<Vec<Vec<String>>> {
        let mp = parse_metapath(metapath).map_err(py_err)?;
        let corpus =
            core_walks(&self.inner, &mp, walks_per_node, walk_length, seed).map_err(py_err)?;
        Ok(corpus
            .walks
            .iter()
            .map(|w| w.iter().map(|&n| self.name(n)).collect())
            .collect())
    }

    /// Node vectors keyed by external id. `method` is `metapath2vec` or
    /// `hin2vec`; `config` is the trainer parameters as JSON.
    #[pyo3(signature = (method, seed, metapath="U-U-V-U-U", walks_per_node=10, walk_length=80, config=None))]
    fn embed(
        &self,
        method: &str,
        seed: u64,
        metapath: &str,
        walks_per_node: usize,
        walk_length: usize,
        config: Option<&str>,
    ) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let g = &self.inner;
        let mp = parse_metapath(metapath).map_err(py_err)?;
        let corpus = core_walks(g, &mp, walks_per_node, walk_length, seed).map_err(py_err)?;
        let emb = match method {
            "metapath2vec" => {
                let p: SgnsParams = self::config(config)?;
                train_metapath2vec(g, &corpus, &p, seed).map_err(py_err)?.0
            }
            "hin2vec" => {
                let p: Hin2vecParams = self::config(config)?;
                let rels = relations_from_metapath(&mp, p.window).map_err(py_err)?;
                train_hin2vec(g, &rels, &corpus, &p, seed)
                    .map_err(py_err)?
                    .0
            }
            other => {
                return Err(UsageError::new_err(format!(
                    "unknown embedding method `{other}`"
                )))
            }
        };
        Ok((0..g.node_count())
            .map(|i| (self.name(NodeId(i as u32)), emb.vector(i).to_vec()))
            .collect())
    }

    /// AUC per feature group of the video-level prediction experiment.
    #[pyo3(signature = (cutoff, horizon, seed, config=None))]
    fn run_prediction(
        &self,
        cutoff: i64,
        horizon: u32,
        seed: u64,
        config: Option<&str>,
    ) -> PyResult<BTreeMap<String, f64>> {
        let p: PredictionParams = self::config(config)?;
        let (s, w) = snapshot_split(&self.inner, cutoff, horizon).map_err(py_err)?;
        let r = core_prediction(&s, &w, &FeatureGroup::ALL, &p, seed).map_err(py_err)?;
        Ok(r.groups
            .iter()
            .map(|g| (g.group.to_string(), g.auc))
            .collect())
    }

    /// Recommendation experiment. `scores` maps each method to its
    /// `recall@k` and `map@k` values; `errors` maps failed methods to their
    /// messages.
    #[pyo3(signature = (cutoff, horizon, seed, methods=None, config=None))]
    fn run_recommendation(
        &self,
        py: Python<'_>,
        cutoff: i64,
        horizon: u32,
        seed: u64,
        methods: Option<Vec<String>>,
        config: Option<&str>,
    ) -> PyResult<Py<PyAny>> {
        let p: RecParams = self::config(config)?;
        let methods: Vec<Method> = match methods {
            None => Method::ALL.to_vec(),
            Some(m) => m
                .iter()
                .map(|s| s.parse().map_err(py_err))
                .collect::<PyResult<_>>()?,
        };
        let (s, w) = snapshot_split(&self.inner, cutoff, horizon).map_err(py_err)?;
        let run = py
            .detach(|| core_recommendation(&s, &w, &methods, &p, seed))
            .map_err(py_err)?;
        let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        let mut errors: BTreeMap<String, String> = BTreeMap::new();
        for row in &run.report.rows {
            if let Some(e) = &row.error {
                errors.insert(row.method.clone(), e.clone());
                continue;
            }
            let entry = scores.entry(row.method.clone()).or_default();
            for (i, k) in run.report.ks.iter().enumerate() {
                entry.insert(format!("recall@{k}"), row.recall[i]);
                entry.insert(format!("map@{k}"), row.map[i]);
            }
        }
        let out = pyo3::types::PyDict::new(py);
        out.set_item("scores", scores)?;
        out.set_item("errors", errors)?;
        out.set_item("queries", run.queries)?;
        out.set_item("expected_random_recall", run.expected_random_recall)?;
        Ok(out.into_any().unbind())
    }
}

/// Spearman rank correlation with average ranks for ties.
#[pyfunction]
fn spearman_rcc(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    core_srcc(&x, &y).map_err(py_err)
}

/// ROC AUC with ties counted as half.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    donmine_core::forest::auc(&scores, &labels).map_err(py_err)
}

/// Empirical CDF or CCDF as `(value, fraction)` points.
#[pyfunction]
#[pyo3(signature = (values, mode="cdf"))]
fn distribution(values: Vec<f64>, mode: &str) -> PyResult<Vec<(f64, f64)>> {
    let mode = match mode {
        "cdf" => CurveMode::Cdf,
        "ccdf" => CurveMode::Ccdf,
        other => return Err(UsageError::new_err(format!("unknown curve mode `{other}`"))),
    };
    Ok(distribution_curve(&values, mode).map_err(py_err)?.points)
}

/// Log-log least-squares slope of the CCDF of `values` above `xmin`.
#[pyfunction]
#[pyo3(signature = (values, xmin=10.0))]
fn tail_slope(values: Vec<f64>, xmin: f64) -> PyResult<f64> {
    let c = distribution_curve(&values, CurveMode::Ccdf).map_err(py_err)?;
    core_tail(&c, xmin).map_err(py_err)
}

/// `(average precision, recall)` of one ranking cut at `k`.
#[pyfunction]
#[pyo3(signature = (ranked, truth, k, mode="standard"))]
fn ranking_metrics(
    ranked: Vec<String>,
    truth: Vec<String>,
    k: usize,
    mode: &str,
) -> PyResult<(f64, f64)> {
    let mode: ApMode = mode.parse().map_err(py_err)?;
    if k == 0 || truth.is_empty() {
        return Err(UsageError::new_err("k must be positive and truth nonempty"));
    }
    let mut ids: BTreeMap<String, u32> = BTreeMap::new();
    let mut id = |s: &String| {
        let next = ids.len() as u32;
        NodeId(*ids.entry(s.clone()).or_insert(next))
    };
    let ranked: Vec<(NodeId, f64)> = ranked.iter().map(|s| (id(s), 0.0)).collect();
    let truth: Vec<NodeId> = truth.iter().map(&mut id).collect();
    let list = RankedList {
        video: NodeId(u32::MAX),
        n_candidates: ranked.len(),
        ranked,
        truth,
        truth_outside: 0,
    };
    Ok(list_metrics(&list, k, mode))
}

/// Generates a synthetic dataset into `out_dir`; returns event counts.
#[pyfunction]
#[pyo3(signature = (out_dir, seed, config=None))]
fn synth(out_dir: &str, seed: u64, config: Option<&str>) -> PyResult<BTreeMap<String, usize>> {
    let mut c: donmine_core::synth::SynthConfig = self::config(config)?;
    c.seed = seed;
    let data = donmine_core::synth::generate(&c).map_err(py_err)?;
    data.write_dir(out_dir).map_err(py_err)?;
    let m = &data.manifest;
    Ok(BTreeMap::from([
        ("follow_edges".to_owned(), m.follow_edges),
        ("snapshot_events".to_owned(), m.snapshot_events),
        ("window_events".to_owned(), m.window_events),
        ("contagion_events".to_owned(), m.contagion_events),
    ]))
}

#[pymodule]
fn donmine(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("DonmineError", py.get_type::<DonmineError>())?;
    m.add("UsageError", py.get_type::<UsageError>())?;
    m.add("DataError", py.get_type::<DataError>())?;
    m.add("TaskError", py.get_type::<TaskError>())?;
    m.add_class::<Graph>()?;
    m.add_function(wrap_pyfunction!(spearman_rcc, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(distribution, m)?)?;
    m.add_function(wrap_pyfunction!(tail_slope, m)?)?;
    m.add_function(wrap_pyfunction!(ranking_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
