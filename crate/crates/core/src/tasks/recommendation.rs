use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    rank_candidates, rank_metrics, validate_ks, ApMode, EvalReport, MethodRow, RankedList,
};
use crate::embed::{
    edge_feature, relations_from_metapath, train_hin2vec, train_metapath2vec, EdgeOp, EmbeddingSet,
    Hin2vecParams, SgnsParams,
};
use crate::error::{argument, Error, Result};
use crate::forest::{train_forest, FeatureTable, ForestModel, ForestParams};
use crate::graph::{EdgeKind, HinGraph, LabelWindow, NodeId, NodeKind};
use crate::mf::{build_interaction_matrix, mf_score, train_cmf, train_pmf, Factors, MfParams};
use crate::rng::{self, Rng};
use crate::walks::{generate_walks, parse_metapath, WalkCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pmf,
    Cmf,
    Metapath2vec,
    Hin2vec,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Self::Pmf,
        Self::Cmf,
        Self::Metapath2vec,
        Self::Hin2vec,
        Self::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pmf => "pmf",
            Self::Cmf => "cmf",
            Self::Metapath2vec => "metapath2vec",
            Self::Hin2vec => "hin2vec",
            Self::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                argument(format!(
                    "unknown method `{s}` (expected pmf, cmf, metapath2vec, hin2vec or random)"
                ))
            })
    }
}

/// How negative user-video pairs are drawn for the pair classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSampling {
    /// Uniform user and uniform video.
    #[default]
    UniformPair,
    /// The positive's video with a uniform user.
    SameVideo,
    /// The positive's video with a user from its candidate set.
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecParams {
    pub ks: Vec<usize>,
    pub hops: usize,
    pub metapath: String,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub sgns: SgnsParams,
    pub hin2vec: Hin2vecParams,
    pub mf: MfParams,
    pub forest: ForestParams,
    pub neg_per_pos: usize,
    pub negatives: NegativeSampling,
    /// Query videos are split into this many folds; the pair classifier
    /// scoring a fold never sees that fold's window donations.
    pub folds: usize,
    pub ap_mode: ApMode,
}

impl Default for RecParams {
    fn default() -> Self {
        Self {
            ks: vec![5, 20, 50, 100],
            hops: 2,
            metapath: "U-U-V-U-U".into(),
            walks_per_node: 10,
            walk_length: 40,
            sgns: SgnsParams {
                dim: 16,
                epochs: 3,
                ..SgnsParams::default()
            },
            hin2vec: Hin2vecParams {
                dim: 16,
                epochs: 3,
                ..Hin2vecParams::default()
            },
            mf: MfParams::default(),
            forest: ForestParams {
                n_trees: 100,
                ..ForestParams::default()
            },
            neg_per_pos: 1,
            negatives: NegativeSampling::default(),
            folds: 2,
            ap_mode: ApMode::Standard,
        }
    }
}

/// One query video with its candidate users and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub video: NodeId,
    pub candidates: Vec<NodeId>,
    pub truth: Vec<NodeId>,
    pub truth_outside: usize,
}

/// Every window-active video with its `hops`-hop candidates (existing
/// donors excluded). Truth is the set of window donors inside the
/// candidate set.
pub fn build_queries(snapshot: &HinGraph, window: &LabelWindow, hops: usize) -> Result<Vec<Query>> {
    let mut donors: HashMap<NodeId, BTreeSet<NodeId>> = HashMap::new();
    for e in &window.events {
        donors.entry(e.dst).or_default().insert(e.src);
    }
    window
        .counts
        .keys()
        .map(|&video| {
            let candidates = snapshot.k_hop_candidates(video, hops, true)?;
            let (mut truth, mut outside) = (Vec::new(), 0);
            for &u in &donors[&video] {
                if candidates.binary_search(&u).is_ok() {
                    truth.push(u);
                } else {
                    outside += 1;
                }
            }
            Ok(Query {
                video,
                candidates,
                truth,
                truth_outside: outside,
            })
        })
        .collect()
}

fn pair_key(u: NodeId, v: NodeId) -> u64 {
    (u64::from(u.0) << 32) | u64::from(v.0)
}

/// Donation pairs of the snapshot and the window, which negatives avoid.
fn known_pairs(snapshot: &HinGraph, window: &LabelWindow) -> HashSet<u64> {
    snapshot
        .edges()
        .iter()
        .chain(&window.events)
        .filter(|e| e.kind == EdgeKind::Donate)
        .map(|e| pair_key(e.src, e.dst))
        .collect()
}

fn distinct_pairs(window: &LabelWindow, keep: impl Fn(NodeId) -> bool) -> Vec<(NodeId, NodeId)> {
    let set: BTreeSet<(NodeId, NodeId)> = window
        .events
        .iter()
        .filter(|e| keep(e.dst))
        .map(|e| (e.src, e.dst))
        .collect();
    set.into_iter().collect()
}

fn hadamard_row(emb: &EmbeddingSet, u: NodeId, v: NodeId) -> Vec<f64> {
    edge_feature(
        emb.vector(u.index()),
        emb.vector(v.index()),
        EdgeOp::Hadamard,
    )
    .expect("equal dimensions")
}

fn embedding_columns(dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("h{k}")).collect()
}

struct PairSampler<'a> {
    g: &'a HinGraph,
    known: &'a HashSet<u64>,
    sampling: NegativeSampling,
    hops: usize,
    candidates: HashMap<NodeId, Vec<NodeId>>,
}

impl PairSampler<'_> {
    fn negative(&mut self, v: NodeId, rng: &mut Rng) -> Result<Option<(NodeId, NodeId)>> {
        let users = self.g.nodes_of_kind(NodeKind::User);
        let videos = self.g.nodes_of_kind(NodeKind::Video);
        if self.sampling == NegativeSampling::Candidate && !self.candidates.contains_key(&v) {
            let c = self.g.k_hop_candidates(v, self.hops, true)?;
            self.candidates.insert(v, c);
        }
        for attempt in 0..1000 {
            let (u, v) = match self.sampling {
                NegativeSampling::UniformPair => (
                    users[rng.random_range(0..users.len())],
                    videos[rng.random_range(0..videos.len())],
                ),
                NegativeSampling::SameVideo => (users[rng.random_range(0..users.len())], v),
                NegativeSampling::Candidate => {
                    let c = &self.candidates[&v];
                    if c.is_empty() || attempt >= 100 {
                        (users[rng.random_range(0..users.len())], v)
                    } else {
                        (c[rng.random_range(0..c.len())], v)
                    }
                }
            };
            if !self.known.contains(&pair_key(u, v)) {
                return Ok(Some((u, v)));
            }
        }
        Ok(None)
    }
}

#[allow(clippy::too_many_arguments)]
fn pair_table(
    g: &HinGraph,
    positives: &[(NodeId, NodeId)],
    known: &HashSet<u64>,
    emb: &EmbeddingSet,
    neg_per_pos: usize,
    sampling: NegativeSampling,
    hops: usize,
    seed: u64,
) -> Result<FeatureTable> {
    let mut rng = rng::stream(seed, &[0x9a]);
    let mut sampler = PairSampler {
        g,
        known,
        sampling,
        hops,
        candidates: HashMap::new(),
    };
    let (mut ids, mut data, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    let mut push = |u: NodeId, v: NodeId, label: bool| {
        ids.push(format!(
            "{}|{}",
            g.node(u).external_id,
            g.node(v).external_id
        ));
        data.extend(hadamard_row(emb, u, v));
        labels.push(label);
    };
    for &(u, v) in positives {
        push(u, v, true);
        for _ in 0..neg_per_pos {
            if let Some((nu, nv)) = sampler.negative(v, &mut rng)? {
                push(nu, nv, false);
            }
        }
    }
    FeatureTable::new(embedding_columns(emb.dim), ids, data, Some(labels))
}

/// Pair classification data: every distinct window donation pair is a
/// positive, followed by `neg_per_pos` uniformly drawn user-video pairs
/// with no donation in the snapshot or the window. Features are the
/// Hadamard product of the two node vectors.
pub fn build_pair_dataset(
    snapshot: &HinGraph,
    window: &LabelWindow,
    emb: &EmbeddingSet,
    neg_per_pos: usize,
    seed: u64,
) -> Result<FeatureTable> {
    if window.is_empty() {
        return Err(Error::Task(
            "the label window has no donation events".into(),
        ));
    }
    if neg_per_pos == 0 {
        return Err(argument("neg_per_pos must be positive"));
    }
    let known = known_pairs(snapshot, window);
    let positives = distinct_pairs(window, |_| true);
    pair_table(
        snapshot,
        &positives,
        &known,
        emb,
        neg_per_pos,
        NegativeSampling::UniformPair,
        2,
        seed,
    )
}

fn model_score(model: &ForestModel, x: &[f64]) -> f64 {
    model.trees.iter().map(|t| t.predict(x)).sum::<f64>() / model.trees.len() as f64
}

/// Output of [`run_recommendation`].
#[derive(Debug, Clone, Serialize)]
pub struct RecommendationRun {
    pub report: EvalReport,
    /// Ranked lists per method, truncated to the deepest cutoff.
    #[serde(skip)]
    pub lists: Vec<(Method, Vec<RankedList>)>,
    pub params: RecParams,
    pub seed: u64,
    pub queries: usize,
    pub skipped_empty_truth: usize,
    pub truth_outside_candidates: usize,
    pub mean_candidates: f64,
    /// Recall@k of a uniformly random ranking, in expectation.
    pub expected_random_recall: Vec<f64>,
}

/// Shared inputs of the per-method rankers.
struct Context<'a> {
    snapshot: &'a HinGraph,
    window: &'a LabelWindow,
    queries: &'a [Query],
    params: &'a RecParams,
    seed: u64,
    keep: usize,
}

impl Context<'_> {
    fn rank_with(&self, scorer: impl Fn(&Query, NodeId) -> f64 + Sync) -> Vec<RankedList> {
        self.queries
            .par_iter()
            .map(|q| {
                self.finish(
                    q,
                    rank_candidates(|u| scorer(q, u), q.video, &q.candidates, Some(self.keep)),
                )
            })
            .collect()
    }

    fn finish(&self, q: &Query, mut list: RankedList) -> RankedList {
        list.truth = q.truth.clone();
        list.truth_outside = q.truth_outside;
        list
    }

    fn rank_factors(&self, f: &Factors) -> Vec<RankedList> {
        let g = self.snapshot;
        self.rank_with(|q, u| mf_score(f, g.ordinal(u), g.ordinal(q.video)).expect("in range"))
    }

    fn rank_random(&self) -> Vec<RankedList> {
        self.queries
            .iter()
            .map(|q| {
                let mut rng = rng::stream(self.seed, &[0x7a, u64::from(q.video.0)]);
                let scores: HashMap<NodeId, f64> = q
                    .candidates
                    .iter()
                    .map(|&u| (u, rng.random::<f64>()))
                    .collect();
                self.finish(
                    q,
                    rank_candidates(|u| scores[&u], q.video, &q.candidates, Some(self.keep)),
                )
            })
            .collect()
    }

    /// Cross-fitted pair classifier over an embedding.
    fn rank_embedding(&self, emb: &EmbeddingSet, method: Method) -> Result<Vec<RankedList>> {
        let p = self.params;
        let folds = p.folds.max(1);
        let mut videos: Vec<NodeId> = self.queries.iter().map(|q| q.video).collect();
        videos.shuffle(&mut rng::stream(self.seed, &[0xf0]));
        let fold_of: HashMap<NodeId, usize> = videos
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i % folds))
            .collect();
        let known = known_pairs(self.snapshot, self.window);
        let mut out: Vec<Option<RankedList>> = vec![None; self.queries.len()];
        for f in 0..folds {
            let held_out = |v: NodeId| folds > 1 && fold_of.get(&v) == Some(&f);
            let positives = distinct_pairs(self.window, |v| !held_out(v));
            let seed = rng::derive(self.seed, &[method as u64, f as u64]);
            let table = pair_table(
                self.snapshot,
                &positives,
                &known,
                emb,
                p.neg_per_pos,
                p.negatives,
                p.hops,
                seed,
            )?;
            let model = train_forest(&table, &p.forest, seed)?;
            let lists: Vec<(usize, RankedList)> = self
                .queries
                .par_iter()
                .enumerate()
                .filter(|(_, q)| folds == 1 || held_out(q.video))
                .map(|(i, q)| {
                    let list = rank_candidates(
                        |u| model_score(&model, &hadamard_row(emb, u, q.video)),
                        q.video,
                        &q.candidates,
                        Some(self.keep),
                    );
                    (i, self.finish(q, list))
                })
                .collect();
            for (i, l) in lists {
                out[i] = Some(l);
            }
        }
        Ok(out
            .into_iter()
            .map(|l| l.expect("every query in one fold"))
            .collect())
    }
}

/// Trains each method on the snapshot and ranks the candidates of every
/// window-active video. A method that fails is reported with its error and
/// the others proceed.
pub fn run_recommendation(
    snapshot: &HinGraph,
    window: &LabelWindow,
    methods: &[Method],
    params: &RecParams,
    seed: u64,
) -> Result<RecommendationRun> {
    validate_ks(&params.ks)?;
    if methods.is_empty() {
        return Err(argument("no methods requested"));
    }
    if window.is_empty() {
        return Err(Error::Task(
            "the label window has no donation events".into(),
        ));
    }
    if params.hops == 0 {
        return Err(argument("hops must be positive"));
    }
    let all = build_queries(snapshot, window, params.hops)?;
    let truth_outside = all.iter().map(|q| q.truth_outside).sum();
    let (queries, empty): (Vec<Query>, Vec<Query>) =
        all.into_iter().partition(|q| !q.truth.is_empty());
    if queries.is_empty() {
        return Err(Error::Task(
            "no window donor is inside any candidate set".into(),
        ));
    }
    let keep = *params.ks.iter().max().expect("nonempty");
    let ctx = Context {
        snapshot,
        window,
        queries: &queries,
        params,
        seed,
        keep,
    };

    let needs_walks = methods
        .iter()
        .any(|m| matches!(m, Method::Metapath2vec | Method::Hin2vec));
    let corpus: Option<Result<WalkCorpus>> = needs_walks.then(|| {
        let mp = parse_metapath(&params.metapath)?;
        generate_walks(
            snapshot,
            &mp,
            params.walks_per_node,
            params.walk_length,
            rng::derive(seed, &[0xa1]),
        )
    });

    let mut rows = Vec::new();
    let mut lists = Vec::new();
    for &method in methods {
        let method_seed = rng::derive(seed, &[0xb0, method as u64]);
        let ranked: Result<Vec<RankedList>> = (|| match method {
            Method::Random => Ok(ctx.rank_random()),
            Method::Pmf => {
                let m = build_interaction_matrix(snapshot, EdgeKind::Donate);
                let (f, _) = train_pmf(&m, &params.mf, method_seed)?;
                Ok(ctx.rank_factors(&f))
            }
            Method::Cmf => {
                let uv = build_interaction_matrix(snapshot, EdgeKind::Donate);
                let uu = build_interaction_matrix(snapshot, EdgeKind::Follow);
                let (f, _) = train_cmf(&uv, &uu, &params.mf, method_seed)?;
                Ok(ctx.rank_factors(&f))
            }
            Method::Metapath2vec => {
                let corpus = corpus
                    .as_ref()
                    .expect("walks generated")
                    .as_ref()
                    .map_err(clone_err)?;
                let (emb, _) = train_metapath2vec(snapshot, corpus, &params.sgns, method_seed)?;
                ctx.rank_embedding(&emb, method)
            }
            Method::Hin2vec => {
                let corpus = corpus
                    .as_ref()
                    .expect("walks generated")
                    .as_ref()
                    .map_err(clone_err)?;
                let rels = relations_from_metapath(&corpus.metapath, params.hin2vec.window)?;
                let (emb, _, _) =
                    train_hin2vec(snapshot, &rels, corpus, &params.hin2vec, method_seed)?;
                ctx.rank_embedding(&emb, method)
            }
        })();
        match ranked {
            Ok(l) => {
                let mut row = rank_metrics(method.as_str(), &l, &params.ks, params.ap_mode)?;
                row.skipped += empty.len();
                rows.push(row);
                lists.push((method, l));
            }
            Err(e) => rows.push(MethodRow::failed(method.as_str(), e)),
        }
    }

    let expected_random_recall = params
        .ks
        .iter()
        .map(|&k| {
            queries
                .iter()
                .map(|q| k.min(q.candidates.len()) as f64 / q.candidates.len() as f64)
                .sum::<f64>()
                / queries.len() as f64
        })
        .collect();
    let mean_candidates =
        queries.iter().map(|q| q.candidates.len()).sum::<usize>() as f64 / queries.len() as f64;
    Ok(RecommendationRun {
        report: EvalReport {
            ks: params.ks.clone(),
            ap_mode: params.ap_mode,
            rows,
        },
        lists,
        params: params.clone(),
        seed,
        queries: queries.len(),
        skipped_empty_truth: empty.len(),
        truth_outside_candidates: truth_outside,
        mean_candidates,
        expected_random_recall,
    })
}

fn clone_err(e: &Error) -> Error {
    Error::Task(format!("walk generation failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{snapshot_split, Edge, NodeTable};
    use std::collections::BTreeMap;

    /// u0 donated to v0 before the cutoff; u1 follows u0 and donates in the
    /// window; u2 donates in the window without a social tie.
    fn toy() -> (HinGraph, LabelWindow) {
        let mut t = NodeTable::new();
        for u in ["u0", "u1", "u2"] {
            t.push(u, NodeKind::User, BTreeMap::new()).unwrap();
        }
        t.push("v0", NodeKind::Video, BTreeMap::new()).unwrap();
        let e = |s, d, kind, ts| Edge {
            src: NodeId(s),
            dst: NodeId(d),
            kind,
            weight: 1.0,
            timestamp: ts,
        };
        let g = HinGraph::build(
            t,
            vec![
                e(1, 0, EdgeKind::Follow, 0),
                e(2, 1, EdgeKind::Follow, 0),
                e(0, 3, EdgeKind::Donate, 5),
                e(1, 3, EdgeKind::Donate, 12),
                e(2, 3, EdgeKind::Donate, 13),
            ],
        )
        .unwrap();
        snapshot_split(&g, 10, 7).unwrap()
    }

    #[test]
    fn queries_split_truth() {
        let (s, w) = toy();
        let q = build_queries(&s, &w, 2).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].candidates, vec![NodeId(1)]);
        assert_eq!(q[0].truth, vec![NodeId(1)]);
        assert_eq!(q[0].truth_outside, 1);
    }

    #[test]
    fn pair_dataset_shape() {
        let (s, w) = toy();
        let emb = EmbeddingSet {
            dim: 3,
            center: (0..12).map(f64::from).collect(),
            context: vec![0.0; 12],
            trained_epochs: 0,
        };
        let t = build_pair_dataset(&s, &w, &emb, 1, 4).unwrap();
        // two positives, and every user-video pair is known, so no negative
        // can be drawn
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.n_cols(), 3);
        assert!(t.labels().unwrap().iter().all(|&l| l));
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("svd".parse::<Method>().is_err());
    }
}
