use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng as _;

use super::sampler::{corpus_counts, KindSampler};
use super::{neg_log_sigmoid, read_vectors, sigmoid, write_vectors, EmbeddingSet, TrainLog};
use crate::error::{argument, Result};
use crate::graph::{HinGraph, NodeKind};
use crate::rng;
use crate::walks::{parse_metapath, MetaPath, WalkCorpus};

/// Hop limit of the relations extracted from a walk.
pub const DEFAULT_HIN2VEC_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Hin2vecParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for Hin2vecParams {
    fn default() -> Self {
        Self {
            dim: 128,
            window: DEFAULT_HIN2VEC_WINDOW,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
        }
    }
}

/// One vector per registered relation, aligned with `relations`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaPathEmbeddings {
    pub dim: usize,
    pub relations: Vec<MetaPath>,
    pub vectors: Vec<f64>,
}

impl MetaPathEmbeddings {
    pub fn vector(&self, index: usize) -> &[f64] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn position(&self, mp: &MetaPath) -> Option<usize> {
        self.relations.iter().position(|r| r == mp)
    }

    pub fn write<W: Write>(&self, w: W) -> std::io::Result<()> {
        let names: Vec<String> = self.relations.iter().map(ToString::to_string).collect();
        write_vectors(
            w,
            self.dim,
            names.iter().map(String::as_str),
            self.vectors.chunks(self.dim),
        )
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let (dim, rows) = read_vectors(reader)?;
        let mut relations = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for (name, v) in rows {
            relations.push(parse_metapath(&name)?);
            vectors.extend(v);
        }
        Ok(Self {
            dim,
            relations,
            vectors,
        })
    }
}

/// Every distinct sub-path of `mp` (tiled when it tiles) with 1 to
/// `max_hops` hops, shortest first.
pub fn relations_from_metapath(mp: &MetaPath, max_hops: usize) -> Result<Vec<MetaPath>> {
    if max_hops == 0 {
        return Err(argument("max_hops must be positive"));
    }
    let starts = if mp.tiles() {
        mp.hops()
    } else {
        mp.kinds().len()
    };
    let mut out: Vec<MetaPath> = Vec::new();
    for hops in 1..=max_hops {
        for s in 0..starts {
            let kinds: Option<Vec<NodeKind>> = (s..=s + hops).map(|i| mp.kind_at(i)).collect();
            let Some(kinds) = kinds else { continue };
            let rel = MetaPath::new(kinds)?;
            if !out.contains(&rel) {
                out.push(rel);
            }
        }
    }
    Ok(out)
}

fn kind_code(kinds: impl Iterator<Item = NodeKind>) -> u64 {
    kinds.fold(1u64, |acc, k| (acc << 1) | k as u64)
}

/// Scratch buffers for one update.
struct Scratch {
    x: Vec<f64>,
    y: Vec<f64>,
    fr: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            x: vec![0.0; dim],
            y: vec![0.0; dim],
            fr: vec![0.0; dim],
        }
    }
}

/// One logistic SGD step on `(x, y, r, label)`. All gradients use the
/// pre-step values. Returns the pre-step loss.
#[allow(clippy::too_many_arguments)]
fn hin2vec_step(
    nodes: &mut [f64],
    rels: &mut [f64],
    dim: usize,
    x: usize,
    y: usize,
    r: usize,
    label: f64,
    lr: f64,
    s: &mut Scratch,
) -> f64 {
    s.x.copy_from_slice(&nodes[x * dim..(x + 1) * dim]);
    s.y.copy_from_slice(&nodes[y * dim..(y + 1) * dim]);
    let wr = &mut rels[r * dim..(r + 1) * dim];
    for (f, &w) in s.fr.iter_mut().zip(wr.iter()) {
        *f = sigmoid(w);
    }
    let score: f64 = (0..dim).map(|k| s.x[k] * s.y[k] * s.fr[k]).sum();
    let loss = if label > 0.5 {
        neg_log_sigmoid(score)
    } else {
        neg_log_sigmoid(-score)
    };
    let g = lr * (label - sigmoid(score));
    for (k, w) in wr.iter_mut().enumerate() {
        *w += g * s.x[k] * s.y[k] * s.fr[k] * (1.0 - s.fr[k]);
    }
    for k in 0..dim {
        nodes[x * dim + k] += g * s.y[k] * s.fr[k];
    }
    for k in 0..dim {
        nodes[y * dim + k] += g * s.x[k] * s.fr[k];
    }
    loss
}

/// Logistic loss of one HIN2vec sample with score
/// `sum_k x[k] y[k] sigmoid(r[k])`.
pub fn hin2vec_loss(x: &[f64], y: &[f64], r: &[f64], label: bool) -> f64 {
    let score: f64 = (0..x.len()).map(|k| x[k] * y[k] * sigmoid(r[k])).sum();
    if label {
        neg_log_sigmoid(score)
    } else {
        neg_log_sigmoid(-score)
    }
}

/// Gradients of [`hin2vec_loss`] for `x`, `y` and `r`, taken from one
/// unit-rate training step.
pub fn hin2vec_gradient(
    x: &[f64],
    y: &[f64],
    r: &[f64],
    label: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dim = x.len();
    let mut nodes: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut rels = r.to_vec();
    let mut s = Scratch::new(dim);
    let l = if label { 1.0 } else { 0.0 };
    hin2vec_step(&mut nodes, &mut rels, dim, 0, 1, 0, l, 1.0, &mut s);
    let gx = x.iter().zip(&nodes[..dim]).map(|(a, b)| a - b).collect();
    let gy = y.iter().zip(&nodes[dim..]).map(|(a, b)| a - b).collect();
    let gr = r.iter().zip(&rels).map(|(a, b)| a - b).collect();
    (gx, gy, gr)
}

/// Joint training of node and relation vectors.
///
/// Each walk yields samples `(walk[i], walk[j], r)` for `0 < j - i <=
/// window`, where `r` is the kind sequence between the two positions. A
/// sample whose relation is not in `relations` is skipped. Every positive is
/// followed by `negatives` samples that replace `walk[j]` with a node of the
/// same kind drawn from the unigram^0.75 distribution.
pub fn train_hin2vec(
    g: &HinGraph,
    relations: &[MetaPath],
    corpus: &WalkCorpus,
    params: &Hin2vecParams,
    seed: u64,
) -> Result<(EmbeddingSet, MetaPathEmbeddings, TrainLog)> {
    if relations.is_empty() {
        return Err(argument("at least one relation meta-path is required"));
    }
    if params.dim == 0 || params.negatives == 0 || params.window == 0 {
        return Err(argument("dim, negatives and window must be positive"));
    }
    let dim = params.dim;
    let n = g.node_count();
    let mut init = rng::stream(seed, &[0x42]);
    let half = 0.5 / (dim as f64).sqrt();
    let mut nodes: Vec<f64> = (0..n * dim)
        .map(|_| init.random_range(-half..half))
        .collect();
    let mut rels = vec![0.0; relations.len() * dim];
    let index: HashMap<u64, usize> = relations
        .iter()
        .enumerate()
        .map(|(i, r)| (kind_code(r.kinds().iter().copied()), i))
        .collect();

    // Relation index of the sample starting at walk position `i` with
    // `h` hops, or `None` when unregistered.
    let relation_at = |kinds: &[NodeKind], i: usize, h: usize| {
        index
            .get(&kind_code(kinds[i..=i + h].iter().copied()))
            .copied()
    };
    let mut kinds: Vec<NodeKind> = Vec::new();
    let mut per_epoch = 0usize;
    for walk in &corpus.walks {
        kinds.clear();
        kinds.extend(walk.iter().map(|&v| g.kind(v)));
        for i in 0..walk.len() {
            for h in 1..=params.window.min(walk.len() - 1 - i) {
                per_epoch += usize::from(relation_at(&kinds, i, h).is_some());
            }
        }
    }

    let counts = corpus_counts(g, corpus);
    let sampler = KindSampler::new(g, &counts);
    let mut rng = rng::stream(seed, &[0x42, 1]);
    let total = (per_epoch * params.epochs).max(1) as f64;
    let mut done = 0usize;
    let mut scratch = Scratch::new(dim);
    let mut log = TrainLog::default();
    for _ in 0..params.epochs {
        let mut epoch_loss = 0.0;
        let mut updates = 0usize;
        for walk in &corpus.walks {
            kinds.clear();
            kinds.extend(walk.iter().map(|&v| g.kind(v)));
            for i in 0..walk.len() {
                for h in 1..=params.window.min(walk.len() - 1 - i) {
                    let Some(r) = relation_at(&kinds, i, h) else {
                        continue;
                    };
                    let lr = params.learning_rate * (1.0 - 0.9 * done as f64 / total);
                    let (x, y) = (walk[i].index(), walk[i + h].index());
                    epoch_loss +=
                        hin2vec_step(&mut nodes, &mut rels, dim, x, y, r, 1.0, lr, &mut scratch);
                    updates += 1;
                    for _ in 0..params.negatives {
                        let neg = sampler.sample(kinds[i + h], &mut rng).expect("kind occurs");
                        if neg.index() == y {
                            continue;
                        }
                        epoch_loss += hin2vec_step(
                            &mut nodes,
                            &mut rels,
                            dim,
                            x,
                            neg.index(),
                            r,
                            0.0,
                            lr,
                            &mut scratch,
                        );
                        updates += 1;
                    }
                    done += 1;
                }
            }
        }
        log.epoch_loss.push(epoch_loss / updates.max(1) as f64);
    }
    let context = nodes.clone();
    Ok((
        EmbeddingSet {
            dim,
            center: nodes,
            context,
            trained_epochs: params.epochs,
        },
        MetaPathEmbeddings {
            dim,
            relations: relations.to_vec(),
            vectors: rels,
        },
        log,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeKind, NodeId, NodeTable};
    use crate::walks::generate_walks;

    #[test]
    fn relations_of_tiled_path() {
        let mp = parse_metapath("U-U-V-U-U").unwrap();
        let rels = relations_from_metapath(&mp, 4).unwrap();
        let names: Vec<String> = rels.iter().map(ToString::to_string).collect();
        assert_eq!(&names[..3], ["U-U", "U-V", "V-U"]);
        assert_eq!(names.len(), 15);
        assert!(names.iter().all(|n| n.split('-').count() <= 5));
        let short = relations_from_metapath(&parse_metapath("U-V").unwrap(), 4).unwrap();
        assert_eq!(short.len(), 1);
        assert!(relations_from_metapath(&mp, 0).is_err());
    }

    fn two_blocks() -> HinGraph {
        let mut t = NodeTable::new();
        for i in 0..10 {
            t.push(format!("u{i}"), NodeKind::User, Default::default())
                .unwrap();
        }
        let mut edges = Vec::new();
        for a in 0..10u32 {
            for b in 0..10u32 {
                if a != b && a / 5 == b / 5 {
                    edges.push(Edge {
                        src: NodeId(a),
                        dst: NodeId(b),
                        kind: EdgeKind::Follow,
                        weight: 1.0,
                        timestamp: 0,
                    });
                }
            }
        }
        HinGraph::build(t, edges).unwrap()
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let g = two_blocks();
        let mp = parse_metapath("U-U").unwrap();
        let corpus = generate_walks(&g, &mp, 2, 10, 1).unwrap();
        let rels = relations_from_metapath(&mp, 2).unwrap();
        let p = Hin2vecParams {
            dim: 8,
            epochs: 0,
            ..Default::default()
        };
        let (a, ra, _) = train_hin2vec(&g, &rels, &corpus, &p, 5).unwrap();
        let mut empty = corpus.clone();
        empty.walks.clear();
        let (b, rb, _) =
            train_hin2vec(&g, &rels, &empty, &Hin2vecParams { epochs: 3, ..p }, 5).unwrap();
        assert_eq!(a.center, b.center);
        assert_eq!(ra.vectors, rb.vectors);
        assert!(train_hin2vec(&g, &[], &corpus, &p, 5).is_err());
    }

    #[test]
    fn round_trip_relations() {
        let m = MetaPathEmbeddings {
            dim: 2,
            relations: vec![
                parse_metapath("U-V").unwrap(),
                parse_metapath("U-U").unwrap(),
            ],
            vectors: vec![0.5, -1.25, 3.0, 0.0],
        };
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(MetaPathEmbeddings::read(&buf[..]).unwrap(), m);
    }
}
