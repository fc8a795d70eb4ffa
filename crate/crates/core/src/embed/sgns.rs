use rand::Rng as _;

use super::sampler::{corpus_counts, KindSampler};
use super::{dot, neg_log_sigmoid, sigmoid, EmbeddingSet, TrainLog};
use crate::error::{argument, Result};
use crate::graph::HinGraph;
use crate::rng;
use crate::walks::WalkCorpus;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SgnsParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for SgnsParams {
    fn default() -> Self {
        Self {
            dim: 128,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
        }
    }
}

/// One SGD step on `center` row `c` against `targets` (context row, label)
/// pairs. Target gradients use the pre-step center vector and the center
/// receives the accumulated gradient at the end. Returns the pre-step loss.
fn sgns_step(
    center: &mut [f64],
    context: &mut [f64],
    dim: usize,
    c: usize,
    targets: &[(usize, f64)],
    lr: f64,
    acc: &mut [f64],
) -> f64 {
    acc.fill(0.0);
    let u = &center[c * dim..(c + 1) * dim];
    let mut loss = 0.0;
    for &(t, label) in targets {
        let v = &mut context[t * dim..(t + 1) * dim];
        let score = dot(u, v);
        loss += if label > 0.5 {
            neg_log_sigmoid(score)
        } else {
            neg_log_sigmoid(-score)
        };
        let g = lr * (label - sigmoid(score));
        for k in 0..dim {
            acc[k] += g * v[k];
            v[k] += g * u[k];
        }
    }
    for (x, a) in center[c * dim..(c + 1) * dim].iter_mut().zip(acc.iter()) {
        *x += a;
    }
    loss
}

/// SGNS loss `-ln s(u.p) - sum ln s(-u.n)` for one center vector `u`, its
/// true context `pos` and negative contexts.
pub fn sgns_loss(u: &[f64], pos: &[f64], negs: &[Vec<f64>]) -> f64 {
    neg_log_sigmoid(dot(u, pos))
        + negs
            .iter()
            .map(|n| neg_log_sigmoid(-dot(u, n)))
            .sum::<f64>()
}

/// Gradient of [`sgns_loss`] as applied by the trainer: the parameter change
/// of one unit-rate training step, negated. Returns gradients for `u`,
/// `pos` and each negative.
pub fn sgns_gradient(
    u: &[f64],
    pos: &[f64],
    negs: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let dim = u.len();
    let mut center = u.to_vec();
    let mut context: Vec<f64> = pos.iter().chain(negs.iter().flatten()).copied().collect();
    let before = context.clone();
    let targets: Vec<(usize, f64)> = std::iter::once((0, 1.0))
        .chain((1..=negs.len()).map(|i| (i, 0.0)))
        .collect();
    let mut acc = vec![0.0; dim];
    sgns_step(&mut center, &mut context, dim, 0, &targets, 1.0, &mut acc);
    let gu = u.iter().zip(&center).map(|(a, b)| a - b).collect();
    let gctx: Vec<f64> = before.iter().zip(&context).map(|(a, b)| a - b).collect();
    let mut rows = gctx.chunks(dim).map(<[f64]>::to_vec);
    let gpos = rows.next().unwrap();
    (gu, gpos, rows.collect())
}

/// Skip-gram with negative sampling over a walk corpus.
///
/// Every `(center, context)` pair within `window` positions is one update
/// with `negatives` noise contexts drawn from the unigram^0.75 distribution
/// over nodes of the context's kind. The learning rate decays linearly to
/// 10% of its initial value. Sequential and deterministic given `seed`.
pub fn train_metapath2vec(
    g: &HinGraph,
    corpus: &WalkCorpus,
    params: &SgnsParams,
    seed: u64,
) -> Result<(EmbeddingSet, TrainLog)> {
    if params.dim == 0 || params.negatives == 0 {
        return Err(argument("dim and negatives must be positive"));
    }
    if params.window == 0 {
        return Err(argument("window must be positive"));
    }
    let dim = params.dim;
    let n = g.node_count();
    let mut init = rng::stream(seed, &[0x5e]);
    let half = 0.5 / dim as f64;
    let mut center: Vec<f64> = (0..n * dim)
        .map(|_| init.random_range(-half..half))
        .collect();
    let mut context = vec![0.0; n * dim];

    let counts = corpus_counts(g, corpus);
    let sampler = KindSampler::new(g, &counts);
    let mut rng = rng::stream(seed, &[0x5e, 1]);

    let pairs_per_epoch: usize = corpus
        .walks
        .iter()
        .map(|w| {
            (0..w.len())
                .map(|i| i.min(params.window) + (w.len() - 1 - i).min(params.window))
                .sum::<usize>()
        })
        .sum();
    let total = (pairs_per_epoch * params.epochs).max(1) as f64;
    let mut done = 0usize;
    let mut acc = vec![0.0; dim];
    let mut targets = Vec::with_capacity(params.negatives + 1);
    let mut log = TrainLog::default();

    for _ in 0..params.epochs {
        let mut epoch_loss = 0.0;
        for walk in &corpus.walks {
            for (i, &c) in walk.iter().enumerate() {
                let lo = i.saturating_sub(params.window);
                let hi = (i + params.window).min(walk.len() - 1);
                for (j, &ctx) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let kind = g.kind(ctx);
                    targets.clear();
                    targets.push((ctx.index(), 1.0));
                    for _ in 0..params.negatives {
                        let neg = sampler.sample(kind, &mut rng).expect("context kind occurs");
                        if neg != ctx {
                            targets.push((neg.index(), 0.0));
                        }
                    }
                    let lr = params.learning_rate * (1.0 - 0.9 * done as f64 / total);
                    epoch_loss += sgns_step(
                        &mut center,
                        &mut context,
                        dim,
                        c.index(),
                        &targets,
                        lr,
                        &mut acc,
                    );
                    done += 1;
                }
            }
        }
        log.epoch_loss
            .push(epoch_loss / pairs_per_epoch.max(1) as f64);
    }
    Ok((
        EmbeddingSet {
            dim,
            center,
            context,
            trained_epochs: params.epochs,
        },
        log,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeKind, NodeId, NodeKind, NodeTable};
    use crate::walks::{generate_walks, parse_metapath};

    fn clique_pair(size: usize) -> HinGraph {
        let mut t = NodeTable::new();
        for i in 0..2 * size {
            t.push(format!("u{i}"), NodeKind::User, Default::default())
                .unwrap();
        }
        let mut edges = Vec::new();
        for block in 0..2 {
            let base = block * size;
            for a in 0..size {
                for b in 0..size {
                    if a < b {
                        edges.push(Edge {
                            src: NodeId((base + a) as u32),
                            dst: NodeId((base + b) as u32),
                            kind: EdgeKind::Follow,
                            weight: 1.0,
                            timestamp: 0,
                        });
                    }
                }
            }
        }
        HinGraph::build(t, edges).unwrap()
    }

    #[test]
    fn cliques_separate() {
        let g = clique_pair(6);
        let mp = parse_metapath("U-U").unwrap();
        let corpus = generate_walks(&g, &mp, 20, 20, 3).unwrap();
        let params = SgnsParams {
            dim: 16,
            epochs: 3,
            ..SgnsParams::default()
        };
        let (emb, _) = train_metapath2vec(&g, &corpus, &params, 9).unwrap();
        let (mut intra, mut inter, mut ni, mut ne) = (0.0, 0.0, 0, 0);
        for a in 0..12 {
            for b in (a + 1)..12 {
                let c = super::super::cosine(emb.vector(a), emb.vector(b));
                if a / 6 == b / 6 {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    ne += 1;
                }
            }
        }
        assert!(intra / ni as f64 > inter / ne as f64);
    }

    #[test]
    fn single_node_walks_leave_initialization() {
        let g = clique_pair(3);
        let mp = parse_metapath("U-U").unwrap();
        let mut corpus = generate_walks(&g, &mp, 1, 1, 3).unwrap();
        assert!(corpus.walks.iter().all(|w| w.len() == 1));
        let params = SgnsParams {
            dim: 8,
            ..SgnsParams::default()
        };
        let (trained, _) = train_metapath2vec(&g, &corpus, &params, 4).unwrap();
        corpus.walks.clear();
        let (untouched, _) = train_metapath2vec(&g, &corpus, &params, 4).unwrap();
        assert_eq!(trained.center, untouched.center);
        assert!(trained.context.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_zero_dim_or_negatives() {
        let g = clique_pair(2);
        let mp = parse_metapath("U-U").unwrap();
        let corpus = generate_walks(&g, &mp, 1, 3, 3).unwrap();
        for p in [
            SgnsParams {
                dim: 0,
                ..SgnsParams::default()
            },
            SgnsParams {
                negatives: 0,
                ..SgnsParams::default()
            },
        ] {
            assert!(train_metapath2vec(&g, &corpus, &p, 1).is_err());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let g = clique_pair(4);
        let mp = parse_metapath("U-U").unwrap();
        let corpus = generate_walks(&g, &mp, 3, 10, 3).unwrap();
        let p = SgnsParams {
            dim: 8,
            ..SgnsParams::default()
        };
        let a = train_metapath2vec(&g, &corpus, &p, 21).unwrap().0;
        let b = train_metapath2vec(&g, &corpus, &p, 21).unwrap().0;
        assert_eq!(a, b);
    }
}
