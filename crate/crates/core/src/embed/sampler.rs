use rand::Rng as _;

use crate::graph::{HinGraph, NodeId, NodeKind};
use crate::rng::Rng;
use crate::walks::WalkCorpus;

/// Draws negatives of a fixed node kind with probability proportional to
/// corpus frequency raised to 0.75.
#[derive(Debug, Clone)]
pub(crate) struct KindSampler {
    // per kind: node ids and the cumulative weights
    nodes: [Vec<NodeId>; 2],
    cumulative: [Vec<f64>; 2],
}

pub(crate) fn corpus_counts(g: &HinGraph, corpus: &WalkCorpus) -> Vec<u64> {
    let mut counts = vec![0u64; g.node_count()];
    for walk in &corpus.walks {
        for n in walk {
            counts[n.index()] += 1;
        }
    }
    counts
}

impl KindSampler {
    pub(crate) fn new(g: &HinGraph, counts: &[u64]) -> Self {
        let mut nodes: [Vec<NodeId>; 2] = Default::default();
        let mut cumulative: [Vec<f64>; 2] = Default::default();
        for (slot, kind) in NodeKind::ALL.into_iter().enumerate() {
            let mut acc = 0.0;
            for &n in g.nodes_of_kind(kind) {
                let c = counts[n.index()];
                if c > 0 {
                    acc += (c as f64).powf(0.75);
                    nodes[slot].push(n);
                    cumulative[slot].push(acc);
                }
            }
        }
        Self { nodes, cumulative }
    }

    /// `None` when no node of the kind occurs in the corpus.
    pub(crate) fn sample(&self, kind: NodeKind, rng: &mut Rng) -> Option<NodeId> {
        let slot = kind as usize;
        let cum = &self.cumulative[slot];
        let total = *cum.last()?;
        let x = rng.random::<f64>() * total;
        let i = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
        Some(self.nodes[slot][i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeTable;
    use crate::rng;

    #[test]
    fn frequencies_follow_three_quarter_power() {
        let mut t = NodeTable::new();
        for i in 0..3 {
            t.push(format!("u{i}"), NodeKind::User, Default::default())
                .unwrap();
        }
        let g = HinGraph::build(t, vec![]).unwrap();
        let counts = [16u64, 1, 0];
        let s = KindSampler::new(&g, &counts);
        let mut r = rng::seeded(3);
        let mut hits = [0usize; 3];
        let n = 200_000;
        for _ in 0..n {
            hits[s.sample(NodeKind::User, &mut r).unwrap().index()] += 1;
        }
        assert_eq!(hits[2], 0);
        // weights 8 and 1
        let f = hits[0] as f64 / n as f64;
        assert!((f - 8.0 / 9.0).abs() < 0.005, "{f}");
        assert!(s.sample(NodeKind::Video, &mut r).is_none());
    }
}
