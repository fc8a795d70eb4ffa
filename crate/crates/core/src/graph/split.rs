use std::collections::BTreeMap;

use serde::Serialize;

use super::{Edge, EdgeKind, HinGraph, NodeId};
use crate::error::{argument, Result};

/// Donation events observed after the snapshot cutoff.
#[derive(Debug, Clone)]
pub struct LabelWindow {
    pub cutoff: i64,
    pub horizon_days: u32,
    /// Donate edges with `cutoff < timestamp <= cutoff + horizon_days`.
    pub events: Vec<Edge>,
    /// Number of events per video (videos without events are absent).
    pub counts: BTreeMap<NodeId, usize>,
    pub dropped: DroppedEvents,
}

/// Donation events that landed in neither the snapshot nor the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DroppedEvents {
    /// Events after `cutoff + horizon_days`.
    pub after_horizon: usize,
    /// Window events whose user or video has no edge in the snapshot.
    pub absent_endpoint: usize,
}

impl LabelWindow {
    pub fn count(&self, video: NodeId) -> usize {
        self.counts.get(&video).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Restricts the window to events on the given videos.
    pub fn restrict_to(&self, keep: impl Fn(NodeId) -> bool) -> LabelWindow {
        let events: Vec<Edge> = self
            .events
            .iter()
            .filter(|e| keep(e.dst))
            .copied()
            .collect();
        LabelWindow {
            cutoff: self.cutoff,
            horizon_days: self.horizon_days,
            counts: count_events(&events),
            events,
            dropped: self.dropped,
        }
    }
}

fn count_events(events: &[Edge]) -> BTreeMap<NodeId, usize> {
    let mut counts = BTreeMap::new();
    for e in events {
        *counts.entry(e.dst).or_insert(0) += 1;
    }
    counts
}

/// Splits a graph at `cutoff` into the observed snapshot and the
/// donation window `(cutoff, cutoff + horizon_days]`.
///
/// The snapshot keeps the full node table so ids stay stable. Untimed
/// follows (timestamp 0) are always part of the snapshot. A node counts as
/// absent from the snapshot when it has no snapshot edge; window events
/// touching such nodes are dropped and counted.
pub fn snapshot_split(
    g: &HinGraph,
    cutoff: i64,
    horizon_days: u32,
) -> Result<(HinGraph, LabelWindow)> {
    if horizon_days == 0 {
        return Err(argument("horizon_days must be at least 1"));
    }
    let end = cutoff + i64::from(horizon_days);
    let mut snapshot_edges = Vec::new();
    let mut candidates = Vec::new();
    let mut dropped = DroppedEvents::default();
    for e in g.edges() {
        match e.kind {
            EdgeKind::Follow => {
                if e.timestamp == 0 || e.timestamp <= cutoff {
                    snapshot_edges.push(*e);
                }
            }
            EdgeKind::Donate => {
                if e.timestamp <= cutoff {
                    snapshot_edges.push(*e);
                } else if e.timestamp <= end {
                    candidates.push(*e);
                } else {
                    dropped.after_horizon += 1;
                }
            }
        }
    }
    let snapshot = HinGraph::build(g.shared_nodes(), snapshot_edges)?;
    let events: Vec<Edge> = candidates
        .into_iter()
        .filter(|e| {
            let present =
                snapshot.incident_events(e.src) > 0 && snapshot.incident_events(e.dst) > 0;
            if !present {
                dropped.absent_endpoint += 1;
            }
            present
        })
        .collect();
    let window = LabelWindow {
        cutoff,
        horizon_days,
        counts: count_events(&events),
        events,
        dropped,
    };
    Ok((snapshot, window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeKind, NodeTable};

    fn graph(donation_times: &[i64]) -> HinGraph {
        let mut t = NodeTable::new();
        t.push("u0", NodeKind::User, Default::default()).unwrap();
        t.push("u1", NodeKind::User, Default::default()).unwrap();
        t.push("v0", NodeKind::Video, Default::default()).unwrap();
        let mut edges = vec![Edge {
            src: NodeId(0),
            dst: NodeId(1),
            kind: EdgeKind::Follow,
            weight: 1.0,
            timestamp: 0,
        }];
        for &ts in donation_times {
            edges.push(Edge {
                src: NodeId(0),
                dst: NodeId(2),
                kind: EdgeKind::Donate,
                weight: 1.0,
                timestamp: ts,
            });
        }
        HinGraph::build(t, edges).unwrap()
    }

    #[test]
    fn splits_at_cutoff() {
        let g = graph(&[5, 10, 12]);
        let (snap, window) = snapshot_split(&g, 10, 7).unwrap();
        let snap_times: Vec<i64> = snap
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::Donate)
            .map(|e| e.timestamp)
            .collect();
        assert_eq!(snap_times, vec![5, 10]);
        assert_eq!(window.events.len(), 1);
        assert_eq!(window.events[0].timestamp, 12);
        assert_eq!(window.count(NodeId(2)), 1);
    }

    #[test]
    fn cutoff_after_everything_gives_empty_window() {
        let g = graph(&[1, 2, 3]);
        let (_, window) = snapshot_split(&g, 100, 7).unwrap();
        assert!(window.is_empty());
    }

    #[test]
    fn everything_in_window_leaves_follows_only() {
        let g = graph(&[11, 12]);
        let (snap, window) = snapshot_split(&g, 10, 7).unwrap();
        assert_eq!(snap.edge_count(EdgeKind::Donate), 0);
        assert_eq!(snap.edge_count(EdgeKind::Follow), 1);
        // v0 has no snapshot edge, so both events are dropped as absent.
        assert!(window.is_empty());
        assert_eq!(window.dropped.absent_endpoint, 2);
    }

    #[test]
    fn late_events_are_reported() {
        let g = graph(&[5, 12, 30]);
        let (_, window) = snapshot_split(&g, 10, 7).unwrap();
        assert_eq!(window.events.len(), 1);
        assert_eq!(window.dropped.after_horizon, 1);
    }

    #[test]
    fn zero_horizon_rejected() {
        let g = graph(&[]);
        assert!(snapshot_split(&g, 10, 0).is_err());
    }
}
