use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::graph::NodeId;

/// Candidates of one query video in descending score order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub video: NodeId,
    /// `(user, score)`, possibly truncated to the deepest cutoff evaluated.
    pub ranked: Vec<(NodeId, f64)>,
    /// Candidate count before truncation.
    pub n_candidates: usize,
    /// Window donors inside the candidate set, ascending.
    pub truth: Vec<NodeId>,
    /// Window donors outside the candidate set.
    pub truth_outside: usize,
}

/// Scores every candidate and sorts by descending score, ties by ascending
/// user id. Keeps the first `keep` entries when given.
pub fn rank_candidates(
    scorer: impl Fn(NodeId) -> f64,
    video: NodeId,
    candidates: &[NodeId],
    keep: Option<usize>,
) -> RankedList {
    let mut ranked: Vec<(NodeId, f64)> = candidates.iter().map(|&u| (u, scorer(u))).collect();
    sort_ranked(&mut ranked);
    ranked.dedup_by_key(|x| x.0);
    let n_candidates = ranked.len();
    if let Some(k) = keep {
        ranked.truncate(k);
    }
    RankedList {
        video,
        ranked,
        n_candidates,
        truth: Vec::new(),
        truth_outside: 0,
    }
}

pub(crate) fn sort_ranked(ranked: &mut [(NodeId, f64)]) {
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Average-precision convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// `(1 / min(k, |truth|)) * sum_{j<=k} precision@j * rel(j)`.
    #[default]
    Standard,
    /// `sum_{j<=k} precision@j / j`, as printed in the paper.
    PaperLiteral,
}

impl fmt::Display for ApMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApMode::Standard => "standard",
            ApMode::PaperLiteral => "paper_literal",
        })
    }
}

impl FromStr for ApMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(ApMode::Standard),
            "paper_literal" | "literal" => Ok(ApMode::PaperLiteral),
            _ => Err(argument(format!("unknown AP mode `{s}`"))),
        }
    }
}

/// MAP@k and recall@k of one ranked list.
pub fn list_metrics(list: &RankedList, k: usize, mode: ApMode) -> (f64, f64) {
    let truth: HashSet<NodeId> = list.truth.iter().copied().collect();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (j, (u, _)) in list.ranked.iter().take(k).enumerate() {
        let rel = truth.contains(u);
        hits += usize::from(rel);
        let precision = hits as f64 / (j + 1) as f64;
        match mode {
            ApMode::Standard if rel => sum += precision,
            ApMode::Standard => {}
            ApMode::PaperLiteral => sum += precision / (j + 1) as f64,
        }
    }
    let ap = match mode {
        ApMode::Standard => sum / k.min(truth.len()) as f64,
        ApMode::PaperLiteral => sum,
    };
    (ap, hits as f64 / truth.len() as f64)
}

/// Mean metrics of one method over its query lists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: String,
    /// MAP per cutoff, aligned with [`EvalReport::ks`].
    pub map: Vec<f64>,
    pub recall: Vec<f64>,
    pub queries: usize,
    /// Lists skipped for an empty truth set.
    pub skipped: usize,
    /// Set when the method failed; metrics are then empty.
    pub error: Option<String>,
}

impl MethodRow {
    pub fn failed(method: impl Into<String>, error: impl ToString) -> Self {
        Self {
            method: method.into(),
            map: Vec::new(),
            recall: Vec::new(),
            queries: 0,
            skipped: 0,
            error: Some(error.to_string()),
        }
    }

    pub fn recall_at(&self, ks: &[usize], k: usize) -> Option<f64> {
        ks.iter()
            .position(|&x| x == k)
            .and_then(|i| self.recall.get(i).copied())
    }

    pub fn map_at(&self, ks: &[usize], k: usize) -> Option<f64> {
        ks.iter()
            .position(|&x| x == k)
            .and_then(|i| self.map.get(i).copied())
    }
}

/// Averages MAP@k and recall@k over lists with a nonempty truth set.
pub fn rank_metrics(
    method: &str,
    lists: &[RankedList],
    ks: &[usize],
    mode: ApMode,
) -> Result<MethodRow> {
    validate_ks(ks)?;
    let used: Vec<&RankedList> = lists.iter().filter(|l| !l.truth.is_empty()).collect();
    let mut map = vec![0.0; ks.len()];
    let mut recall = vec![0.0; ks.len()];
    for l in &used {
        for (i, &k) in ks.iter().enumerate() {
            let (ap, r) = list_metrics(l, k, mode);
            map[i] += ap;
            recall[i] += r;
        }
    }
    let n = used.len().max(1) as f64;
    map.iter_mut()
        .chain(recall.iter_mut())
        .for_each(|x| *x /= n);
    Ok(MethodRow {
        method: method.to_owned(),
        map,
        recall,
        queries: used.len(),
        skipped: lists.len() - used.len(),
        error: None,
    })
}

pub(crate) fn validate_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(argument("cutoffs k must be positive and nonempty"));
    }
    Ok(())
}

/// Per-method MAP and recall table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub ap_mode: ApMode,
    pub rows: Vec<MethodRow>,
}

impl EvalReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// `recall@k` of `method`, `None` if absent or failed.
    pub fn recall(&self, method: &str, k: usize) -> Option<f64> {
        self.row(method).and_then(|r| r.recall_at(&self.ks, k))
    }

    /// CSV with one row per method: `map@k,recall@k` per cutoff, then the
    /// query and skip counts and any error.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "method")?;
        for k in &self.ks {
            write!(w, ",map@{k},recall@{k}")?;
        }
        writeln!(w, ",queries,skipped,error")?;
        for r in &self.rows {
            write!(w, "{}", r.method)?;
            for i in 0..self.ks.len() {
                match (r.map.get(i), r.recall.get(i)) {
                    (Some(m), Some(c)) => write!(w, ",{m:.4},{c:.4}")?,
                    _ => write!(w, ",NA,NA")?,
                }
            }
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(w, ",{},{},{err}", r.queries, r.skipped)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(order: &[u32], truth: &[u32]) -> RankedList {
        let n = order.len();
        RankedList {
            video: NodeId(99),
            ranked: order
                .iter()
                .enumerate()
                .map(|(i, &u)| (NodeId(u), (n - i) as f64))
                .collect(),
            n_candidates: n,
            truth: truth.iter().map(|&u| NodeId(u)).collect(),
            truth_outside: 0,
        }
    }

    #[test]
    fn spec_examples() {
        let (a, b, c) = (0, 1, 2);
        assert_eq!(
            list_metrics(&list(&[a, b, c], &[a]), 3, ApMode::Standard),
            (1.0, 1.0)
        );
        let (ap, r) = list_metrics(&list(&[b, c, a], &[a]), 3, ApMode::Standard);
        assert!((ap - 1.0 / 3.0).abs() < 1e-15 && r == 1.0);
        let (ap, r) = list_metrics(&list(&[a, c, b], &[a, b]), 3, ApMode::Standard);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15 && r == 1.0);
        // literal: P@1/1 + P@2/2 + P@3/3 = 1 + 1/4 + 2/9
        let (ap, _) = list_metrics(&list(&[a, c, b], &[a, b]), 3, ApMode::PaperLiteral);
        assert!((ap - (1.0 + 0.25 + 2.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn ranking_ties_by_id() {
        let l = rank_candidates(
            |u| if u.0 == 0 { 0.9 } else { 0.1 },
            NodeId(5),
            &[NodeId(1), NodeId(0)],
            None,
        );
        assert_eq!(l.ranked.iter().map(|x| x.0 .0).collect::<Vec<_>>(), [0, 1]);
        let l = rank_candidates(
            |_| 0.5,
            NodeId(5),
            &[NodeId(3), NodeId(1), NodeId(2)],
            Some(2),
        );
        assert_eq!(l.ranked.iter().map(|x| x.0 .0).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(l.n_candidates, 3);
        assert!(rank_candidates(|_| 0.0, NodeId(5), &[], None)
            .ranked
            .is_empty());
    }

    #[test]
    fn report_skips_empty_truth() {
        let lists = [list(&[0, 1], &[1]), list(&[0, 1], &[])];
        let row = rank_metrics("m", &lists, &[1, 2], ApMode::Standard).unwrap();
        assert_eq!((row.queries, row.skipped), (1, 1));
        assert_eq!(row.recall, vec![0.0, 1.0]);
        assert_eq!(row.map, vec![0.0, 0.5]);
        assert!(rank_metrics("m", &lists, &[0], ApMode::Standard).is_err());
        let report = EvalReport {
            ks: vec![5, 20, 50, 100],
            ap_mode: ApMode::Standard,
            rows: vec![rank_metrics("m", &lists, &[5, 20, 50, 100], ApMode::Standard).unwrap()],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').filter(|c| c.contains('@')).count(), 8);
    }
}
