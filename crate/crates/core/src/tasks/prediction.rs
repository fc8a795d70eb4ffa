use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::forest::{
    auc, balance_classes, feature_importances, forest_predict, train_forest, FeatureTable,
    ForestParams,
};
use crate::graph::{HinGraph, LabelWindow, NodeId, NodeKind};
use crate::rng;

/// Columns of the past-popularity group.
pub const PAST_POPULARITY: [&str; 3] = ["views", "subscriptions", "danmus"];
/// Columns of the past-donation group.
pub const PAST_DONATION: [&str; 2] = ["donations_total", "donations_prev_week"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    PastPopularity,
    PastDonation,
    Both,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 3] = [Self::PastPopularity, Self::PastDonation, Self::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PastPopularity => "past_popularity",
            Self::PastDonation => "past_donation",
            Self::Both => "both",
        }
    }

    pub fn columns(self) -> Vec<&'static str> {
        match self {
            Self::PastPopularity => PAST_POPULARITY.to_vec(),
            Self::PastDonation => PAST_DONATION.to_vec(),
            Self::Both => PAST_POPULARITY
                .iter()
                .chain(&PAST_DONATION)
                .copied()
                .collect(),
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| argument(format!("unknown feature group `{s}`")))
    }
}

/// One row per video with at least one donation by the snapshot, copying
/// the popularity attributes and the donation attributes
/// `donations_total` and `donations_week` (as `donations_prev_week`).
pub fn build_series_features(snapshot: &HinGraph) -> Result<FeatureTable> {
    const ATTRS: [&str; 5] = [
        "views",
        "subscriptions",
        "danmus",
        "donations_total",
        "donations_week",
    ];
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for &v in snapshot.nodes_of_kind(NodeKind::Video) {
        let node = snapshot.node(v);
        let row: Vec<f64> = ATTRS
            .iter()
            .map(|a| {
                node.attrs.get(*a).map(|&x| x as f64).ok_or_else(|| {
                    Error::Schema(format!(
                        "video `{}` is missing attribute `{a}`",
                        node.external_id
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if row[3] >= 1.0 {
            ids.push(node.external_id.clone());
            data.extend(row);
        }
    }
    let columns = PAST_POPULARITY
        .iter()
        .chain(&PAST_DONATION)
        .map(|s| s.to_string())
        .collect();
    FeatureTable::new(columns, ids, data, None)
}

/// Binary labels of a video list by window donation count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileLabels {
    pub labels: Vec<bool>,
    /// Smallest count labeled positive.
    pub threshold: usize,
    /// Every count is zero, so every video is positive.
    pub degenerate: bool,
}

/// Labels a video positive when its window count reaches the count of the
/// `ceil(q N)`-th largest video. Ties at the threshold are positive.
pub fn label_top_quantile(
    window: &LabelWindow,
    videos: &[NodeId],
    q: f64,
) -> Result<QuantileLabels> {
    if !(q > 0.0 && q < 1.0) {
        return Err(argument(format!("quantile q = {q} outside (0, 1)")));
    }
    if videos.is_empty() {
        return Err(argument("no videos to label"));
    }
    let counts: Vec<usize> = videos.iter().map(|&v| window.count(v)).collect();
    let mut sorted = counts.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let m = ((q * videos.len() as f64).ceil() as usize).clamp(1, videos.len());
    let threshold = sorted[m - 1];
    Ok(QuantileLabels {
        labels: counts.iter().map(|&c| c >= threshold).collect(),
        threshold,
        degenerate: sorted[0] == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionParams {
    pub quantile: f64,
    pub train_fraction: f64,
    pub forest: ForestParams,
}

impl Default for PredictionParams {
    fn default() -> Self {
        Self {
            quantile: 0.2,
            train_fraction: 0.7,
            forest: ForestParams::default(),
        }
    }
}

/// Balanced, stratified train/test partition of a labeled table.
#[derive(Debug, Clone)]
pub struct BalancedSplit {
    pub train: FeatureTable,
    pub test: FeatureTable,
}

/// Downsamples the majority class, then splits each class
/// `train_fraction` / rest in random order.
pub fn balanced_split(t: &FeatureTable, train_fraction: f64, seed: u64) -> Result<BalancedSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(argument("train_fraction must be in (0, 1)"));
    }
    let balanced = balance_classes(t, rng::derive(seed, &[1]))?;
    let labels = balanced.labels().expect("balanced tables keep labels");
    let mut rng = rng::stream(seed, &[2]);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut rows: Vec<usize> = (0..balanced.n_rows())
            .filter(|&i| labels[i] == class)
            .collect();
        rows.shuffle(&mut rng);
        let cut = ((rows.len() as f64 * train_fraction).round() as usize).clamp(1, rows.len() - 1);
        train.extend_from_slice(&rows[..cut]);
        test.extend_from_slice(&rows[cut..]);
    }
    if train.len() < 2 || test.len() < 2 {
        return Err(Error::Task(format!(
            "{} balanced rows are too few for a train/test split",
            balanced.n_rows()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(BalancedSplit {
        train: balanced.subset(&train),
        test: balanced.subset(&test),
    })
}

/// Trains a forest on `columns` of the training side and returns the test
/// AUC with the ranked importances.
pub fn evaluate_columns(
    split: &BalancedSplit,
    columns: &[&str],
    forest: &ForestParams,
    seed: u64,
) -> Result<(f64, Vec<(String, f64)>)> {
    let train = split.train.select(columns)?;
    let test = split.test.select(columns)?;
    let model = train_forest(&train, forest, seed)?;
    let scores = forest_predict(&model, &test)?;
    let value = auc(&scores, test.labels().expect("labeled"))?;
    Ok((value, feature_importances(&model)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupResult {
    pub group: FeatureGroup,
    pub columns: Vec<String>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionReport {
    pub groups: Vec<GroupResult>,
    /// Importances of the all-features forest, when that group ran.
    pub importances: Vec<(String, f64)>,
    pub params: PredictionParams,
    pub seed: u64,
    pub n_videos: usize,
    pub n_positive: usize,
    pub threshold: usize,
    pub n_train: usize,
    pub n_test: usize,
}

impl PredictionReport {
    pub fn auc(&self, group: FeatureGroup) -> Option<f64> {
        self.groups.iter().find(|g| g.group == group).map(|g| g.auc)
    }

    /// `group,columns,auc` with the forest hyperparameters as a leading
    /// comment line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let f = &self.params.forest;
        writeln!(
            w,
            "# n_trees={} max_depth={} mtry={} min_leaf={} bootstrap={} quantile={} train_fraction={} seed={} train={} test={}",
            f.n_trees,
            f.max_depth.map_or("none".into(), |d| d.to_string()),
            f.mtry.map_or("sqrt".into(), |m| m.to_string()),
            f.min_leaf,
            f.bootstrap,
            self.params.quantile,
            self.params.train_fraction,
            self.seed,
            self.n_train,
            self.n_test
        )?;
        writeln!(w, "group,columns,auc")?;
        for g in &self.groups {
            writeln!(w, "{},{},{:.4}", g.group, g.columns.join(" "), g.auc)?;
        }
        Ok(())
    }

    pub fn write_importances_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "feature,importance")?;
        for (f, v) in &self.importances {
            writeln!(w, "{f},{v:.6}")?;
        }
        Ok(())
    }
}

/// Video-level donation prediction: label the top `quantile` of videos by
/// window donations, balance, split, and report one forest AUC per group.
pub fn run_prediction(
    snapshot: &HinGraph,
    window: &LabelWindow,
    groups: &[FeatureGroup],
    params: &PredictionParams,
    seed: u64,
) -> Result<PredictionReport> {
    if window.is_empty() {
        return Err(Error::Task(
            "the label window has no donation events".into(),
        ));
    }
    if groups.is_empty() {
        return Err(argument("no feature groups requested"));
    }
    let features = build_series_features(snapshot)?;
    let videos: Vec<NodeId> = features
        .ids()
        .iter()
        .map(|id| {
            snapshot
                .find(id, NodeKind::Video)
                .expect("row ids are videos")
        })
        .collect();
    if videos.is_empty() {
        return Err(Error::Task(
            "no video has a donation before the cutoff".into(),
        ));
    }
    let labels = label_top_quantile(window, &videos, params.quantile)?;
    let n_positive = labels.labels.iter().filter(|&&l| l).count();
    if labels.degenerate || n_positive == videos.len() || n_positive == 0 {
        return Err(Error::Task(format!(
            "degenerate labels: {n_positive} of {} videos positive (threshold {})",
            videos.len(),
            labels.threshold
        )));
    }
    let table = features.with_labels(labels.labels.clone())?;
    let split = balanced_split(&table, params.train_fraction, seed)?;
    let mut results = Vec::new();
    let mut importances = Vec::new();
    for &group in groups {
        let cols = group.columns();
        let (value, imp) =
            evaluate_columns(&split, &cols, &params.forest, rng::derive(seed, &[3]))?;
        if group == FeatureGroup::Both {
            importances = imp;
        }
        results.push(GroupResult {
            group,
            columns: cols.iter().map(|s| s.to_string()).collect(),
            auc: value,
        });
    }
    Ok(PredictionReport {
        groups: results,
        importances,
        params: *params,
        seed,
        n_videos: videos.len(),
        n_positive,
        threshold: labels.threshold,
        n_train: split.train.n_rows(),
        n_test: split.test.n_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{snapshot_split, Edge, EdgeKind, NodeTable};
    use std::collections::BTreeMap;

    fn window_with(counts: &[usize]) -> (LabelWindow, Vec<NodeId>) {
        let mut t = NodeTable::new();
        t.push("u", NodeKind::User, BTreeMap::new()).unwrap();
        let mut edges = Vec::new();
        for (i, &c) in counts.iter().enumerate() {
            t.push(format!("v{i}"), NodeKind::Video, BTreeMap::new())
                .unwrap();
            let v = NodeId(i as u32 + 1);
            edges.push(Edge {
                src: NodeId(0),
                dst: v,
                kind: EdgeKind::Donate,
                weight: 1.0,
                timestamp: 1,
            });
            for _ in 0..c {
                edges.push(Edge {
                    src: NodeId(0),
                    dst: v,
                    kind: EdgeKind::Donate,
                    weight: 1.0,
                    timestamp: 5,
                });
            }
        }
        let g = HinGraph::build(t, edges).unwrap();
        let (_, w) = snapshot_split(&g, 2, 7).unwrap();
        let videos = (1..=counts.len() as u32).map(NodeId).collect();
        (w, videos)
    }

    #[test]
    fn quantile_examples() {
        let (w, v) = window_with(&[10, 9, 8, 7, 6, 5, 4, 3, 2, 1]);
        let l = label_top_quantile(&w, &v, 0.2).unwrap();
        assert_eq!(l.labels.iter().filter(|&&x| x).count(), 2);
        assert!(l.labels[0] && l.labels[1]);
        let (w, v) = window_with(&[3, 3, 3]);
        assert!(label_top_quantile(&w, &v, 0.2)
            .unwrap()
            .labels
            .iter()
            .all(|&x| x));
        let (w, v) = window_with(&[0, 0]);
        let l = label_top_quantile(&w, &v, 0.2).unwrap();
        assert!(l.degenerate && l.labels.iter().all(|&x| x));
        assert!(label_top_quantile(&w, &v, 1.0).is_err());
    }

    #[test]
    fn series_rows_copy_attributes() {
        let mut t = NodeTable::new();
        let attrs =
            |pairs: &[(&str, u64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        t.push(
            "a",
            NodeKind::Video,
            attrs(&[
                ("views", 100),
                ("subscriptions", 10),
                ("danmus", 5),
                ("donations_total", 3),
                ("donations_week", 1),
            ]),
        )
        .unwrap();
        t.push(
            "b",
            NodeKind::Video,
            attrs(&[
                ("views", 1),
                ("subscriptions", 1),
                ("danmus", 1),
                ("donations_total", 0),
                ("donations_week", 0),
            ]),
        )
        .unwrap();
        let g = HinGraph::build(t, vec![]).unwrap();
        let f = build_series_features(&g).unwrap();
        assert_eq!(f.n_rows(), 1);
        assert_eq!(f.row(0), &[100.0, 10.0, 5.0, 3.0, 1.0]);
        let mut t = NodeTable::new();
        t.push("c", NodeKind::Video, attrs(&[("views", 1)]))
            .unwrap();
        assert!(matches!(
            build_series_features(&HinGraph::build(t, vec![]).unwrap()),
            Err(Error::Schema(_))
        ));
    }
}
