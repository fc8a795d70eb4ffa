//! Random forest classifier, class balancing and ranking metrics for
//! binary labels.

mod table;

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{argument, Error, Result};
use crate::rng::{self, Rng};

pub use table::{balance_classes, FeatureTable};

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    /// Columns tried per split; `None` means `ceil(sqrt(columns))`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            mtry: None,
            min_leaf: 1,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[column] <= threshold` go to the next node in preorder,
    /// the rest to `right`. `gain` is the weighted Gini decrease.
    Split {
        column: usize,
        threshold: f64,
        gain: f64,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Decision tree stored as a preorder node list.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    column,
                    threshold,
                    right,
                    ..
                } => i = if x[column] <= threshold { i + 1 } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub columns: Vec<String>,
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub mtry: usize,
    pub seed: u64,
}

struct Grower<'a> {
    t: &'a FeatureTable,
    labels: &'a [bool],
    max_depth: usize,
    mtry: usize,
    min_leaf: usize,
    rng: Rng,
    nodes: Vec<TreeNode>,
    buf: Vec<(f64, bool)>,
    columns: Vec<usize>,
}

struct Candidate {
    column: usize,
    threshold: f64,
    impurity: f64,
}

fn gini_mass(n: f64, pos: f64) -> f64 {
    // n * gini = n * (1 - p^2 - q^2) = 2 * pos * neg / n
    if n == 0.0 {
        0.0
    } else {
        2.0 * pos * (n - pos) / n
    }
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) {
        let n = rows.len() as f64;
        let pos = rows.iter().filter(|&&r| self.labels[r]).count() as f64;
        let node = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: pos / n });
        if depth >= self.max_depth || pos == 0.0 || pos == n || rows.len() < 2 * self.min_leaf {
            return;
        }
        let Some(best) = self.best_split(rows) else {
            return;
        };
        let mid = partition(rows, |&r| self.t.value(r, best.column) <= best.threshold);
        let (left, right) = rows.split_at_mut(mid);
        self.grow(left, depth + 1);
        let right_at = self.nodes.len();
        self.grow(right, depth + 1);
        self.nodes[node] = TreeNode::Split {
            column: best.column,
            threshold: best.threshold,
            gain: (gini_mass(n, pos) - best.impurity).max(0.0),
            right: right_at,
        };
    }

    /// Tries columns in random order: at least `mtry` of them, and more
    /// while none has admitted a split.
    fn best_split(&mut self, rows: &[usize]) -> Option<Candidate> {
        self.columns.shuffle(&mut self.rng);
        let mut best: Option<Candidate> = None;
        for k in 0..self.columns.len() {
            if k >= self.mtry && best.is_some() {
                break;
            }
            let c = self.columns[k];
            self.buf.clear();
            self.buf
                .extend(rows.iter().map(|&r| (self.t.value(r, c), self.labels[r])));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            let n = self.buf.len();
            let total_pos = self.buf.iter().filter(|x| x.1).count() as f64;
            let mut left_pos = 0.0;
            for i in 0..n - 1 {
                left_pos += f64::from(u8::from(self.buf[i].1));
                let (a, b) = (self.buf[i].0, self.buf[i + 1].0);
                if a == b || i + 1 < self.min_leaf || n - i - 1 < self.min_leaf {
                    continue;
                }
                let nl = (i + 1) as f64;
                let impurity =
                    gini_mass(nl, left_pos) + gini_mass(n as f64 - nl, total_pos - left_pos);
                let threshold = a + (b - a) / 2.0;
                let better = match &best {
                    None => true,
                    Some(cur) => {
                        impurity < cur.impurity - TIE_TOLERANCE
                            || (impurity <= cur.impurity + TIE_TOLERANCE
                                && (c, threshold) < (cur.column, cur.threshold))
                    }
                };
                if better {
                    best = Some(Candidate {
                        column: c,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

fn partition<T>(xs: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let mut i = 0;
    for j in 0..xs.len() {
        if pred(&xs[j]) {
            xs.swap(i, j);
            i += 1;
        }
    }
    i
}

/// Trains `n_trees` Gini trees. Tree `k` draws from its own stream
/// derived from `(seed, k)`, so the model does not depend on the number of
/// worker threads.
pub fn train_forest(t: &FeatureTable, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    let labels = t
        .labels()
        .ok_or_else(|| argument("training table has no labels"))?;
    if t.n_rows() < 2 {
        return Err(argument("need at least 2 rows to train"));
    }
    if params.min_leaf == 0 || params.n_trees == 0 {
        return Err(argument("n_trees and min_leaf must be positive"));
    }
    let mtry = params
        .mtry
        .unwrap_or_else(|| (t.n_cols() as f64).sqrt().ceil() as usize);
    if mtry == 0 || mtry > t.n_cols() {
        return Err(argument(format!(
            "mtry {mtry} must be in 1..={}",
            t.n_cols()
        )));
    }
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, &[k as u64]);
            let n = t.n_rows();
            let mut rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut g = Grower {
                t,
                labels,
                max_depth: params.max_depth.unwrap_or(usize::MAX),
                mtry,
                min_leaf: params.min_leaf,
                rng,
                nodes: Vec::new(),
                buf: Vec::with_capacity(n),
                columns: (0..t.n_cols()).collect(),
            };
            g.grow(&mut rows, 0);
            Tree { nodes: g.nodes }
        })
        .collect();
    Ok(ForestModel {
        columns: t.columns().to_vec(),
        trees,
        params: *params,
        mtry,
        seed,
    })
}

/// Mean leaf value across trees, one score per row.
pub fn forest_predict(m: &ForestModel, t: &FeatureTable) -> Result<Vec<f64>> {
    if m.columns != t.columns() {
        return Err(Error::Schema(format!(
            "table columns [{}] differ from model columns [{}]",
            t.columns().join(","),
            m.columns.join(",")
        )));
    }
    Ok((0..t.n_rows())
        .map(|i| {
            let x = t.row(i);
            m.trees.iter().map(|tree| tree.predict(x)).sum::<f64>() / m.trees.len() as f64
        })
        .collect())
}

/// Total Gini decrease per column over all trees, normalized to sum 1, in
/// descending order with ties by column index. All zeros when no tree
/// splits.
pub fn feature_importances(m: &ForestModel) -> Vec<(String, f64)> {
    let mut total = vec![0.0; m.columns.len()];
    for tree in &m.trees {
        for node in &tree.nodes {
            if let TreeNode::Split { column, gain, .. } = *node {
                total[column] += gain;
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|x| *x /= sum);
    }
    let mut ranked: Vec<(usize, f64)> = total.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .map(|(i, v)| (m.columns[i].clone(), v))
        .collect()
}

/// Area under the ROC curve as the Mann-Whitney statistic: concordant
/// positive/negative pairs plus half of the tied pairs, over all pairs.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(argument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(argument("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs both positive and negative labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut concordant, mut tied, mut neg_below) = (0u128, 0u128, 0u128);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        concordant += p * neg_below;
        tied += p * q;
        neg_below += q;
        i = j;
    }
    Ok((2 * concordant + tied) as f64 / (2 * n_pos * n_neg) as f64)
}

impl ForestModel {
    /// Text form: a parameter line, a column line, then one `tree` block
    /// per tree with its preorder nodes (`S column threshold gain` or
    /// `L value`).
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = &self.params;
        writeln!(
            w,
            "forest n_trees={} max_depth={} mtry={} min_leaf={} bootstrap={} seed={}",
            p.n_trees,
            p.max_depth.map_or("none".to_string(), |d| d.to_string()),
            self.mtry,
            p.min_leaf,
            p.bootstrap,
            self.seed
        )?;
        writeln!(w, "columns {}", self.columns.join(","))?;
        for (k, tree) in self.trees.iter().enumerate() {
            let mut block = format!("tree {k}\n");
            for node in &tree.nodes {
                match node {
                    TreeNode::Split {
                        column,
                        threshold,
                        gain,
                        ..
                    } => writeln!(block, "S {column} {threshold} {gain}"),
                    TreeNode::Leaf { value } => writeln!(block, "L {value}"),
                }
                .expect("writing to a String");
            }
            w.write_all(block.as_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |m: String| Error::Syntax(format!("forest model: {m}"));
        let lines: Vec<String> = reader
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io("<forest>", e))?;
        let mut it = lines.iter().filter(|l| !l.trim().is_empty());
        let header = it.next().ok_or_else(|| bad("empty file".into()))?;
        let mut fields = std::collections::HashMap::new();
        for kv in header.split_whitespace().skip(1) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("bad field `{kv}`")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| bad(format!("missing `{k}`")))
        };
        let num =
            |k: &str| -> Result<u64> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
        let max_depth = match get("max_depth")? {
            "none" => None,
            d => Some(d.parse().map_err(|_| bad("bad `max_depth`".into()))?),
        };
        let params = ForestParams {
            n_trees: num("n_trees")? as usize,
            max_depth,
            mtry: Some(num("mtry")? as usize),
            min_leaf: num("min_leaf")? as usize,
            bootstrap: get("bootstrap")? == "true",
        };
        let columns: Vec<String> = it
            .next()
            .and_then(|l| l.strip_prefix("columns "))
            .ok_or_else(|| bad("missing columns line".into()))?
            .split(',')
            .map(str::to_owned)
            .collect();
        let mut flat: Vec<Vec<(char, Vec<f64>)>> = Vec::new();
        for line in it {
            if line.starts_with("tree") {
                flat.push(Vec::new());
                continue;
            }
            let cur = flat
                .last_mut()
                .ok_or_else(|| bad("node before first tree".into()))?;
            let mut tok = line.split_whitespace();
            let tag = tok.next().and_then(|t| t.chars().next()).unwrap_or(' ');
            let vals: Vec<f64> = tok
                .map(|t| t.parse().map_err(|_| bad(format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            cur.push((tag, vals));
        }
        let mut trees = Vec::with_capacity(flat.len());
        for raw in flat {
            let mut nodes = vec![TreeNode::Leaf { value: 0.0 }; raw.len()];
            let end = rebuild(&raw, 0, &mut nodes, columns.len()).map_err(bad)?;
            if end != raw.len() {
                return Err(bad("trailing nodes in tree".into()));
            }
            trees.push(Tree { nodes });
        }
        if trees.len() != params.n_trees {
            return Err(bad(format!(
                "{} trees, header says {}",
                trees.len(),
                params.n_trees
            )));
        }
        Ok(Self {
            columns,
            trees,
            params,
            mtry: params.mtry.unwrap_or(1),
            seed: num("seed")?,
        })
    }
}

/// Rebuilds the subtree starting at preorder index `i`; returns the index
/// after it.
fn rebuild(
    raw: &[(char, Vec<f64>)],
    i: usize,
    out: &mut [TreeNode],
    n_cols: usize,
) -> std::result::Result<usize, String> {
    let (tag, vals) = raw.get(i).ok_or("truncated tree")?;
    match (tag, vals.as_slice()) {
        ('L', [value]) if (0.0..=1.0).contains(value) => {
            out[i] = TreeNode::Leaf { value: *value };
            Ok(i + 1)
        }
        ('S', [column, threshold, gain]) if (*column as usize) < n_cols => {
            let right = rebuild(raw, i + 1, out, n_cols)?;
            let end = rebuild(raw, right, out, n_cols)?;
            out[i] = TreeNode::Split {
                column: *column as usize,
                threshold: *threshold,
                gain: *gain,
                right,
            };
            Ok(end)
        }
        _ => Err(format!("bad node {tag} {vals:?}")),
    }
}
