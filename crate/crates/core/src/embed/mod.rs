//! Node representation learning over walk corpora.
//!
//! [`train_metapath2vec`] is skip-gram with negative sampling on meta-path
//! walks. [`train_hin2vec`] jointly learns node and relation vectors by
//! predicting whether a meta-path relation links two nodes. Pair features
//! for downstream classifiers come from [`edge_feature`].

mod hin2vec;
mod sampler;
mod sgns;

use std::io::{BufRead, Write};

use crate::error::{argument, Error, Result};
use crate::graph::HinGraph;

pub use hin2vec::{
    hin2vec_gradient, hin2vec_loss, relations_from_metapath, train_hin2vec, Hin2vecParams,
    MetaPathEmbeddings, DEFAULT_HIN2VEC_WINDOW,
};
pub use sgns::{sgns_gradient, sgns_loss, train_metapath2vec, SgnsParams};

/// Dense vectors for every node of a graph, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub trained_epochs: usize,
}

impl EmbeddingSet {
    pub fn node_count(&self) -> usize {
        self.center.len() / self.dim
    }

    /// The representation vector of node `index`.
    pub fn vector(&self, index: usize) -> &[f64] {
        &self.center[index * self.dim..(index + 1) * self.dim]
    }

    pub fn context_vector(&self, index: usize) -> &[f64] {
        &self.context[index * self.dim..(index + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.center
            .iter()
            .chain(&self.context)
            .all(|x| x.is_finite())
    }

    /// word2vec text format: `<count> <dim>` then `<external_id> <floats>`
    /// per node in internal id order.
    pub fn write<W: Write>(&self, g: &HinGraph, w: W) -> std::io::Result<()> {
        let ids = g.node_table().iter().map(|(_, n)| n.external_id.as_str());
        write_vectors(w, self.dim, ids, self.center.chunks(self.dim))
    }

    /// Reads the text format. Rows must follow the graph's node order.
    pub fn read<R: BufRead>(g: &HinGraph, reader: R) -> Result<Self> {
        let (dim, rows) = read_vectors(reader)?;
        if rows.len() != g.node_count() {
            return Err(Error::Schema(format!(
                "embedding file has {} rows, graph has {} nodes",
                rows.len(),
                g.node_count()
            )));
        }
        let mut center = Vec::with_capacity(rows.len() * dim);
        for (i, ((id, vec), (_, node))) in rows.into_iter().zip(g.node_table().iter()).enumerate() {
            if id != node.external_id {
                return Err(Error::Schema(format!(
                    "embedding row {} is `{id}`, expected `{}`",
                    i + 2,
                    node.external_id
                )));
            }
            center.extend(vec);
        }
        let context = center.clone();
        Ok(Self {
            dim,
            center,
            context,
            trained_epochs: 0,
        })
    }
}

pub(crate) fn write_vectors<'a, W: Write>(
    mut w: W,
    dim: usize,
    ids: impl Iterator<Item = &'a str>,
    rows: impl ExactSizeIterator<Item = &'a [f64]>,
) -> std::io::Result<()> {
    writeln!(w, "{} {}", rows.len(), dim)?;
    for (id, row) in ids.zip(rows) {
        write!(w, "{id}")?;
        for x in row {
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

type NamedVectors = Vec<(String, Vec<f64>)>;

pub(crate) fn read_vectors<R: BufRead>(reader: R) -> Result<(usize, NamedVectors)> {
    let bad = |m: String| Error::Syntax(format!("vector file: {m}"));
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("missing header".into()))?
        .map_err(|e| Error::io("<vectors>", e))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(format!("bad header `{header}`"))))
        .collect::<Result<_>>()?;
    let [count, dim] = nums[..] else {
        return Err(bad(format!(
            "header must be `<count> <dim>`, got `{header}`"
        )));
    };
    let mut rows = Vec::with_capacity(count);
    for (i, line) in lines.take(count).enumerate() {
        let line = line.map_err(|e| Error::io("<vectors>", e))?;
        let mut tokens = line.split_whitespace();
        let id = tokens
            .next()
            .ok_or_else(|| bad(format!("line {}: empty", i + 2)))?
            .to_owned();
        let vec: Vec<f64> = tokens
            .map(|t| {
                t.parse()
                    .map_err(|_| bad(format!("line {}: bad float `{t}`", i + 2)))
            })
            .collect::<Result<_>>()?;
        if vec.len() != dim {
            return Err(bad(format!(
                "line {}: {} values, expected {dim}",
                i + 2,
                vec.len()
            )));
        }
        rows.push((id, vec));
    }
    if rows.len() != count {
        return Err(bad(format!("expected {count} rows, found {}", rows.len())));
    }
    Ok((dim, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeOp {
    #[default]
    Hadamard,
}

/// Pair representation from two node vectors.
pub fn edge_feature(u: &[f64], v: &[f64], op: EdgeOp) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(argument(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    match op {
        EdgeOp::Hadamard => Ok(u.iter().zip(v).map(|(a, b)| a * b).collect()),
    }
}

/// Mean per-sample loss of each training epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln(sigmoid(x))` without overflow.
#[inline]
pub(crate) fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
