//! Matrix factorization baselines.
//!
//! [`train_pmf`] factorizes the binary user-video donation matrix.
//! [`train_cmf`] adds the user-user follow matrix and shares the user
//! factors between both. Unobserved cells are sampled as zeros.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::embed::{read_vectors, write_vectors};
use crate::error::{argument, Error, Result};
use crate::graph::{EdgeKind, HinGraph, NodeKind};
use crate::rng::{self, Rng};

/// Sparse matrix with entries sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    entries: Vec<(u32, u32, f64)>,
    row_ptr: Vec<usize>,
}

impl SparseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, mut entries: Vec<(u32, u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(argument(format!(
                    "duplicate entry ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        for &(r, c, v) in &entries {
            if r as usize >= n_rows || c as usize >= n_cols {
                return Err(argument(format!(
                    "entry ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            if !v.is_finite() {
                return Err(argument(format!("entry ({r}, {c}) is not finite")));
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(r, _, _) in &entries {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n_rows,
            n_cols,
            entries,
            row_ptr,
        })
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn row(&self, r: usize) -> &[(u32, u32, f64)] {
        &self.entries[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row(r)
            .binary_search_by_key(&(c as u32), |&(_, col, _)| col)
            .is_ok()
    }
}

/// Binary matrix of `kind` edges. Rows are users in ordinal order, columns
/// are videos for donations and users for follows.
pub fn build_interaction_matrix(g: &HinGraph, kind: EdgeKind) -> SparseMatrix {
    let (_, dst_kind) = kind.endpoint_kinds();
    let mut cells: Vec<(u32, u32, f64)> = g
        .edges()
        .iter()
        .filter(|e| e.kind == kind)
        .map(|e| (g.ordinal(e.src) as u32, g.ordinal(e.dst) as u32, 1.0))
        .collect();
    cells.sort_by_key(|&(r, c, _)| (r, c));
    cells.dedup_by_key(|&mut (r, c, _)| (r, c));
    SparseMatrix::new(
        g.nodes_of_kind(NodeKind::User).len(),
        g.nodes_of_kind(dst_kind).len(),
        cells,
    )
    .expect("cells come from a valid graph")
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MfParams {
    pub rank: usize,
    pub reg: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub neg_ratio: f64,
    /// CMF weight of the donation loss.
    pub alpha: f64,
}

impl Default for MfParams {
    fn default() -> Self {
        Self {
            rank: 64,
            reg: 0.01,
            epochs: 100,
            learning_rate: 0.05,
            neg_ratio: 4.0,
            alpha: 0.7,
        }
    }
}

/// Row-major factor matrices. `context` holds the follow-matrix column
/// factors of a CMF model.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub rank: usize,
    pub row: Vec<f64>,
    pub col: Vec<f64>,
    pub context: Option<Vec<f64>>,
}

impl Factors {
    pub fn n_rows(&self) -> usize {
        self.row.len() / self.rank
    }

    pub fn n_cols(&self) -> usize {
        self.col.len() / self.rank
    }

    pub fn row_vector(&self, i: usize) -> &[f64] {
        &self.row[i * self.rank..(i + 1) * self.rank]
    }

    pub fn col_vector(&self, j: usize) -> &[f64] {
        &self.col[j * self.rank..(j + 1) * self.rank]
    }

    pub fn is_finite(&self) -> bool {
        self.row
            .iter()
            .chain(&self.col)
            .chain(self.context.iter().flatten())
            .all(|x| x.is_finite())
    }

    /// Embedding text format, one block per role, each introduced by a
    /// `#role row|col|context` line. Row ids are users, column ids videos.
    pub fn write<W: Write>(&self, g: &HinGraph, mut w: W) -> std::io::Result<()> {
        let ids = |kind: NodeKind| {
            g.nodes_of_kind(kind)
                .iter()
                .map(|&n| g.node(n).external_id.as_str())
        };
        writeln!(w, "#role row")?;
        write_vectors(
            &mut w,
            self.rank,
            ids(NodeKind::User),
            self.row.chunks(self.rank),
        )?;
        writeln!(w, "#role col")?;
        write_vectors(
            &mut w,
            self.rank,
            ids(NodeKind::Video),
            self.col.chunks(self.rank),
        )?;
        if let Some(ctx) = &self.context {
            writeln!(w, "#role context")?;
            write_vectors(
                &mut w,
                self.rank,
                ids(NodeKind::User),
                ctx.chunks(self.rank),
            )?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(g: &HinGraph, reader: R) -> Result<Self> {
        let mut blocks: Vec<(String, String)> = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io("<factors>", e))?;
            if let Some(role) = line.strip_prefix("#role ") {
                blocks.push((role.trim().to_owned(), String::new()));
            } else if let Some((_, body)) = blocks.last_mut() {
                body.push_str(&line);
                body.push('\n');
            } else if !line.trim().is_empty() {
                return Err(Error::Syntax("factor file must start with `#role`".into()));
            }
        }
        let mut rank = None;
        let mut parse = |kind: NodeKind, body: &str| -> Result<Vec<f64>> {
            let (dim, rows) = read_vectors(body.as_bytes())?;
            if *rank.get_or_insert(dim) != dim {
                return Err(Error::Schema("factor blocks disagree on rank".into()));
            }
            let expected = g.nodes_of_kind(kind);
            if rows.len() != expected.len() {
                return Err(Error::Schema(format!(
                    "factor block has {} rows, graph has {} {} nodes",
                    rows.len(),
                    expected.len(),
                    kind
                )));
            }
            let mut out = Vec::with_capacity(rows.len() * dim);
            for ((id, v), &n) in rows.into_iter().zip(expected) {
                if id != g.node(n).external_id {
                    return Err(Error::Schema(format!(
                        "factor row `{id}` out of order, expected `{}`",
                        g.node(n).external_id
                    )));
                }
                out.extend(v);
            }
            Ok(out)
        };
        let (mut row, mut col, mut context) = (None, None, None);
        for (role, body) in &blocks {
            match role.as_str() {
                "row" => row = Some(parse(NodeKind::User, body)?),
                "col" => col = Some(parse(NodeKind::Video, body)?),
                "context" => context = Some(parse(NodeKind::User, body)?),
                other => return Err(Error::Syntax(format!("unknown factor role `{other}`"))),
            }
        }
        match (row, col, rank) {
            (Some(row), Some(col), Some(rank)) => Ok(Self {
                rank,
                row,
                col,
                context,
            }),
            _ => Err(Error::Syntax("factor file needs row and col blocks".into())),
        }
    }
}

/// `dot(row_factors[user], col_factors[video])` by ordinal.
pub fn mf_score(f: &Factors, user: usize, video: usize) -> Result<f64> {
    if user >= f.n_rows() || video >= f.n_cols() {
        return Err(argument(format!(
            "index ({user}, {video}) outside {}x{} factors",
            f.n_rows(),
            f.n_cols()
        )));
    }
    Ok(f.row_vector(user)
        .iter()
        .zip(f.col_vector(video))
        .map(|(a, b)| a * b)
        .sum())
}

fn gaussian(rng: &mut Rng, n: usize, rank: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 0.1 / (rank as f64).sqrt()).expect("positive std");
    (0..n * rank).map(|_| normal.sample(rng)).collect()
}

/// SGD step on one cell with loss
/// `weight * (0.5 (r - u.v)^2 + 0.5 reg (|u|^2 + |v|^2))`. Returns the
/// pre-step loss.
fn cell_step(u: &mut [f64], v: &mut [f64], r: f64, reg: f64, step: f64) -> f64 {
    let pred: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    let e = r - pred;
    let mut norm = 0.0;
    for k in 0..u.len() {
        let (a, b) = (u[k], v[k]);
        norm += a * a + b * b;
        u[k] += step * (e * b - reg * a);
        v[k] += step * (e * a - reg * b);
    }
    0.5 * e * e + 0.5 * reg * norm
}

fn rows_mut<'a>(
    a: &'a mut [f64],
    i: usize,
    b: &'a mut [f64],
    j: usize,
    rank: usize,
) -> (&'a mut [f64], &'a mut [f64]) {
    (
        &mut a[i * rank..(i + 1) * rank],
        &mut b[j * rank..(j + 1) * rank],
    )
}

/// One pass over the observed cells of `m` in shuffled order, each followed
/// by sampled zeros from the same row. Returns the summed loss and the
/// number of updated cells.
#[allow(clippy::too_many_arguments)]
fn epoch_pass(
    m: &SparseMatrix,
    u: &mut [f64],
    v: &mut [f64],
    rank: usize,
    p: &MfParams,
    weight: f64,
    order: &mut Vec<usize>,
    rng: &mut Rng,
) -> (f64, usize) {
    order.clear();
    order.extend(0..m.nnz());
    order.shuffle(rng);
    let whole = p.neg_ratio.floor() as usize;
    let frac = p.neg_ratio - whole as f64;
    let step = p.learning_rate * weight;
    let (mut loss, mut cells) = (0.0, 0usize);
    for &idx in order.iter() {
        let (i, j, r) = m.entries[idx];
        let (ui, vj) = rows_mut(u, i as usize, v, j as usize, rank);
        loss += cell_step(ui, vj, r, p.reg, step);
        cells += 1;
        let draws = whole + usize::from(frac > 0.0 && rng.random::<f64>() < frac);
        if m.row(i as usize).len() >= m.n_cols {
            continue;
        }
        for _ in 0..draws {
            let c = loop {
                let c = rng.random_range(0..m.n_cols);
                if !m.contains(i as usize, c) {
                    break c;
                }
            };
            let (ui, vc) = rows_mut(u, i as usize, v, c, rank);
            loss += cell_step(ui, vc, 0.0, p.reg, step);
            cells += 1;
        }
    }
    (loss * weight, cells)
}

fn check_rank(m: &SparseMatrix, rank: usize) -> Result<()> {
    if rank == 0 || rank > m.n_rows.min(m.n_cols) {
        return Err(argument(format!(
            "rank {rank} must be in 1..={}",
            m.n_rows.min(m.n_cols)
        )));
    }
    Ok(())
}

fn check_params(p: &MfParams) -> Result<()> {
    if !(p.reg >= 0.0 && p.neg_ratio >= 0.0 && p.learning_rate > 0.0) {
        return Err(argument(
            "reg and neg_ratio must be nonnegative, learning_rate positive",
        ));
    }
    if !(0.0..=1.0).contains(&p.alpha) {
        return Err(argument(format!("alpha {} outside [0, 1]", p.alpha)));
    }
    Ok(())
}

/// Mean loss per updated cell, one value per epoch.
pub type EpochLoss = Vec<f64>;

/// Probabilistic matrix factorization by SGD on observed ones plus
/// `neg_ratio` sampled zeros per positive and epoch.
pub fn train_pmf(m: &SparseMatrix, p: &MfParams, seed: u64) -> Result<(Factors, EpochLoss)> {
    train_cmf_inner(m, None, p, 1.0, seed)
}

/// Collective factorization of the donation matrix `m_uv` and the follow
/// matrix `m_uu`, minimizing `alpha L(m_uv; U, V) + (1 - alpha) L(m_uu; U,
/// W)`. Each epoch makes one pass over `m_uv`, then one over `m_uu`. A pass
/// with zero weight is skipped, so `alpha = 1` reproduces [`train_pmf`].
pub fn train_cmf(
    m_uv: &SparseMatrix,
    m_uu: &SparseMatrix,
    p: &MfParams,
    seed: u64,
) -> Result<(Factors, EpochLoss)> {
    if m_uu.n_rows != m_uv.n_rows || m_uu.n_cols != m_uv.n_rows {
        return Err(argument(format!(
            "follow matrix is {}x{}, expected {n}x{n}",
            m_uu.n_rows,
            m_uu.n_cols,
            n = m_uv.n_rows
        )));
    }
    train_cmf_inner(m_uv, Some(m_uu), p, p.alpha, seed)
}

fn train_cmf_inner(
    m_uv: &SparseMatrix,
    m_uu: Option<&SparseMatrix>,
    p: &MfParams,
    alpha: f64,
    seed: u64,
) -> Result<(Factors, EpochLoss)> {
    check_params(p)?;
    check_rank(m_uv, p.rank)?;
    if m_uu.is_none() && m_uv.nnz() == 0 {
        return Err(argument("interaction matrix has no entries"));
    }
    let rank = p.rank;
    let mut init = rng::stream(seed, &[0x3f]);
    let mut u = gaussian(&mut init, m_uv.n_rows, rank);
    let mut v = gaussian(&mut init, m_uv.n_cols, rank);
    let mut w = m_uu.map(|m| gaussian(&mut rng::stream(seed, &[0x3f, 2]), m.n_cols, rank));
    let mut rng_uv = rng::stream(seed, &[0x3f, 1]);
    let mut rng_uu = rng::stream(seed, &[0x3f, 3]);
    let mut order = Vec::new();
    let mut losses = Vec::with_capacity(p.epochs);
    for _ in 0..p.epochs {
        let (mut loss, mut cells) = (0.0, 0usize);
        if alpha > 0.0 {
            let (l, c) = epoch_pass(
                m_uv,
                &mut u,
                &mut v,
                rank,
                p,
                alpha,
                &mut order,
                &mut rng_uv,
            );
            loss += l;
            cells += c;
        }
        if let (Some(m), Some(w)) = (m_uu, w.as_mut()) {
            if alpha < 1.0 {
                let (l, c) =
                    epoch_pass(m, &mut u, w, rank, p, 1.0 - alpha, &mut order, &mut rng_uu);
                loss += l;
                cells += c;
            }
        }
        losses.push(loss / cells.max(1) as f64);
    }
    Ok((
        Factors {
            rank,
            row: u,
            col: v,
            context: w,
        },
        losses,
    ))
}

/// Loss of one cell: `0.5 (r - u.v)^2 + 0.5 reg (|u|^2 + |v|^2)`.
pub fn mf_loss(u: &[f64], v: &[f64], r: f64, reg: f64) -> f64 {
    cell_step(&mut u.to_vec(), &mut v.to_vec(), r, reg, 0.0)
}

/// Gradients of [`mf_loss`] taken from one unit-rate training step.
pub fn mf_gradient(u: &[f64], v: &[f64], r: f64, reg: f64) -> (Vec<f64>, Vec<f64>) {
    let (mut a, mut b) = (u.to_vec(), v.to_vec());
    cell_step(&mut a, &mut b, r, reg, 1.0);
    (
        u.iter().zip(&a).map(|(x, y)| x - y).collect(),
        v.iter().zip(&b).map(|(x, y)| x - y).collect(),
    )
}

/// CMF loss of a donation cell `(u, v, r_uv)` and a follow cell `(u, w,
/// r_uu)` sharing the user vector.
pub fn cmf_loss(
    u: &[f64],
    v: &[f64],
    w: &[f64],
    r_uv: f64,
    r_uu: f64,
    reg: f64,
    alpha: f64,
) -> f64 {
    alpha * mf_loss(u, v, r_uv, reg) + (1.0 - alpha) * mf_loss(u, w, r_uu, reg)
}

/// Gradients of [`cmf_loss`] for `u`, `v` and `w`, from the weighted steps
/// the trainer applies, both taken at the same point.
#[allow(clippy::type_complexity)]
pub fn cmf_gradient(
    u: &[f64],
    v: &[f64],
    w: &[f64],
    r_uv: f64,
    r_uu: f64,
    reg: f64,
    alpha: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let weighted = |other: &[f64], r: f64, weight: f64| {
        let (mut a, mut b) = (u.to_vec(), other.to_vec());
        cell_step(&mut a, &mut b, r, reg, weight);
        let gu: Vec<f64> = u.iter().zip(&a).map(|(x, y)| x - y).collect();
        let go: Vec<f64> = other.iter().zip(&b).map(|(x, y)| x - y).collect();
        (gu, go)
    };
    let (gu1, gv) = weighted(v, r_uv, alpha);
    let (gu2, gw) = weighted(w, r_uu, 1.0 - alpha);
    (gu1.iter().zip(&gu2).map(|(a, b)| a + b).collect(), gv, gw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, NodeId, NodeTable};

    fn rank_one() -> SparseMatrix {
        let rows = [1, 0, 1, 1, 0, 1];
        let cols = [1, 1, 0, 1, 0];
        let mut cells = Vec::new();
        for (i, &a) in rows.iter().enumerate() {
            for (j, &b) in cols.iter().enumerate() {
                if a * b == 1 {
                    cells.push((i as u32, j as u32, 1.0));
                }
            }
        }
        SparseMatrix::new(rows.len(), cols.len(), cells).unwrap()
    }

    #[test]
    fn interaction_matrix_is_binary() {
        let mut t = NodeTable::new();
        t.push("u0", NodeKind::User, Default::default()).unwrap();
        t.push("u1", NodeKind::User, Default::default()).unwrap();
        t.push("v0", NodeKind::Video, Default::default()).unwrap();
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
                e(0, 2, EdgeKind::Donate, 1),
                e(0, 2, EdgeKind::Donate, 2),
                e(0, 1, EdgeKind::Follow, 0),
            ],
        )
        .unwrap();
        let d = build_interaction_matrix(&g, EdgeKind::Donate);
        assert_eq!(d.entries(), &[(0, 0, 1.0)]);
        assert_eq!((d.n_rows, d.n_cols), (2, 1));
        let f = build_interaction_matrix(&g, EdgeKind::Follow);
        assert_eq!(f.entries(), &[(0, 1, 1.0)]);
        assert_eq!((f.n_rows, f.n_cols), (2, 2));
    }

    #[test]
    fn pmf_fits_rank_one() {
        let m = rank_one();
        let p = MfParams {
            rank: 1,
            reg: 0.0,
            epochs: 200,
            learning_rate: 0.05,
            neg_ratio: 0.0,
            ..Default::default()
        };
        let (f, losses) = train_pmf(&m, &p, 3).unwrap();
        let mse: f64 = m
            .entries()
            .iter()
            .map(|&(i, j, r)| (r - mf_score(&f, i as usize, j as usize).unwrap()).powi(2))
            .sum::<f64>()
            / m.nnz() as f64;
        assert!(mse.sqrt() < 0.05, "rmse {}", mse.sqrt());
        assert!(losses[19] < losses[0]);
    }

    #[test]
    fn zero_epochs_and_alpha_one() {
        let m = rank_one();
        let p = MfParams {
            rank: 2,
            epochs: 0,
            ..Default::default()
        };
        let (a, _) = train_pmf(&m, &p, 8).unwrap();
        let mut init = rng::stream(8, &[0x3f]);
        assert_eq!(a.row, gaussian(&mut init, m.n_rows, 2));
        assert_eq!(a.col, gaussian(&mut init, m.n_cols, 2));

        let uu = SparseMatrix::new(6, 6, vec![(0, 2, 1.0), (3, 5, 1.0)]).unwrap();
        let p = MfParams {
            rank: 2,
            epochs: 7,
            alpha: 1.0,
            neg_ratio: 1.5,
            ..Default::default()
        };
        let (pmf, _) = train_pmf(&m, &p, 11).unwrap();
        let (cmf, _) = train_cmf(&m, &uu, &p, 11).unwrap();
        assert_eq!(pmf.row, cmf.row);
        assert_eq!(pmf.col, cmf.col);
    }

    #[test]
    fn errors() {
        let m = rank_one();
        let p = MfParams {
            rank: 6,
            ..Default::default()
        };
        assert!(train_pmf(&m, &p, 1).is_err());
        let bad = SparseMatrix::new(5, 5, vec![]).unwrap();
        assert!(train_cmf(&m, &bad, &MfParams { rank: 2, ..p }, 1).is_err());
        assert!(SparseMatrix::new(2, 2, vec![(0, 0, 1.0), (0, 0, 1.0)]).is_err());
        assert!(SparseMatrix::new(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn scores() {
        let f = Factors {
            rank: 3,
            row: vec![1.0; 3],
            col: vec![1.0; 3],
            context: None,
        };
        assert_eq!(mf_score(&f, 0, 0).unwrap(), 3.0);
        assert!(mf_score(&f, 1, 0).is_err());
        let z = Factors {
            rank: 2,
            row: vec![0.0; 2],
            col: vec![0.0; 2],
            context: None,
        };
        assert_eq!(mf_score(&z, 0, 0).unwrap(), 0.0);
    }
}
