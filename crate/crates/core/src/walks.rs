//! Meta-path guided random walks.
//!
//! A meta-path such as `U-U-V-U-U` constrains the node kind at every walk
//! position. When the first and last kinds agree the path tiles: the last
//! node of one instance is the first node of the next, so a long walk
//! follows `U U V U | U V U | ...` with period `len - 1`. Paths whose ends
//! differ do not tile and cap walks at their own length.
//!
//! Steps ignore edge direction and pick uniformly among the distinct typed
//! neighbors. A walk that reaches a node without an eligible neighbor is
//! truncated there.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{argument, Error, Result};
use crate::graph::{Direction, EdgeKind, HinGraph, NodeId, NodeKind};
use crate::rng;

pub const DEFAULT_WALKS_PER_NODE: usize = 10;
pub const DEFAULT_WALK_LENGTH: usize = 80;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MetaPath {
    kinds: Vec<NodeKind>,
}

impl MetaPath {
    pub fn new(kinds: Vec<NodeKind>) -> Result<Self> {
        if kinds.len() < 2 {
            return Err(argument("a meta-path needs at least 2 node kinds"));
        }
        for pair in kinds.windows(2) {
            if EdgeKind::between(pair[0], pair[1]).is_none() {
                return Err(Error::Schema(format!(
                    "no edge kind joins {}-{}",
                    pair[0].token(),
                    pair[1].token()
                )));
            }
        }
        Ok(Self { kinds })
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn hops(&self) -> usize {
        self.kinds.len() - 1
    }

    pub fn tiles(&self) -> bool {
        self.kinds.first() == self.kinds.last()
    }

    /// Required kind at walk position `i`, or `None` past the end of a
    /// non-tiling path.
    pub fn kind_at(&self, i: usize) -> Option<NodeKind> {
        if self.tiles() {
            Some(self.kinds[i % self.hops()])
        } else {
            self.kinds.get(i).copied()
        }
    }

    /// Edge kind of each step.
    pub fn edge_kinds(&self) -> Vec<EdgeKind> {
        self.kinds
            .windows(2)
            .map(|p| EdgeKind::between(p[0], p[1]).expect("validated"))
            .collect()
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tokens: Vec<&str> = self.kinds.iter().map(|k| k.token()).collect();
        f.write_str(&tokens.join("-"))
    }
}

impl FromStr for MetaPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_metapath(s)
    }
}

/// Parses a dash-separated meta-path like `U-U-V-U-U`.
pub fn parse_metapath(spec: &str) -> Result<MetaPath> {
    let kinds = spec
        .trim()
        .split('-')
        .map(|t| match t.trim() {
            "U" => Ok(NodeKind::User),
            "V" => Ok(NodeKind::Video),
            other => Err(Error::Syntax(format!(
                "unknown meta-path token `{other}` in `{spec}` (expected U or V)"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    MetaPath::new(kinds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<NodeId>>,
    pub metapath: MetaPath,
    pub seed: u64,
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Set when no node matched the first meta-path kind.
    pub no_start_nodes: bool,
}

impl WalkCorpus {
    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }

    /// Text form: a `#` header line with the parameters, then one walk per
    /// line as space-separated external ids.
    pub fn write<W: Write>(&self, g: &HinGraph, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# metapath={} seed={} walks_per_node={} walk_length={}",
            self.metapath, self.seed, self.walks_per_node, self.walk_length
        )?;
        for walk in &self.walks {
            let ids: Vec<&str> = walk
                .iter()
                .map(|&n| g.node(n).external_id.as_str())
                .collect();
            writeln!(w, "{}", ids.join(" "))?;
        }
        Ok(())
    }

    /// Reads the text form, resolving ids with the meta-path kinds.
    pub fn read<R: BufRead>(g: &HinGraph, reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let bad = |m: String| Error::Syntax(format!("walk corpus: {m}"));
        let header = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .map_err(|e| Error::io("<corpus>", e))?;
        let mut metapath = None;
        let (mut seed, mut wpn, mut len) = (None, None, None);
        for field in header.trim_start_matches('#').split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header field `{field}`")))?;
            let num = || {
                v.parse::<u64>()
                    .map_err(|_| bad(format!("bad value `{v}`")))
            };
            match k {
                "metapath" => metapath = Some(parse_metapath(v)?),
                "seed" => seed = Some(num()?),
                "walks_per_node" => wpn = Some(num()? as usize),
                "walk_length" => len = Some(num()? as usize),
                _ => return Err(bad(format!("unknown header field `{k}`"))),
            }
        }
        let metapath = metapath.ok_or_else(|| bad("header lacks metapath".into()))?;
        let mut walks = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io("<corpus>", e))?;
            let walk = line
                .split_whitespace()
                .enumerate()
                .map(|(pos, id)| {
                    let kind = metapath.kind_at(pos).ok_or_else(|| {
                        bad(format!("line {}: walk longer than meta-path", i + 2))
                    })?;
                    g.find(id, kind)
                        .ok_or_else(|| bad(format!("line {}: unknown {kind} `{id}`", i + 2)))
                })
                .collect::<Result<Vec<_>>>()?;
            if !walk.is_empty() {
                walks.push(walk);
            }
        }
        Ok(Self {
            walks,
            metapath,
            seed: seed.unwrap_or(0),
            walks_per_node: wpn.unwrap_or(0),
            walk_length: len.unwrap_or(0),
            no_start_nodes: false,
        })
    }
}

/// Generates `walks_per_node` walks from every node of the meta-path's
/// first kind. Walk `r` from start node `s` draws from its own random
/// stream derived from `(seed, s, r)`, so the corpus does not depend on how
/// work is split across threads. Walks are ordered by round, then by start
/// node id.
pub fn generate_walks(
    g: &HinGraph,
    mp: &MetaPath,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
) -> Result<WalkCorpus> {
    if walks_per_node == 0 || walk_length == 0 {
        return Err(argument("walks_per_node and walk_length must be positive"));
    }
    let starts = g.nodes_of_kind(mp.kinds()[0]);
    let jobs: Vec<(usize, NodeId)> = (0..walks_per_node)
        .flat_map(|round| starts.iter().map(move |&s| (round, s)))
        .collect();
    let walks = jobs
        .into_par_iter()
        .map(|(round, start)| walk_from(g, mp, start, walk_length, seed, round))
        .collect();
    Ok(WalkCorpus {
        walks,
        metapath: mp.clone(),
        seed,
        walks_per_node,
        walk_length,
        no_start_nodes: starts.is_empty(),
    })
}

fn walk_from(
    g: &HinGraph,
    mp: &MetaPath,
    start: NodeId,
    length: usize,
    seed: u64,
    round: usize,
) -> Vec<NodeId> {
    let mut rng = rng::stream(seed, &[u64::from(start.0), round as u64]);
    let mut walk = Vec::with_capacity(length);
    walk.push(start);
    let mut cur = start;
    let mut cur_kind = g.kind(start);
    for pos in 1..length {
        let Some(next_kind) = mp.kind_at(pos) else {
            break;
        };
        let edge = EdgeKind::between(cur_kind, next_kind).expect("validated meta-path");
        // Both-direction adjacency of one edge kind already holds only the
        // opposite endpoint kind, so no filtering is needed.
        let options = g.neighbors(cur, edge, Direction::Both);
        if options.is_empty() {
            break;
        }
        cur = options[rng.random_range(0..options.len())];
        cur_kind = next_kind;
        walk.push(cur);
    }
    walk
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, NodeTable};

    fn users_graph(n: usize, follows: &[(u32, u32)]) -> HinGraph {
        let mut t = NodeTable::new();
        for i in 0..n {
            t.push(format!("u{i}"), NodeKind::User, Default::default())
                .unwrap();
        }
        let edges = follows
            .iter()
            .map(|&(a, b)| Edge {
                src: NodeId(a),
                dst: NodeId(b),
                kind: EdgeKind::Follow,
                weight: 1.0,
                timestamp: 0,
            })
            .collect();
        HinGraph::build(t, edges).unwrap()
    }

    #[test]
    fn parses_paths() {
        use NodeKind::*;
        let mp = parse_metapath("U-U-V-U-U").unwrap();
        assert_eq!(mp.kinds(), &[User, User, Video, User, User]);
        assert_eq!(mp.to_string(), "U-U-V-U-U");
        assert_eq!(parse_metapath("U-V").unwrap().kinds(), &[User, Video]);
        assert!(matches!(parse_metapath("V-V"), Err(Error::Schema(_))));
        assert!(matches!(parse_metapath("U-X"), Err(Error::Syntax(_))));
        assert!(matches!(parse_metapath("U"), Err(Error::Argument(_))));
    }

    #[test]
    fn tiling() {
        use NodeKind::*;
        let mp = parse_metapath("U-U-V-U-U").unwrap();
        let kinds: Vec<NodeKind> = (0..9).map(|i| mp.kind_at(i).unwrap()).collect();
        assert_eq!(
            kinds,
            vec![User, User, Video, User, User, User, Video, User, User]
        );
        let open = parse_metapath("U-V").unwrap();
        assert!(!open.tiles());
        assert_eq!(open.kind_at(2), None);
    }

    #[test]
    fn forced_alternation_on_a_path() {
        let g = users_graph(2, &[(0, 1)]);
        let mp = parse_metapath("U-U").unwrap();
        let c = generate_walks(&g, &mp, 3, 4, 1).unwrap();
        assert_eq!(c.walks.len(), 6);
        for w in &c.walks {
            assert_eq!(w.len(), 4);
            for pair in w.windows(2) {
                assert_ne!(pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn dead_end_truncates() {
        let g = users_graph(2, &[]);
        let mp = parse_metapath("U-U").unwrap();
        let c = generate_walks(&g, &mp, 1, 5, 1).unwrap();
        assert!(c.walks.iter().all(|w| w.len() == 1));
    }

    #[test]
    fn no_start_nodes_is_flagged() {
        let g = users_graph(2, &[(0, 1)]);
        let mp = parse_metapath("V-U").unwrap();
        let c = generate_walks(&g, &mp, 2, 5, 1).unwrap();
        assert!(c.walks.is_empty());
        assert!(c.no_start_nodes);
    }

    #[test]
    fn star_leaves_are_uniform() {
        let g = users_graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let mp = parse_metapath("U-U").unwrap();
        let c = generate_walks(&g, &mp, 30_000, 2, 11).unwrap();
        let mut hits = [0usize; 4];
        for w in c.walks.iter().filter(|w| w[0] == NodeId(0)) {
            hits[w[1].index()] += 1;
        }
        for (leaf, &h) in hits.iter().enumerate().skip(1) {
            let f = h as f64 / 30_000.0;
            assert!((f - 1.0 / 3.0).abs() < 0.01, "leaf {leaf}: {f}");
        }
    }

    #[test]
    fn corpus_text_round_trip() {
        let g = users_graph(3, &[(0, 1), (1, 2)]);
        let mp = parse_metapath("U-U").unwrap();
        let c = generate_walks(&g, &mp, 2, 6, 5).unwrap();
        let mut buf = Vec::new();
        c.write(&g, &mut buf).unwrap();
        let back = WalkCorpus::read(&g, buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }
}
