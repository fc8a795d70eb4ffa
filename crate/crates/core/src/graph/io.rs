//! Node and edge file formats.
//!
//! Node file, one node per line:
//!
//! ```text
//! external_id,kind,{"attr":123,...}
//! ```
//!
//! Edge file, one edge per line:
//!
//! ```text
//! src_external,dst_external,kind,weight,timestamp
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. External ids may not
//! contain commas. Only the first two commas of a node line are separators,
//! so the attribute object may contain commas.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{Edge, EdgeKind, HinGraph, NodeId, NodeKind, NodeTable};
use crate::error::{Error, Result};

pub const NODE_FILE: &str = "nodes.csv";
pub const EDGE_FILE: &str = "edges.csv";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Yields `(line_number, content)` for every non-comment, non-blank line.
fn data_lines<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a Path,
) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Err(e) => Some(Err(Error::io(path, e))),
            Ok(l) => {
                let t = l.trim();
                if t.is_empty() || t.starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, t.to_owned())))
                }
            }
        })
}

pub fn ingest_nodes(path: impl AsRef<Path>) -> Result<NodeTable> {
    let path = path.as_ref();
    parse_nodes(open(path)?, path)
}

/// Parses a node file. `path` is only used in error messages.
pub fn parse_nodes<R: BufRead>(reader: R, path: &Path) -> Result<NodeTable> {
    let mut table = NodeTable::new();
    let mut first_line: Vec<usize> = Vec::new();
    for item in data_lines(reader, path) {
        let (line, text) = item?;
        let mut parts = text.splitn(3, ',');
        let (Some(id), Some(kind), Some(attrs)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(
                path,
                line,
                "expected `external_id,kind,attrs-json`",
            ));
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty external id"));
        }
        let kind: NodeKind = kind.trim().parse().map_err(|m| parse_err(path, line, m))?;
        let attrs = parse_attrs(attrs.trim()).map_err(|m| parse_err(path, line, m))?;
        match table.push(id, kind, attrs) {
            Ok(_) => first_line.push(line),
            Err(existing) => {
                return Err(Error::Conflict {
                    path: path.to_path_buf(),
                    line,
                    first_line: first_line[existing.index()],
                    id: id.to_owned(),
                    kind: kind.as_str(),
                })
            }
        }
    }
    Ok(table)
}

fn parse_attrs(text: &str) -> std::result::Result<BTreeMap<String, u64>, String> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| format!("bad attribute JSON: {e}"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| "attributes must be a JSON object".to_owned())?;
    obj.iter()
        .map(|(k, v)| {
            v.as_u64()
                .map(|n| (k.clone(), n))
                .ok_or_else(|| format!("attribute `{k}` must be a nonnegative integer, got {v}"))
        })
        .collect()
}

pub fn ingest_edges(path: impl AsRef<Path>, nodes: &NodeTable) -> Result<Vec<Edge>> {
    let path = path.as_ref();
    parse_edges(open(path)?, path, nodes)
}

/// Parses an edge file against an already loaded node table.
pub fn parse_edges<R: BufRead>(reader: R, path: &Path, nodes: &NodeTable) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    for item in data_lines(reader, path) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let [src, dst, kind, weight, timestamp] = fields[..] else {
            return Err(parse_err(
                path,
                line,
                format!(
                    "expected 5 fields `src,dst,kind,weight,timestamp`, got {}",
                    fields.len()
                ),
            ));
        };
        let kind: EdgeKind = kind.parse().map_err(|m| parse_err(path, line, m))?;
        let weight: f64 = weight
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad weight `{weight}`")))?;
        let timestamp: i64 = timestamp
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad timestamp `{timestamp}`")))?;

        let (src_kind, dst_kind) = kind.endpoint_kinds();
        let src_id = resolve(nodes, path, line, src, src_kind, kind, "source")?;
        let dst_id = resolve(nodes, path, line, dst, dst_kind, kind, "destination")?;
        let edge = Edge {
            src: src_id,
            dst: dst_id,
            kind,
            weight,
            timestamp,
        };
        edge.validate(nodes)
            .map_err(|e| Error::Schema(format!("{}:{line}: {e}", path.display())))?;
        edges.push(edge);
    }
    Ok(edges)
}

fn resolve(
    nodes: &NodeTable,
    path: &Path,
    line: usize,
    id: &str,
    want: NodeKind,
    edge: EdgeKind,
    role: &str,
) -> Result<NodeId> {
    if let Some(n) = nodes.find(id, want) {
        return Ok(n);
    }
    let other = NodeKind::ALL.into_iter().find(|&k| k != want).unwrap();
    if nodes.find(id, other).is_some() {
        return Err(Error::Schema(format!(
            "{}:{line}: {edge} {role} `{id}` is a {other}, expected {want}",
            path.display()
        )));
    }
    Err(Error::Reference {
        path: path.to_path_buf(),
        line,
        id: id.to_owned(),
    })
}

pub fn write_nodes<W: Write>(mut w: W, nodes: &NodeTable) -> std::io::Result<()> {
    for (_, node) in nodes.iter() {
        let attrs = serde_json::to_string(&node.attrs).expect("string-keyed map serializes");
        writeln!(w, "{},{},{}", node.external_id, node.kind, attrs)?;
    }
    Ok(())
}

pub fn write_edges<W: Write>(mut w: W, nodes: &NodeTable, edges: &[Edge]) -> std::io::Result<()> {
    for e in edges {
        writeln!(
            w,
            "{},{},{},{},{}",
            nodes[e.src].external_id, nodes[e.dst].external_id, e.kind, e.weight, e.timestamp
        )?;
    }
    Ok(())
}

/// Loads `nodes.csv` and `edges.csv` from a directory.
pub fn load_graph_dir(dir: impl AsRef<Path>) -> Result<HinGraph> {
    let dir = dir.as_ref();
    let nodes = ingest_nodes(dir.join(NODE_FILE))?;
    let edges = ingest_edges(dir.join(EDGE_FILE), &nodes)?;
    HinGraph::build(nodes, edges)
}

/// Writes `nodes.csv` and `edges.csv`; returns the two paths.
pub fn write_graph_dir(
    dir: impl AsRef<Path>,
    nodes: &NodeTable,
    edges: &[Edge],
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let node_path = dir.join(NODE_FILE);
    let edge_path = dir.join(EDGE_FILE);
    let write = |path: &Path, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    };
    write(&node_path, &|w| write_nodes(w, nodes))?;
    write(&edge_path, &|w| write_edges(w, nodes, edges))?;
    Ok((node_path, edge_path))
}
