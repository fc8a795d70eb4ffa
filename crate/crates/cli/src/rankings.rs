//! CSV exchange of ranked lists and ground truth between `recommend` and
//! `eval`.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use donmine_core::tasks::{Query, RankedList};
use donmine_core::{HinGraph, LabelWindow, NodeId};

use crate::Failure;

pub const TRUTH_FILE: &str = "truth.csv";

pub fn rankings_file(method: &str) -> String {
    format!("rankings_{method}.csv")
}

/// `video,rank,user,score`, ranks starting at 1.
pub fn write_rankings<W: Write>(
    g: &HinGraph,
    lists: &[RankedList],
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "video,rank,user,score")?;
    for l in lists {
        let video = &g.node(l.video).external_id;
        for (i, (u, s)) in l.ranked.iter().enumerate() {
            writeln!(w, "{video},{},{},{s}", i + 1, g.node(*u).external_id)?;
        }
    }
    Ok(())
}

/// `video,user,inside`: every distinct window donor of every window-active
/// video, with `inside = 1` when the donor is in the video's candidate set.
pub fn write_truth<W: Write>(
    g: &HinGraph,
    window: &LabelWindow,
    queries: &[Query],
    mut w: W,
) -> std::io::Result<()> {
    let inside: HashMap<NodeId, &[NodeId]> = queries
        .iter()
        .map(|q| (q.video, q.truth.as_slice()))
        .collect();
    let donors: BTreeSet<(NodeId, NodeId)> = window.events.iter().map(|e| (e.dst, e.src)).collect();
    writeln!(w, "video,user,inside")?;
    for (v, u) in donors {
        let hit = inside.get(&v).is_some_and(|t| t.binary_search(&u).is_ok());
        writeln!(
            w,
            "{},{},{}",
            g.node(v).external_id,
            g.node(u).external_id,
            u8::from(hit)
        )?;
    }
    Ok(())
}

/// Maps external ids to dense ids in first-seen order.
#[derive(Default)]
struct Interner(HashMap<String, u32>);

impl Interner {
    fn id(&mut self, s: &str) -> NodeId {
        let next = self.0.len() as u32;
        NodeId(*self.0.entry(s.to_owned()).or_insert(next))
    }
}

fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => {
            return Err(Failure::data(format!(
                "{}:1: expected header `{header}`",
                path.display()
            )))
        }
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cells: Vec<String> = l.split(',').map(|c| c.trim().to_owned()).collect();
            if cells.len() != width {
                return Err(Failure::data(format!(
                    "{}:{}: expected {width} fields, found {}",
                    path.display(),
                    i + 1,
                    cells.len()
                )));
            }
            Ok((i + 1, cells))
        })
        .collect()
}

/// Ground truth and rankings resolved against one id space.
pub struct EvalInput {
    users: Interner,
    videos: Interner,
    /// Per video in file order: inside donors.
    truth: Vec<(NodeId, Vec<NodeId>)>,
}

impl EvalInput {
    pub fn read_truth(path: &Path) -> Result<Self, Failure> {
        let mut input = Self {
            users: Interner::default(),
            videos: Interner::default(),
            truth: Vec::new(),
        };
        for (line, cells) in read_rows(path, "video,user,inside")? {
            let v = input.videos.id(&cells[0]);
            let u = input.users.id(&cells[1]);
            let inside = match cells[2].as_str() {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Failure::data(format!(
                        "{}:{line}: inside must be 0 or 1, found `{other}`",
                        path.display()
                    )))
                }
            };
            match input.truth.last_mut() {
                Some((last, _)) if *last == v => {}
                _ => {
                    if input.truth.iter().any(|(x, _)| *x == v) {
                        return Err(Failure::data(format!(
                            "{}:{line}: rows of video `{}` are not contiguous",
                            path.display(),
                            cells[0]
                        )));
                    }
                    input.truth.push((v, Vec::new()));
                }
            }
            if inside {
                input.truth.last_mut().expect("pushed").1.push(u);
            }
        }
        for (_, t) in &mut input.truth {
            t.sort_unstable();
            t.dedup();
        }
        Ok(input)
    }

    /// Videos whose truth has no candidate donor.
    pub fn skipped(&self) -> usize {
        self.truth.iter().filter(|(_, t)| t.is_empty()).count()
    }

    /// Ranked lists of one method for every video with candidate truth.
    /// Videos absent from the file get an empty ranking.
    pub fn read_rankings(&mut self, path: &Path) -> Result<Vec<RankedList>, Failure> {
        let mut ranked: HashMap<NodeId, Vec<(NodeId, f64)>> = HashMap::new();
        for (line, cells) in read_rows(path, "video,rank,user,score")? {
            let bad =
                |what: &str| Failure::data(format!("{}:{line}: invalid {what}", path.display()));
            let v = self.videos.id(&cells[0]);
            let rank: usize = cells[1].parse().map_err(|_| bad("rank"))?;
            let u = self.users.id(&cells[2]);
            let score: f64 = cells[3].parse().map_err(|_| bad("score"))?;
            let list = ranked.entry(v).or_default();
            if rank != list.len() + 1 {
                return Err(Failure::data(format!(
                    "{}:{line}: rank {rank} out of sequence for video `{}`",
                    path.display(),
                    cells[0]
                )));
            }
            list.push((u, score));
        }
        Ok(self
            .truth
            .iter()
            .filter(|(_, t)| !t.is_empty())
            .map(|(v, t)| {
                let r = ranked.remove(v).unwrap_or_default();
                RankedList {
                    video: *v,
                    n_candidates: r.len(),
                    ranked: r,
                    truth: t.clone(),
                    truth_outside: 0,
                }
            })
            .collect())
    }
}
