//! Planted synthetic donation networks.
//!
//! Users belong to communities and every video is assigned to one
//! community. Follower counts follow a discrete power law and followers are
//! drawn preferentially from the followee's community. A donation event is
//! structured with probability `intra_community_donation_bias`: the video is
//! drawn by propensity and the donor either follows an earlier donor of that
//! video (social contagion) or is an active member of the video's
//! community. Otherwise video and donor are both uniform. Video popularity
//! attributes are a noisy monotone transform of video propensity.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::graph::write_graph_dir;
use crate::graph::{Edge, EdgeKind, NodeId, NodeKind, NodeTable};
use crate::rng::{self, Rng};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_videos: usize,
    pub n_communities: usize,
    pub follower_exponent: f64,
    pub intra_community_donation_bias: f64,
    pub donation_volume: usize,
    pub window_fraction: f64,
    pub seed: u64,
    /// Probability that a follower is drawn from the followee's community.
    pub follow_homophily: f64,
    /// Share of structured donors that follow an earlier donor of the video.
    pub contagion: f64,
    /// Log-scale spread of video propensities.
    pub video_sigma: f64,
    /// Log-scale spread of user activity.
    pub user_sigma: f64,
    /// Log-scale noise between propensity and popularity attributes.
    pub popularity_noise: f64,
    /// Last snapshot day. Snapshot events fall on days `1..=cutoff`.
    pub cutoff: i64,
    pub horizon_days: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 20_000,
            n_videos: 500,
            n_communities: 25,
            follower_exponent: 2.5,
            intra_community_donation_bias: 0.8,
            donation_volume: 20_000,
            window_fraction: 0.25,
            seed: 7,
            follow_homophily: 0.8,
            contagion: 0.9,
            video_sigma: 1.5,
            user_sigma: 0.3,
            popularity_noise: 1.0,
            cutoff: 70,
            horizon_days: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let checks: [(bool, &str); 12] = [
            (self.n_users >= 2, "n_users must be at least 2"),
            (self.n_videos >= 1, "n_videos must be positive"),
            (
                self.n_communities >= 1 && self.n_communities <= self.n_users,
                "n_communities must be in 1..=n_users",
            ),
            (
                self.follower_exponent > 1.0,
                "follower_exponent must exceed 1",
            ),
            (
                unit(self.intra_community_donation_bias),
                "intra_community_donation_bias must be in [0, 1]",
            ),
            (
                self.donation_volume >= 1,
                "donation_volume must be positive",
            ),
            (
                self.window_fraction > 0.0 && self.window_fraction < 1.0,
                "window_fraction must be in (0, 1)",
            ),
            (
                unit(self.follow_homophily),
                "follow_homophily must be in [0, 1]",
            ),
            (unit(self.contagion), "contagion must be in [0, 1]"),
            (
                self.video_sigma >= 0.0 && self.user_sigma >= 0.0 && self.popularity_noise >= 0.0,
                "spreads must be nonnegative",
            ),
            (self.cutoff >= 8, "cutoff must be at least day 8"),
            (self.horizon_days >= 1, "horizon_days must be positive"),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(argument(*msg));
        }
        let pairs = self.n_users as u128 * self.n_videos as u128;
        if self.donation_volume as u128 > pairs {
            return Err(argument(format!(
                "donation_volume {} exceeds the {pairs} user-video pairs",
                self.donation_volume
            )));
        }
        Ok(())
    }
}

/// Planted ground truth written next to the graph files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub cutoff: i64,
    pub horizon_days: u32,
    pub user_community: Vec<u32>,
    pub video_community: Vec<u32>,
    pub user_activity: Vec<f64>,
    pub video_propensity: Vec<f64>,
    pub follow_edges: usize,
    pub snapshot_events: usize,
    pub window_events: usize,
    pub structured_events: usize,
    pub contagion_events: usize,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub nodes: NodeTable,
    pub edges: Vec<Edge>,
    pub manifest: SynthManifest,
}

impl SynthData {
    /// Writes `nodes.csv`, `edges.csv` and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let (n, e) = write_graph_dir(dir, &self.nodes, &self.edges)?;
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(vec![n, e, path])
    }
}

/// Cumulative-weight sampler.
struct Weighted {
    cumulative: Vec<f64>,
}

impl Weighted {
    fn new(weights: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        Self {
            cumulative: weights
                .into_iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect(),
        }
    }

    fn sample(&self, rng: &mut Rng) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let x = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

/// Discrete power law by inverse CDF: `floor((1 - U)^(-1 / (a - 1)))`,
/// capped at `cap`.
fn power_law_degree(rng: &mut Rng, exponent: f64, cap: usize) -> usize {
    let u: f64 = rng.random();
    let k = (1.0 - u).powf(-1.0 / (exponent - 1.0)).floor();
    if k >= cap as f64 {
        cap
    } else {
        k as usize
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let c = config;
    let (nu, nv, nc) = (c.n_users, c.n_videos, c.n_communities);

    let mut rng = rng::stream(c.seed, &[1]);
    let user_community: Vec<u32> = (0..nu).map(|i| (i % nc) as u32).collect();
    let video_community: Vec<u32> = (0..nv).map(|j| (j % nc) as u32).collect();
    let user_activity: Vec<f64> = LogNormal::new(0.0, c.user_sigma)
        .expect("valid sigma")
        .sample_iter(&mut rng)
        .take(nu)
        .collect();
    let video_propensity: Vec<f64> = LogNormal::new(0.0, c.video_sigma)
        .expect("valid sigma")
        .sample_iter(&mut rng)
        .take(nv)
        .collect();

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); nc];
    for (u, &k) in user_community.iter().enumerate() {
        members[k as usize].push(u as u32);
    }
    let mut community_videos: Vec<Vec<u32>> = vec![Vec::new(); nc];
    for (v, &k) in video_community.iter().enumerate() {
        community_videos[k as usize].push(v as u32);
    }

    // Follows: draw an in-degree per user, then that many distinct followers.
    let mut rng = rng::stream(c.seed, &[2]);
    let mut followers: Vec<Vec<u32>> = vec![Vec::new(); nu];
    let mut follow_pairs: Vec<(u32, u32)> = Vec::new();
    let mut seen = HashSet::new();
    for (u, fl) in followers.iter_mut().enumerate() {
        let k = power_law_degree(&mut rng, c.follower_exponent, nu - 1);
        let own = &members[user_community[u] as usize];
        seen.clear();
        let mut attempts = 0;
        while fl.len() < k {
            attempts += 1;
            let f =
                if attempts < 20 * k && own.len() > 1 && rng.random::<f64>() < c.follow_homophily {
                    own[rng.random_range(0..own.len())]
                } else {
                    rng.random_range(0..nu) as u32
                };
            if f as usize != u && seen.insert(f) {
                fl.push(f);
                follow_pairs.push((f, u as u32));
            }
        }
        fl.sort_unstable();
    }

    // Donations, generated in time order so contagion sees earlier donors.
    let mut rng = rng::stream(c.seed, &[3]);
    let n_window = ((c.donation_volume as f64 * c.window_fraction).round() as usize)
        .clamp(1, c.donation_volume - usize::from(c.donation_volume > 1));
    let n_snapshot = c.donation_volume - n_window;
    let mut times: Vec<i64> = (0..n_snapshot)
        .map(|_| rng.random_range(1..=c.cutoff))
        .collect();
    let horizon = i64::from(c.horizon_days);
    times.extend((0..n_window).map(|_| c.cutoff + rng.random_range(1..=horizon)));
    times.sort_unstable();

    let video_pick = Weighted::new(video_propensity.iter().copied());
    let member_pick: Vec<Weighted> = members
        .iter()
        .map(|m| Weighted::new(m.iter().map(|&u| user_activity[u as usize])))
        .collect();
    let mut donors: Vec<Vec<u32>> = vec![Vec::new(); nv];
    let mut events: Vec<(u32, u32, i64)> = Vec::with_capacity(c.donation_volume);
    let (mut structured, mut contagion) = (0usize, 0usize);
    for &t in &times {
        let (u, v) = if rng.random::<f64>() < c.intra_community_donation_bias {
            structured += 1;
            let v = video_pick.sample(&mut rng);
            let k = video_community[v] as usize;
            let social = if !donors[v].is_empty() && rng.random::<f64>() < c.contagion {
                let d = donors[v][rng.random_range(0..donors[v].len())] as usize;
                let local: Vec<u32> = followers[d]
                    .iter()
                    .copied()
                    .filter(|&f| user_community[f as usize] as usize == k)
                    .collect();
                (!local.is_empty()).then(|| local[rng.random_range(0..local.len())])
            } else {
                None
            };
            let u = match social {
                Some(f) => {
                    contagion += 1;
                    f
                }
                None => members[k][member_pick[k].sample(&mut rng)],
            };
            (u, v as u32)
        } else {
            (
                rng.random_range(0..nu) as u32,
                rng.random_range(0..nv) as u32,
            )
        };
        donors[v as usize].push(u);
        events.push((u, v, t));
    }

    // Popularity as a noisy monotone transform of propensity.
    let mut rng = rng::stream(c.seed, &[4]);
    let noise = Normal::new(0.0, c.popularity_noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut nodes = NodeTable::new();
    for u in 0..nu {
        nodes
            .push(format!("u{u}"), NodeKind::User, BTreeMap::new())
            .expect("unique ids");
    }
    let mut total = vec![0u64; nv];
    let mut week = vec![0u64; nv];
    for &(_, v, t) in &events {
        if t <= c.cutoff {
            total[v as usize] += 1;
            if t > c.cutoff - 7 {
                week[v as usize] += 1;
            }
        }
    }
    for v in 0..nv {
        let p = video_propensity[v];
        let views = 1000.0 * p * noise.sample(&mut rng).exp();
        let subs = views * 0.03 * (0.5 * noise.sample(&mut rng)).exp();
        let danmus = views * 0.1 * (0.5 * noise.sample(&mut rng)).exp();
        let attrs = BTreeMap::from([
            ("views".to_owned(), views.round() as u64),
            ("subscriptions".to_owned(), subs.round() as u64),
            ("danmus".to_owned(), danmus.round() as u64),
            ("donations_total".to_owned(), total[v]),
            ("donations_week".to_owned(), week[v]),
            ("age_days".to_owned(), rng.random_range(30..2000)),
        ]);
        nodes
            .push(format!("v{v}"), NodeKind::Video, attrs)
            .expect("unique ids");
    }

    let mut edges: Vec<Edge> = follow_pairs
        .iter()
        .map(|&(f, u)| Edge {
            src: NodeId(f),
            dst: NodeId(u),
            kind: EdgeKind::Follow,
            weight: 1.0,
            timestamp: 0,
        })
        .collect();
    edges.extend(events.iter().map(|&(u, v, t)| Edge {
        src: NodeId(u),
        dst: NodeId((nu + v as usize) as u32),
        kind: EdgeKind::Donate,
        weight: 1.0,
        timestamp: t,
    }));

    let manifest = SynthManifest {
        config: c.clone(),
        cutoff: c.cutoff,
        horizon_days: c.horizon_days,
        user_community,
        video_community,
        user_activity,
        video_propensity,
        follow_edges: follow_pairs.len(),
        snapshot_events: n_snapshot,
        window_events: n_window,
        structured_events: structured,
        contagion_events: contagion,
    };
    Ok(SynthData {
        nodes,
        edges,
        manifest,
    })
}
