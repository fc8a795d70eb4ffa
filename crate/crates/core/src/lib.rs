//! Donation mining on heterogeneous user/video graphs.
//!
//! The crate covers the whole pipeline: typed graph ingestion and temporal
//! splitting ([`graph`]), characterization statistics ([`stats`]), meta-path
//! random walks ([`walks`]), skip-gram and HIN2vec-style embeddings
//! ([`embed`]), matrix-factorization baselines ([`mf`]), a random forest
//! with AUC and importances ([`forest`]), the prediction and recommendation
//! experiments ([`tasks`]) and a planted synthetic generator ([`synth`]).

pub mod embed;
pub mod error;
pub mod forest;
pub mod graph;
pub mod mf;
mod rng;
pub mod stats;
pub mod synth;
pub mod tasks;
pub mod walks;

pub use error::{Error, ErrorClass, Result};
pub use graph::{Direction, Edge, EdgeKind, HinGraph, LabelWindow, NodeId, NodeKind, NodeTable};
