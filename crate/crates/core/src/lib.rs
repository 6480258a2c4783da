//! Fully dynamic all-pairs shortest paths for directed graphs with
//! non-negative weights, under vertex insertions and deletions.
//!
//! The engine preprocesses hop-limited shortest paths against a congestion
//! threshold, repairs them after batch deletions with per-source hop-layer
//! separators, reinserts congested vertices Johnson-style, and extends the
//! hop-limited answers to exact distances by geometric pivot doubling. Four
//! operating modes share this skeleton: plain deterministic, deterministic
//! with a dedicated center structure, space-efficient (hierarchical path
//! stores), and a randomized layered variant.

pub mod delete;
pub mod engine;
pub mod graph;
pub mod hitting_set;
pub mod oracle;
pub mod path_store;
pub mod preprocess;

pub use engine::{configure, Engine, EngineConfig, Mode, UpdateOp, UpdateStats};
pub use graph::{parse_graph, Graph, GraphError, GraphView, VertexId, VertexSet, Weight};
pub use oracle::Matrix;
