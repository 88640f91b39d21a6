//! Evolving-graph analytics for time-stamped trip data.
//!
//! Trips become a directed multigraph whose vertices are grid cells and whose
//! edges are individual trips, each carrying a period of validity. The
//! algebra in [`ops`] zooms the graph structurally ([`ops::node_creation`])
//! and temporally ([`ops::temporal_zoom`]) and aggregates over incident edges
//! ([`ops::aggregate_messages`]). [`analytics`] composes these into hotspot
//! and popular-route pipelines.

pub mod analytics;
pub mod geo;
pub mod graph;
pub mod ingest;
pub mod ops;
pub mod storage;
pub mod temporal;

pub use geo::{GeoCell, GroupingKey, Resolution};
pub use graph::{EdgeId, EdgeRecord, EvolvingGraph, StaticSnapshot, VertexId, VertexRecord};
pub use temporal::{Interval, IntervalSet, Quantifier, TimeInstant, WindowSpec};
