//! The immutable evolving property multigraph.
//!
//! Vertices are locations with an [`IntervalSet`] of validity; edges are
//! individual trips stamped with a single [`Interval`]. Parallel edges are
//! distinct entities. Edges are stored in partitions split by contiguous
//! ranges of the vertex table, keyed on the edge source.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoCell, Resolution};
use crate::temporal::{Interval, IntervalSet, TimeInstant, WindowSpec};

/// Default number of edge partitions. Fixed so that physical layout never
/// depends on the worker count.
pub const DEFAULT_PARTITIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexRecord {
    pub vid: VertexId,
    pub cell: GeoCell,
    pub validity: IntervalSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeRecord {
    pub eid: EdgeId,
    pub src: VertexId,
    pub dst: VertexId,
    pub validity: Interval,
    pub passengers: u32,
    pub fare_cents: i64,
    /// Original trip duration; survives temporal zoom unchanged.
    pub duration_seconds: i64,
}

impl EdgeRecord {
    fn sort_key(&self) -> (VertexId, VertexId, TimeInstant, EdgeId) {
        (self.src, self.dst, self.validity.start(), self.eid)
    }
}

/// One row of the flattened edge relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRow {
    pub eid: u64,
    pub src: u64,
    pub dst: u64,
    pub start: i64,
    pub end: i64,
    pub passengers: u32,
    pub fare_cents: i64,
    pub duration_seconds: i64,
}

impl From<&EdgeRecord> for EdgeRow {
    fn from(e: &EdgeRecord) -> Self {
        EdgeRow {
            eid: e.eid.0,
            src: e.src.0,
            dst: e.dst.0,
            start: e.validity.start().seconds(),
            end: e.validity.end().seconds(),
            passengers: e.passengers,
            fare_cents: e.fare_cents,
            duration_seconds: e.duration_seconds,
        }
    }
}

impl TryFrom<EdgeRow> for EdgeRecord {
    type Error = crate::temporal::TemporalError;
    fn try_from(r: EdgeRow) -> Result<Self, Self::Error> {
        Ok(EdgeRecord {
            eid: EdgeId(r.eid),
            src: VertexId(r.src),
            dst: VertexId(r.dst),
            validity: Interval::from_seconds(r.start, r.end)?,
            passengers: r.passengers,
            fare_cents: r.fare_cents,
            duration_seconds: r.duration_seconds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub resolution: Resolution,
    pub window_spec: Option<WindowSpec>,
    /// Hull of all vertex validity; `None` for the empty graph.
    pub time_span: Option<Interval>,
    pub vertex_count: u64,
    pub edge_count: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(VertexId),
    #[error("graph must have at least one edge partition")]
    NoPartitions,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvolvingGraph {
    vertices: Vec<VertexRecord>,
    partitions: Vec<Vec<EdgeRecord>>,
    meta: GraphMeta,
}

/// Entities alive at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticSnapshot {
    pub at: TimeInstant,
    pub vertices: Vec<VertexId>,
    pub edges: Vec<EdgeRecord>,
}

impl EvolvingGraph {
    /// Assembles a graph from unsorted parts with the default partition count.
    pub fn from_parts(
        vertices: Vec<VertexRecord>,
        edges: Vec<EdgeRecord>,
        resolution: Resolution,
        window_spec: Option<WindowSpec>,
    ) -> Result<Self, GraphError> {
        Self::with_partitions(vertices, edges, resolution, window_spec, DEFAULT_PARTITIONS)
    }

    pub fn with_partitions(
        mut vertices: Vec<VertexRecord>,
        edges: Vec<EdgeRecord>,
        resolution: Resolution,
        window_spec: Option<WindowSpec>,
        partition_count: usize,
    ) -> Result<Self, GraphError> {
        if partition_count == 0 {
            return Err(GraphError::NoPartitions);
        }
        vertices.sort_by_key(|v| v.vid);
        if let Some(w) = vertices.windows(2).find(|w| w[0].vid == w[1].vid) {
            return Err(GraphError::DuplicateVertex(w[0].vid));
        }
        let mut partitions: Vec<Vec<EdgeRecord>> = vec![Vec::new(); partition_count];
        for e in edges {
            let p = partition_index(&vertices, partition_count, e.src);
            partitions[p].push(e);
        }
        for part in &mut partitions {
            part.sort_by_key(EdgeRecord::sort_key);
        }
        let time_span = vertex_hull(&vertices);
        let edge_count = partitions.iter().map(|p| p.len() as u64).sum();
        let meta = GraphMeta {
            resolution,
            window_spec,
            time_span,
            vertex_count: vertices.len() as u64,
            edge_count,
        };
        Ok(EvolvingGraph { vertices, partitions, meta })
    }

    /// Assembles a graph from parts exactly as given, without sorting or
    /// re-partitioning. Used by loaders; run [`validate`](Self::validate) after.
    pub fn from_raw_parts(
        vertices: Vec<VertexRecord>,
        partitions: Vec<Vec<EdgeRecord>>,
        meta: GraphMeta,
    ) -> Self {
        EvolvingGraph { vertices, partitions, meta }
    }

    pub fn meta(&self) -> &GraphMeta {
        &self.meta
    }

    pub fn resolution(&self) -> Resolution {
        self.meta.resolution
    }

    pub fn vertices(&self) -> &[VertexRecord] {
        &self.vertices
    }

    pub fn partitions(&self) -> &[Vec<EdgeRecord>] {
        &self.partitions
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    /// All edges in global `(src, dst, start, eid)` order.
    pub fn edges(&self) -> impl Iterator<Item = &EdgeRecord> + '_ {
        self.partitions.iter().flatten()
    }

    pub fn edge_count(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, vid: VertexId) -> Option<&VertexRecord> {
        self.vertices
            .binary_search_by_key(&vid, |v| v.vid)
            .ok()
            .map(|i| &self.vertices[i])
    }

    pub fn snapshot(&self, t: TimeInstant) -> StaticSnapshot {
        let vertices = self
            .vertices
            .iter()
            .filter(|v| v.validity.contains(t))
            .map(|v| v.vid)
            .collect();
        let edges = self.edges().filter(|e| e.validity.contains(t)).copied().collect();
        StaticSnapshot { at: t, vertices, edges }
    }

    pub fn edge_relation(&self) -> Vec<EdgeRow> {
        self.edges().map(EdgeRow::from).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        let mut seen_vid = HashSet::with_capacity(self.vertices.len());
        for (i, v) in self.vertices.iter().enumerate() {
            if !seen_vid.insert(v.vid) {
                violations.push(Violation::DuplicateVertex { vid: v.vid });
            }
            if i > 0 && self.vertices[i - 1].vid >= v.vid {
                violations.push(Violation::VerticesUnsorted { at: v.vid });
            }
            if v.validity.is_empty() {
                violations.push(Violation::EmptyVertexValidity { vid: v.vid });
            }
            if v.cell.resolution() != self.meta.resolution {
                violations.push(Violation::ResolutionMismatch { vid: v.vid });
            }
        }

        let mut seen_eid = HashSet::with_capacity(self.edge_count());
        for (p, part) in self.partitions.iter().enumerate() {
            for (i, e) in part.iter().enumerate() {
                if !seen_eid.insert(e.eid) {
                    violations.push(Violation::DuplicateEdge { eid: e.eid });
                }
                if i > 0 && part[i - 1].sort_key() >= e.sort_key() {
                    violations.push(Violation::EdgesUnsorted { partition: p, eid: e.eid });
                }
                if e.duration_seconds <= 0 {
                    violations.push(Violation::NonPositiveDuration { eid: e.eid });
                }
                let src = self.vertex(e.src);
                let dst = self.vertex(e.dst);
                for (vid, rec) in [(e.src, src), (e.dst, dst)] {
                    match rec {
                        None => violations.push(Violation::DanglingEndpoint { eid: e.eid, vid }),
                        Some(v) if !v.validity.covers(&e.validity) => {
                            violations.push(Violation::EdgeOutsideEndpoint { eid: e.eid, vid })
                        }
                        Some(_) => {}
                    }
                }
                if src.is_some()
                    && partition_index(&self.vertices, self.partitions.len(), e.src) != p
                {
                    violations.push(Violation::WrongPartition { partition: p, eid: e.eid });
                }
            }
        }

        if self.meta.vertex_count != self.vertices.len() as u64
            || self.meta.edge_count != self.edge_count() as u64
            || self.meta.time_span != vertex_hull(&self.vertices)
        {
            violations.push(Violation::MetaMismatch);
        }

        ValidationReport { violations }
    }
}

/// Partition of an edge by the position of its source in the vertex table.
fn partition_index(sorted_vertices: &[VertexRecord], partitions: usize, src: VertexId) -> usize {
    if sorted_vertices.is_empty() {
        return 0;
    }
    let idx = sorted_vertices.partition_point(|v| v.vid < src);
    let idx = idx.min(sorted_vertices.len() - 1);
    idx * partitions / sorted_vertices.len()
}

fn vertex_hull(vertices: &[VertexRecord]) -> Option<Interval> {
    let start = vertices.iter().filter_map(|v| v.validity.hull()).map(|h| h.start()).min()?;
    let end = vertices.iter().filter_map(|v| v.validity.hull()).map(|h| h.end()).max()?;
    Interval::new(start, end).ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateVertex { vid: VertexId },
    VerticesUnsorted { at: VertexId },
    EmptyVertexValidity { vid: VertexId },
    ResolutionMismatch { vid: VertexId },
    DuplicateEdge { eid: EdgeId },
    EdgesUnsorted { partition: usize, eid: EdgeId },
    WrongPartition { partition: usize, eid: EdgeId },
    NonPositiveDuration { eid: EdgeId },
    /// Referential integrity: the endpoint does not exist.
    DanglingEndpoint { eid: EdgeId, vid: VertexId },
    /// Temporal integrity: the edge is alive when the endpoint is not.
    EdgeOutsideEndpoint { eid: EdgeId, vid: VertexId },
    MetaMismatch,
}

impl Violation {
    pub fn is_referential(&self) -> bool {
        matches!(self, Violation::DanglingEndpoint { .. })
    }

    pub fn is_temporal(&self) -> bool {
        matches!(self, Violation::EdgeOutsideEndpoint { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateVertex { vid } => write!(f, "duplicate vertex {vid}"),
            Violation::VerticesUnsorted { at } => write!(f, "vertex table out of order at {at}"),
            Violation::EmptyVertexValidity { vid } => write!(f, "vertex {vid} has empty validity"),
            Violation::ResolutionMismatch { vid } => {
                write!(f, "vertex {vid} cell resolution differs from graph")
            }
            Violation::DuplicateEdge { eid } => write!(f, "duplicate edge {eid}"),
            Violation::EdgesUnsorted { partition, eid } => {
                write!(f, "partition {partition} out of order at {eid}")
            }
            Violation::WrongPartition { partition, eid } => {
                write!(f, "edge {eid} stored in wrong partition {partition}")
            }
            Violation::NonPositiveDuration { eid } => write!(f, "edge {eid} has duration <= 0"),
            Violation::DanglingEndpoint { eid, vid } => {
                write!(f, "edge {eid} references missing vertex {vid}")
            }
            Violation::EdgeOutsideEndpoint { eid, vid } => {
                write!(f, "edge {eid} alive outside validity of {vid}")
            }
            Violation::MetaMismatch => write!(f, "metadata counts or span disagree with tables"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const R4: Resolution = Resolution::TEN_METERS;

    fn cell(i: i64) -> GeoCell {
        GeoCell::new(40_700_000 + i * 100, -73_900_000, R4).unwrap()
    }

    fn vertex(id: u64, a: i64, b: i64) -> VertexRecord {
        VertexRecord {
            vid: VertexId(id),
            cell: cell(id as i64),
            validity: Interval::from_seconds(a, b).unwrap().into(),
        }
    }

    fn edge(id: u64, src: u64, dst: u64, a: i64, b: i64) -> EdgeRecord {
        EdgeRecord {
            eid: EdgeId(id),
            src: VertexId(src),
            dst: VertexId(dst),
            validity: Interval::from_seconds(a, b).unwrap(),
            passengers: 1,
            fare_cents: 100 * id as i64,
            duration_seconds: b - a,
        }
    }

    fn fixture() -> EvolvingGraph {
        EvolvingGraph::from_parts(
            vec![vertex(2, 100, 400), vertex(0, 100, 300), vertex(1, 150, 400)],
            vec![edge(7, 2, 0, 100, 200), edge(3, 0, 1, 150, 300), edge(5, 0, 1, 150, 250)],
            R4,
            None,
        )
        .unwrap()
    }

    #[test]
    fn snapshot_half_open() {
        let g = EvolvingGraph::from_parts(
            vec![vertex(0, 100, 200), vertex(1, 100, 200)],
            vec![edge(0, 0, 1, 100, 200)],
            R4,
            None,
        )
        .unwrap();
        assert_eq!(g.snapshot(TimeInstant::from_seconds(150)).edges.len(), 1);
        assert!(g.snapshot(TimeInstant::from_seconds(200)).edges.is_empty());
        let before = g.snapshot(TimeInstant::from_seconds(99));
        assert!(before.vertices.is_empty() && before.edges.is_empty());
    }

    #[test]
    fn edge_relation_order() {
        let g = fixture();
        let rows = g.edge_relation();
        assert_eq!(rows.len() as u64, g.meta().edge_count);
        let eids: Vec<u64> = rows.iter().map(|r| r.eid).collect();
        assert_eq!(eids, vec![3, 5, 7]);
        assert_eq!(rows[0], EdgeRow {
            eid: 3, src: 0, dst: 1, start: 150, end: 300, passengers: 1, fare_cents: 300,
            duration_seconds: 150,
        });
        assert_eq!(rows[2].src, 2);
        assert_eq!(rows[2].dst, 0);
    }

    #[test]
    fn empty_graph() {
        let g = EvolvingGraph::from_parts(vec![], vec![], R4, None).unwrap();
        assert!(g.edge_relation().is_empty());
        assert_eq!(g.meta().time_span, None);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn relation_round_trip() {
        let g = fixture();
        let edges = g.edge_relation().into_iter().map(|r| r.try_into().unwrap()).collect();
        let rebuilt = EvolvingGraph::from_parts(g.vertices().to_vec(), edges, R4, None).unwrap();
        assert_eq!(rebuilt, g);
    }

    #[test]
    fn validate_well_formed() {
        let g = fixture();
        assert!(g.validate().is_ok(), "{}", g.validate());
        assert_eq!(g.meta().time_span, Some(Interval::from_seconds(100, 400).unwrap()));
    }

    #[test]
    fn validate_dangling() {
        let g = fixture();
        let mut parts = g.partitions().to_vec();
        let last = parts.iter_mut().rev().find(|p| !p.is_empty()).unwrap();
        last[0].dst = VertexId(99);
        let bad = EvolvingGraph::from_raw_parts(g.vertices().to_vec(), parts, g.meta().clone());
        let report = bad.validate();
        assert_eq!(report.violations.len(), 1, "{report}");
        assert!(report.violations[0].is_referential());
    }

    #[test]
    fn validate_temporal() {
        let g = EvolvingGraph::from_parts(
            vec![vertex(0, 100, 200), vertex(1, 100, 150)],
            vec![edge(0, 0, 1, 100, 200)],
            R4,
            None,
        )
        .unwrap();
        let report = g.validate();
        assert_eq!(report.violations.len(), 1, "{report}");
        assert!(report.violations[0].is_temporal());
    }

    #[test]
    fn partitions_follow_vertex_ranges() {
        let vertices: Vec<_> = (0..20).map(|i| vertex(i * 3, 0, 100)).collect();
        let edges: Vec<_> = (0..40).map(|i| edge(i, (i % 20) * 3, ((i + 1) % 20) * 3, 0, 50)).collect();
        let g = EvolvingGraph::with_partitions(vertices, edges, R4, None, 4).unwrap();
        assert!(g.validate().is_ok());
        assert!(g.partitions().iter().all(|p| p.len() == 10));
        let srcs: Vec<u64> = g.edges().map(|e| e.src.0).collect();
        assert!(srcs.windows(2).all(|w| w[0] <= w[1]));
    }
}
