//! Algebra operations over [`EvolvingGraph`]: structural zoom (node
//! creation), temporal zoom with quantifiers, and aggregate messages.
//!
//! Every operation is a pure graph-to-graph (or graph-to-table) function.
//! Work is spread over edge partitions with rayon and merged in partition
//! order, so results never depend on the worker count.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoCell, GroupingKey, Resolution};
use crate::graph::{EdgeRecord, EvolvingGraph, GraphError, VertexId, VertexRecord};
use crate::temporal::{Interval, IntervalSet, Quantifier, TemporalError, WindowSpec};

#[derive(Debug, Error)]
pub enum OpsError {
    #[error("target resolution {target} is not coarser than graph resolution {current}")]
    NotCoarser { target: Resolution, current: Resolution },
    #[error("edge {eid} references vertex {vid} missing from the graph")]
    MissingVertex { eid: u64, vid: u64 },
    #[error(transparent)]
    Temporal(#[from] TemporalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Maps a vertex to the cell of the group it belongs to.
pub trait GroupingFunction: Sync {
    fn group(&self, vertex: &VertexRecord) -> GeoCell;
    fn resolution(&self) -> Resolution;
}

/// Groups vertices by their cell re-quantized to a coarser grid.
#[derive(Debug, Clone, Copy)]
pub struct CoarsenCell(pub Resolution);

impl GroupingFunction for CoarsenCell {
    fn group(&self, vertex: &VertexRecord) -> GeoCell {
        vertex.cell.coarsen(self.0)
    }

    fn resolution(&self) -> Resolution {
        self.0
    }
}

/// Structural zoom to a strictly coarser grid.
pub fn node_creation(g: &EvolvingGraph, target: Resolution) -> Result<EvolvingGraph, OpsError> {
    if !target.is_coarser_than(g.resolution()) {
        return Err(OpsError::NotCoarser { target, current: g.resolution() });
    }
    node_creation_with(g, &CoarsenCell(target))
}

/// Structural zoom with an arbitrary grouping function.
///
/// Output vids are the rank of each group's [`GroupingKey`] in sorted order.
/// Group validity is the temporal union of member validity. Edges keep eid,
/// attributes and validity and are re-pointed to the group vertices;
/// intra-group edges become self-loops and are kept.
pub fn node_creation_with<F: GroupingFunction>(
    g: &EvolvingGraph,
    grouping: &F,
) -> Result<EvolvingGraph, OpsError> {
    let keyed: Vec<(GroupingKey, GeoCell, VertexId)> = g
        .vertices()
        .par_iter()
        .map(|v| {
            let cell = grouping.group(v);
            (cell.grouping_key(), cell, v.vid)
        })
        .collect();

    let mut groups: BTreeMap<&GroupingKey, (GeoCell, Vec<VertexId>)> = BTreeMap::new();
    for (key, cell, vid) in &keyed {
        groups.entry(key).or_insert_with(|| (*cell, Vec::new())).1.push(*vid);
    }

    let mut remap: HashMap<VertexId, VertexId> = HashMap::with_capacity(keyed.len());
    let mut vertices = Vec::with_capacity(groups.len());
    for (rank, (_, (cell, members))) in groups.into_iter().enumerate() {
        let group_vid = VertexId(rank as u64);
        let mut validity = IntervalSet::new();
        for m in members {
            remap.insert(m, group_vid);
            let member = g.vertex(m).expect("member comes from the vertex table");
            validity = validity.union(&member.validity);
        }
        vertices.push(VertexRecord { vid: group_vid, cell, validity });
    }

    let edges: Vec<EdgeRecord> = g
        .partitions()
        .par_iter()
        .map(|part| {
            part.iter()
                .map(|e| {
                    let lookup = |vid: VertexId| {
                        remap
                            .get(&vid)
                            .copied()
                            .ok_or(OpsError::MissingVertex { eid: e.eid.0, vid: vid.0 })
                    };
                    Ok(EdgeRecord { src: lookup(e.src)?, dst: lookup(e.dst)?, ..*e })
                })
                .collect::<Result<Vec<_>, OpsError>>()
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    Ok(EvolvingGraph::with_partitions(
        vertices,
        edges,
        grouping.resolution(),
        g.meta().window_spec,
        g.partition_count(),
    )?)
}

/// Bookkeeping from a temporal zoom.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoomReport {
    pub vertices_dropped: u64,
    pub edges_dropped: u64,
    /// Edge-window pairs that passed the edge quantifier but were removed
    /// because an endpoint was not admitted to that window.
    pub edge_windows_dropped_for_integrity: u64,
}

pub fn temporal_zoom(
    g: &EvolvingGraph,
    windows: &WindowSpec,
    vertex_quantifier: Quantifier,
    edge_quantifier: Quantifier,
) -> Result<EvolvingGraph, OpsError> {
    temporal_zoom_with_report(g, windows, vertex_quantifier, edge_quantifier).map(|(g, _)| g)
}

/// Temporal zoom onto tiling windows.
///
/// A vertex is alive throughout window W iff its quantifier accepts its
/// validity over W. An edge is alive throughout W iff its quantifier accepts
/// and both endpoints were admitted to W. Entities admitted to no window are
/// dropped.
pub fn temporal_zoom_with_report(
    g: &EvolvingGraph,
    windows: &WindowSpec,
    vertex_quantifier: Quantifier,
    edge_quantifier: Quantifier,
) -> Result<(EvolvingGraph, ZoomReport), OpsError> {
    let zoomed_vertices: Vec<Option<VertexRecord>> = g
        .vertices()
        .par_iter()
        .map(|v| {
            let accepted = windows
                .windows_overlapping(&v.validity)?
                .into_iter()
                .filter(|w| vertex_quantifier.evaluate(&v.validity, w));
            let validity = IntervalSet::from_intervals(accepted);
            Ok((!validity.is_empty()).then(|| VertexRecord { validity, ..v.clone() }))
        })
        .collect::<Result<_, TemporalError>>()?;

    let mut report = ZoomReport::default();
    let lookup: HashMap<VertexId, &IntervalSet> = zoomed_vertices
        .iter()
        .flatten()
        .map(|v| (v.vid, &v.validity))
        .collect();

    let per_partition: Vec<(Vec<EdgeRecord>, u64, u64)> = g
        .partitions()
        .par_iter()
        .map(|part| {
            let mut kept = Vec::with_capacity(part.len());
            let (mut dropped, mut integrity) = (0u64, 0u64);
            for e in part {
                let own = IntervalSet::single(e.validity);
                let endpoint_ok = |w: &Interval| {
                    [e.src, e.dst]
                        .iter()
                        .all(|vid| lookup.get(vid).is_some_and(|val| val.covers(w)))
                };
                let mut accepted: Vec<Interval> = Vec::new();
                for w in windows.windows_covering(&e.validity)? {
                    if !edge_quantifier.evaluate(&own, &w) {
                        continue;
                    }
                    if endpoint_ok(&w) {
                        accepted.push(w);
                    } else {
                        integrity += 1;
                    }
                }
                match IntervalSet::from_intervals(accepted).intervals().first() {
                    // On a validated graph the accepted windows are contiguous:
                    // interior windows are fully covered by the edge and so by
                    // both endpoints. Otherwise only the first run is kept.
                    Some(first) => kept.push(EdgeRecord { validity: *first, ..*e }),
                    None => dropped += 1,
                }
            }
            Ok((kept, dropped, integrity))
        })
        .collect::<Result<_, TemporalError>>()?;

    let mut edges = Vec::with_capacity(g.edge_count());
    for (kept, dropped, integrity) in per_partition {
        edges.extend(kept);
        report.edges_dropped += dropped;
        report.edge_windows_dropped_for_integrity += integrity;
    }

    let vertices: Vec<VertexRecord> = zoomed_vertices.into_iter().flatten().collect();
    report.vertices_dropped = (g.vertex_count() - vertices.len()) as u64;
    let out = EvolvingGraph::with_partitions(
        vertices,
        edges,
        g.resolution(),
        Some(*windows),
        g.partition_count(),
    )?;
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Messages flow along edges to their destination.
    In,
    /// Messages flow back to the edge source.
    Out,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::In, Direction::Out];

    pub fn target(self, e: &EdgeRecord) -> VertexId {
        match self {
            Direction::In => e.dst,
            Direction::Out => e.src,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

/// Per-vertex aggregate values, one entry per window with at least one message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowedSeries<M> {
    pub vid: VertexId,
    pub entries: Vec<(Interval, M)>,
}

pub type DegreeSeries = WindowedSeries<u64>;

/// Aggregate messages over incident edges, per tiling window.
///
/// Every edge sends `map(edge, window)` to the vertex chosen by `direction`
/// for each window its validity intersects; messages landing on the same
/// (vertex, window) are folded with `reduce`, which must be commutative and
/// associative. The result has one series per vertex, in vid order.
pub fn aggregate_messages<M, Map, Reduce>(
    g: &EvolvingGraph,
    direction: Direction,
    windows: &WindowSpec,
    map: Map,
    reduce: Reduce,
) -> Result<Vec<WindowedSeries<M>>, OpsError>
where
    M: Send + Clone,
    Map: Fn(&EdgeRecord, &Interval) -> M + Sync,
    Reduce: Fn(M, M) -> M + Sync,
{
    let parts: Vec<&[EdgeRecord]> = g.partitions().iter().map(Vec::as_slice).collect();
    let folded = aggregate_over_partitions(&parts, direction, windows, &map, &reduce)?;
    let mut by_vertex: BTreeMap<VertexId, Vec<(Interval, M)>> =
        g.vertices().iter().map(|v| (v.vid, Vec::new())).collect();
    for ((vid, _), (window, value)) in folded {
        by_vertex.entry(vid).or_default().push((window, value));
    }
    Ok(by_vertex
        .into_iter()
        .map(|(vid, entries)| WindowedSeries { vid, entries })
        .collect())
}

/// Folded messages keyed by (target vertex, window start).
pub type WindowedMessages<M> = BTreeMap<(VertexId, crate::temporal::TimeInstant), (Interval, M)>;

/// Partition-level core of [`aggregate_messages`]: folds messages from any
/// set of edge slices into a map keyed by (target vertex, window start).
pub fn aggregate_over_partitions<M, Map, Reduce>(
    partitions: &[&[EdgeRecord]],
    direction: Direction,
    windows: &WindowSpec,
    map: &Map,
    reduce: &Reduce,
) -> Result<WindowedMessages<M>, OpsError>
where
    M: Send + Clone,
    Map: Fn(&EdgeRecord, &Interval) -> M + Sync,
    Reduce: Fn(M, M) -> M + Sync,
{
    type Acc<M> = WindowedMessages<M>;
    let merge = |mut into: Acc<M>, from: Acc<M>| {
        for (key, (w, value)) in from {
            match into.remove(&key) {
                Some((_, existing)) => into.insert(key, (w, reduce(existing, value))),
                None => into.insert(key, (w, value)),
            };
        }
        into
    };
    let locals: Vec<Acc<M>> = partitions
        .par_iter()
        .map(|part| {
            let mut acc: Acc<M> = BTreeMap::new();
            for e in part.iter() {
                let target = direction.target(e);
                for w in windows.windows_covering(&e.validity)? {
                    let msg = map(e, &w);
                    match acc.remove(&(target, w.start())) {
                        Some((_, existing)) => acc.insert((target, w.start()), (w, reduce(existing, msg))),
                        None => acc.insert((target, w.start()), (w, msg)),
                    };
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, TemporalError>>()?;
    Ok(locals.into_iter().fold(BTreeMap::new(), merge))
}

/// In- or out-degree per window; parallel edges count individually.
pub fn aggregate_messages_degree(
    g: &EvolvingGraph,
    direction: Direction,
    windows: &WindowSpec,
) -> Result<Vec<DegreeSeries>, OpsError> {
    aggregate_messages(g, direction, windows, |_, _| 1u64, |a, b| a + b)
}
