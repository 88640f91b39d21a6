//! Hotspot and popular-route pipelines, composed from the algebra.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geo::{GeoCell, Resolution};
use crate::graph::{EvolvingGraph, VertexId};
use crate::ops::{self, Direction, OpsError};
use crate::temporal::{Interval, Quantifier, TemporalError, TimeInstant, WindowSpec};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("requested resolution {requested} is finer than the graph's {graph}")]
    FinerThanGraph { requested: Resolution, graph: Resolution },
    #[error("period {0} does not overlap the graph's time span")]
    OutsideSpan(Interval),
    #[error("graph has no time span (it is empty)")]
    EmptyGraph,
    #[error(transparent)]
    Ops(#[from] OpsError),
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

/// Structural zoom to `resolution`, or the graph itself when it is already there.
pub fn coarsen_to(
    g: &EvolvingGraph,
    resolution: Resolution,
) -> Result<Cow<'_, EvolvingGraph>, AnalyticsError> {
    if resolution == g.resolution() {
        Ok(Cow::Borrowed(g))
    } else if resolution.is_coarser_than(g.resolution()) {
        Ok(Cow::Owned(ops::node_creation(g, resolution)?))
    } else {
        Err(AnalyticsError::FinerThanGraph { requested: resolution, graph: g.resolution() })
    }
}

/// One window covering the graph's whole time span.
pub fn span_window(g: &EvolvingGraph) -> Result<WindowSpec, AnalyticsError> {
    g.meta().time_span.map(WindowSpec::whole).ok_or(AnalyticsError::EmptyGraph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HotspotRow {
    pub window: Interval,
    pub vid: VertexId,
    pub cell: GeoCell,
    pub direction: Direction,
    pub degree: u64,
    pub rank: u32,
}

/// Top-k locations by in- and out-degree in every window.
///
/// Temporal zoom (exists/exists), then node creation to `resolution`, then
/// degree per window. Within a (window, direction) group rows are ranked by
/// degree descending, ties by ascending vid. Only locations with at least
/// one incident trip in the window are ranked. Rows come out ordered by
/// (window, direction, rank).
pub fn hotspots(
    g: &EvolvingGraph,
    resolution: Resolution,
    windows: &WindowSpec,
    k: usize,
) -> Result<Vec<HotspotRow>, AnalyticsError> {
    if k == 0 {
        return Err(AnalyticsError::ZeroK);
    }
    if resolution > g.resolution() {
        return Err(AnalyticsError::FinerThanGraph { requested: resolution, graph: g.resolution() });
    }
    let zoomed = ops::temporal_zoom(g, windows, Quantifier::Exists, Quantifier::Exists)?;
    let grouped = coarsen_to(&zoomed, resolution)?;

    type Ranking = (Interval, Vec<(u64, VertexId)>);
    let mut groups: BTreeMap<(TimeInstant, Direction), Ranking> = BTreeMap::new();
    for direction in Direction::BOTH {
        for series in ops::aggregate_messages_degree(&grouped, direction, windows)? {
            for (window, degree) in series.entries {
                groups
                    .entry((window.start(), direction))
                    .or_insert_with(|| (window, Vec::new()))
                    .1
                    .push((degree, series.vid));
            }
        }
    }

    let mut rows = Vec::new();
    for ((_, direction), (window, mut ranked)) in groups {
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (i, (degree, vid)) in ranked.into_iter().take(k).enumerate() {
            let cell = grouped.vertex(vid).expect("degree targets exist").cell;
            rows.push(HotspotRow { window, vid, cell, direction, degree, rank: i as u32 + 1 });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RouteAggregate {
    pub source: GeoCell,
    pub dest: GeoCell,
    /// Start of the window holding the trips' pickups.
    pub start: TimeInstant,
    pub num_trips: u64,
    pub total_passengers: u64,
    pub total_cost_cents: i64,
    pub total_duration_seconds: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutesResult {
    pub routes: Vec<RouteAggregate>,
    /// Trips in the analyzed period whose source and destination cells coincide.
    pub self_loop_trips: u64,
    /// Trips whose pickup lies in the analyzed period.
    pub trips_considered: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Totals {
    trips: u64,
    passengers: u64,
    cost: i64,
    duration: i64,
}

impl Totals {
    fn absorb(&mut self, other: &Totals) {
        self.trips += other.trips;
        self.passengers += other.passengers;
        self.cost += other.cost;
        self.duration += other.duration;
    }
}

/// The popular-routes group-by over the whole graph.
pub fn popular_routes(
    g: &EvolvingGraph,
    resolution: Resolution,
    windows: &WindowSpec,
) -> Result<Vec<RouteAggregate>, AnalyticsError> {
    Ok(popular_routes_in(g, resolution, windows, None)?.routes)
}

/// Groups trips by (source cell, destination cell, window of the pickup)
/// and totals passengers, cost and duration. Self-loop routes are removed.
/// Rows are ordered by trip count descending, then (source, dest, start).
///
/// The pickup instant is the edge's validity start, so `g` should not have
/// been temporally zoomed.
pub fn popular_routes_in(
    g: &EvolvingGraph,
    resolution: Resolution,
    windows: &WindowSpec,
    period: Option<Interval>,
) -> Result<RoutesResult, AnalyticsError> {
    let grouped = coarsen_to(g, resolution)?;
    type Key = (VertexId, VertexId, TimeInstant);

    let locals: Vec<(HashMap<Key, Totals>, u64, u64)> = grouped
        .partitions()
        .par_iter()
        .map(|part| {
            let mut acc: HashMap<Key, Totals> = HashMap::new();
            let (mut loops, mut considered) = (0u64, 0u64);
            for e in part {
                let pickup = e.validity.start();
                if period.is_some_and(|p| !p.contains(pickup)) {
                    continue;
                }
                considered += 1;
                if e.src == e.dst {
                    loops += 1;
                    continue;
                }
                let window = windows.window_containing(pickup)?;
                acc.entry((e.src, e.dst, window.start())).or_default().absorb(&Totals {
                    trips: 1,
                    passengers: e.passengers as u64,
                    cost: e.fare_cents,
                    duration: e.duration_seconds,
                });
            }
            Ok((acc, loops, considered))
        })
        .collect::<Result<_, TemporalError>>()?;

    let mut merged: HashMap<Key, Totals> = HashMap::new();
    let (mut self_loop_trips, mut trips_considered) = (0, 0);
    for (acc, loops, considered) in locals {
        self_loop_trips += loops;
        trips_considered += considered;
        for (key, totals) in acc {
            merged.entry(key).or_default().absorb(&totals);
        }
    }

    let mut keyed: Vec<(Key, Totals)> = merged.into_iter().collect();
    // vids of a coarsened graph follow cell order, so vid order is cell order
    keyed.par_sort_unstable_by(|(ka, ta), (kb, tb)| tb.trips.cmp(&ta.trips).then(ka.cmp(kb)));
    let cell = |vid: VertexId| grouped.vertex(vid).expect("edge endpoints exist").cell;
    let routes = keyed
        .into_iter()
        .map(|((src, dst, start), t)| RouteAggregate {
            source: cell(src),
            dest: cell(dst),
            start,
            num_trips: t.trips,
            total_passengers: t.passengers,
            total_cost_cents: t.cost,
            total_duration_seconds: t.duration,
        })
        .collect();
    Ok(RoutesResult { routes, self_loop_trips, trips_considered })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RouteMax {
    pub source: GeoCell,
    pub dest: GeoCell,
    pub max_simultaneous: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RouteStats {
    /// One entry per route, by `max_simultaneous` descending then (source, dest).
    pub per_route: Vec<RouteMax>,
    /// `(m, number of routes whose maximum is at least m)` for m = 2..=max.
    pub at_least: Vec<(u64, u64)>,
    pub max_simultaneous: u64,
}

impl RouteStats {
    pub fn routes_with_at_least(&self, m: u64) -> u64 {
        self.per_route.iter().filter(|r| r.max_simultaneous >= m).count() as u64
    }

    pub fn routes_with_exactly(&self, m: u64) -> u64 {
        self.per_route.iter().filter(|r| r.max_simultaneous == m).count() as u64
    }
}

/// Per-route maximum of simultaneous (same-window) trips and its histogram.
pub fn route_stats(aggregates: &[RouteAggregate]) -> RouteStats {
    let mut max_by_route: HashMap<(GeoCell, GeoCell), u64> = HashMap::new();
    for a in aggregates {
        let slot = max_by_route.entry((a.source, a.dest)).or_default();
        *slot = (*slot).max(a.num_trips);
    }
    let mut per_route: Vec<RouteMax> = max_by_route
        .into_iter()
        .map(|((source, dest), max_simultaneous)| RouteMax { source, dest, max_simultaneous })
        .collect();
    per_route.sort_unstable_by(|a, b| {
        b.max_simultaneous
            .cmp(&a.max_simultaneous)
            .then_with(|| (a.source, a.dest).cmp(&(b.source, b.dest)))
    });
    let max_simultaneous = per_route.first().map_or(0, |r| r.max_simultaneous);

    let mut exactly: BTreeMap<u64, u64> = BTreeMap::new();
    for r in &per_route {
        *exactly.entry(r.max_simultaneous).or_default() += 1;
    }
    let mut at_least = Vec::new();
    let mut running = 0;
    for m in (2..=max_simultaneous).rev() {
        running += exactly.get(&m).copied().unwrap_or(0);
        at_least.push((m, running));
    }
    at_least.reverse();
    RouteStats { per_route, at_least, max_simultaneous }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoutePair {
    pub source: GeoCell,
    pub dest: GeoCell,
    pub trip_count: u64,
}

/// The `n` most frequent (source, dest) pairs among trips picked up in
/// `period`, regardless of window. Self-loops are excluded.
pub fn top_route_pairs(
    g: &EvolvingGraph,
    resolution: Resolution,
    period: Interval,
    n: usize,
) -> Result<Vec<RoutePair>, AnalyticsError> {
    let span = g.meta().time_span.ok_or(AnalyticsError::EmptyGraph)?;
    if !span.overlaps(&period) {
        return Err(AnalyticsError::OutsideSpan(period));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let grouped = coarsen_to(g, resolution)?;
    let locals: Vec<HashMap<(VertexId, VertexId), u64>> = grouped
        .partitions()
        .par_iter()
        .map(|part| {
            let mut acc = HashMap::new();
            for e in part {
                if e.src != e.dst && period.contains(e.validity.start()) {
                    *acc.entry((e.src, e.dst)).or_default() += 1;
                }
            }
            acc
        })
        .collect();
    let mut counts: HashMap<(VertexId, VertexId), u64> = HashMap::new();
    for acc in locals {
        for (k, c) in acc {
            *counts.entry(k).or_default() += c;
        }
    }
    let mut ranked: Vec<((VertexId, VertexId), u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    let cell = |vid: VertexId| grouped.vertex(vid).expect("edge endpoints exist").cell;
    Ok(ranked
        .into_iter()
        .map(|((s, d), trip_count)| RoutePair { source: cell(s), dest: cell(d), trip_count })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WindowCounts {
    pub window: Interval,
    pub vertices: u64,
    pub edges: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub resolution: Resolution,
    pub vertices: u64,
    pub edges: u64,
    pub windows: Vec<WindowCounts>,
}

/// Location and trip counts at `resolution`, overall and per window. A
/// location counts in a window if it is alive at some instant of it; a trip
/// counts if its validity intersects the window.
pub fn graph_stats(
    g: &EvolvingGraph,
    resolution: Resolution,
    windows: &WindowSpec,
) -> Result<GraphStats, AnalyticsError> {
    let grouped = coarsen_to(g, resolution)?;
    let mut per_window: BTreeMap<TimeInstant, WindowCounts> = BTreeMap::new();
    let vertex_windows: Vec<Vec<Interval>> = grouped
        .vertices()
        .par_iter()
        .map(|v| windows.windows_overlapping(&v.validity))
        .collect::<Result<_, _>>()?;
    for w in vertex_windows.into_iter().flatten() {
        per_window.entry(w.start()).or_insert(WindowCounts { window: w, vertices: 0, edges: 0 }).vertices += 1;
    }
    let edge_windows: Vec<BTreeMap<TimeInstant, (Interval, u64)>> = grouped
        .partitions()
        .par_iter()
        .map(|part| {
            let mut acc: BTreeMap<TimeInstant, (Interval, u64)> = BTreeMap::new();
            for e in part {
                for w in windows.windows_covering(&e.validity)? {
                    acc.entry(w.start()).or_insert((w, 0)).1 += 1;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, TemporalError>>()?;
    for acc in edge_windows {
        for (start, (w, n)) in acc {
            per_window.entry(start).or_insert(WindowCounts { window: w, vertices: 0, edges: 0 }).edges += n;
        }
    }
    Ok(GraphStats {
        resolution,
        vertices: grouped.vertex_count() as u64,
        edges: grouped.edge_count() as u64,
        windows: per_window.into_values().collect(),
    })
}
