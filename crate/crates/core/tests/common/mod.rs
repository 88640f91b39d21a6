//! Random graph generators and brute-force, per-second oracles shared by the
//! integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use tripgraph::geo::MICRO;
use tripgraph::ingest::TripRow;
use tripgraph::{
    EdgeId, EdgeRecord, EvolvingGraph, GeoCell, Interval, IntervalSet, Quantifier, Resolution,
    TimeInstant, VertexId, VertexRecord, WindowSpec,
};

/// Oracle timeline: seconds `LO..HI` cover every generated interval and
/// every window that can touch one.
pub const LO: i64 = -1_000;
pub const HI: i64 = 2_100;

pub fn iv(a: i64, b: i64) -> Interval {
    Interval::from_seconds(a, b).unwrap()
}

pub fn t(s: i64) -> TimeInstant {
    TimeInstant::from_seconds(s)
}

/// Per-second membership over `LO..HI`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap(pub Vec<bool>);

impl Bitmap {
    pub fn empty() -> Self {
        Bitmap(vec![false; (HI - LO) as usize])
    }

    pub fn of_set(s: &IntervalSet) -> Self {
        let mut b = Bitmap::empty();
        for i in s.iter() {
            b.fill(i.start().seconds(), i.end().seconds());
        }
        b
    }

    pub fn of_interval(i: &Interval) -> Self {
        let mut b = Bitmap::empty();
        b.fill(i.start().seconds(), i.end().seconds());
        b
    }

    pub fn fill(&mut self, a: i64, b: i64) {
        for s in a..b {
            self.0[(s - LO) as usize] = true;
        }
    }

    pub fn get(&self, s: i64) -> bool {
        (LO..HI).contains(&s) && self.0[(s - LO) as usize]
    }

    pub fn or(&self, other: &Bitmap) -> Bitmap {
        Bitmap(self.0.iter().zip(&other.0).map(|(a, b)| *a || *b).collect())
    }

    pub fn count_in(&self, a: i64, b: i64) -> i64 {
        (a..b).filter(|&s| self.get(s)).count() as i64
    }

    /// Maximal runs of set seconds, as half-open pairs.
    pub fn runs(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        let mut start = None;
        for s in LO..=HI {
            let on = s < HI && self.get(s);
            match (on, start) {
                (true, None) => start = Some(s),
                (false, Some(a)) => {
                    out.push((a, s));
                    start = None;
                }
                _ => {}
            }
        }
        out
    }
}

/// Quantifier semantics over counted seconds.
pub fn oracle_quantifier(q: Quantifier, alive: &Bitmap, a: i64, b: i64) -> bool {
    let covered = alive.count_in(a, b);
    let len = b - a;
    match q {
        Quantifier::Exists => covered > 0,
        Quantifier::Always => covered == len,
        Quantifier::Most => 2 * covered > len,
    }
}

/// Fixed windows `[origin + k d, origin + (k+1) d)` touching `LO..HI`.
pub fn oracle_fixed_windows(d: i64, origin: i64) -> Vec<(i64, i64)> {
    let first = (LO - origin).div_euclid(d);
    let last = (HI - 1 - origin).div_euclid(d);
    (first..=last).map(|k| (origin + k * d, origin + (k + 1) * d)).collect()
}

pub fn random_set<R: Rng>(rng: &mut R, max_t: i64, max_parts: usize) -> IntervalSet {
    let n = rng.gen_range(0..=max_parts);
    (0..n)
        .map(|_| {
            let a = rng.gen_range(0..max_t);
            let b = rng.gen_range(a + 1..=max_t.min(a + max_t / 3 + 1));
            iv(a, b)
        })
        .collect()
}

/// Random cell on the 4-digit grid inside a small box, so that coarser
/// grids produce real merges.
pub fn random_cell<R: Rng>(rng: &mut R) -> GeoCell {
    let lat = 40_700_000 + rng.gen_range(0..40) * 100 * (1 + rng.gen_range(0..10));
    let lon = -73_990_000 + rng.gen_range(0..40) * 100 * (1 + rng.gen_range(0..10));
    GeoCell::new(lat, lon, Resolution::TEN_METERS).unwrap()
}

/// A random graph that passes validation: every edge lies inside both
/// endpoints' validity.
pub fn random_graph<R: Rng>(rng: &mut R, max_vertices: usize, max_edges: usize, max_t: i64) -> EvolvingGraph {
    random_graph_with_partitions(rng, max_vertices, max_edges, max_t, tripgraph::graph::DEFAULT_PARTITIONS)
}

pub fn random_graph_with_partitions<R: Rng>(
    rng: &mut R,
    max_vertices: usize,
    max_edges: usize,
    max_t: i64,
    partitions: usize,
) -> EvolvingGraph {
    let n = rng.gen_range(1..=max_vertices);
    let mut cells = BTreeSet::new();
    while cells.len() < n {
        cells.insert(random_cell(rng));
    }
    let mut vertices = Vec::new();
    for (i, cell) in cells.into_iter().enumerate() {
        let mut validity = random_set(rng, max_t, 3);
        if validity.is_empty() {
            let a = rng.gen_range(0..max_t);
            validity = IntervalSet::single(iv(a, rng.gen_range(a + 1..=max_t)));
        }
        vertices.push(VertexRecord { vid: VertexId(i as u64), cell, validity });
    }

    let target = rng.gen_range(0..=max_edges);
    let mut edges = Vec::new();
    let mut attempts = 0;
    while edges.len() < target && attempts < target * 20 {
        attempts += 1;
        let src = rng.gen_range(0..vertices.len());
        let dst = if rng.gen_bool(0.1) { src } else { rng.gen_range(0..vertices.len()) };
        let both = Bitmap::of_set(&vertices[src].validity);
        let other = Bitmap::of_set(&vertices[dst].validity);
        let common = Bitmap(both.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect());
        let runs = common.runs();
        if runs.is_empty() {
            continue;
        }
        let (a, b) = runs[rng.gen_range(0..runs.len())];
        let start = rng.gen_range(a..b);
        let end = rng.gen_range(start + 1..=b);
        edges.push(EdgeRecord {
            eid: EdgeId(edges.len() as u64),
            src: VertexId(src as u64),
            dst: VertexId(dst as u64),
            validity: iv(start, end),
            passengers: rng.gen_range(1..=6),
            fare_cents: rng.gen_range(250..10_000),
            duration_seconds: end - start,
        });
    }
    let g = EvolvingGraph::with_partitions(vertices, edges, Resolution::TEN_METERS, None, partitions).unwrap();
    assert!(g.validate().is_ok(), "generator produced an invalid graph");
    g
}

/// Random trips on the 4-digit grid inside the New York box.
pub fn random_trips<R: Rng>(rng: &mut R, n: usize, max_t: i64) -> Vec<TripRow> {
    let coord = |rng: &mut R, base: i64| base + rng.gen_range(0..30) * 100 * (1 + rng.gen_range(0..30));
    (0..n)
        .map(|_| {
            let pickup = rng.gen_range(0..max_t);
            let dur = rng.gen_range(1..=600);
            TripRow {
                pickup_time: t(pickup),
                dropoff_time: t(pickup + dur),
                pickup_lat: coord(rng, 40_700_000),
                pickup_lon: coord(rng, -73_990_000),
                dropoff_lat: coord(rng, 40_700_000),
                dropoff_lon: coord(rng, -73_990_000),
                passengers: rng.gen_range(1..=4),
                fare_cents: rng.gen_range(250..5_000),
            }
        })
        .collect()
}

/// `q_d(x)` computed independently: decimal rounding, half away from zero.
pub fn oracle_quantize(x: i64, digits: u32) -> i64 {
    let step = 10i64.pow(6 - digits);
    let q = (x.abs() * 2 + step) / (2 * step);
    x.signum() * q * step
}

pub fn oracle_cell(lat: i64, lon: i64, digits: u8) -> (i64, i64) {
    (oracle_quantize(lat, digits as u32), oracle_quantize(lon, digits as u32))
}

/// Expected zoom result per vertex: admitted windows as a bitmap.
pub fn oracle_vertex_zoom(g: &EvolvingGraph, windows: &[(i64, i64)], q: Quantifier) -> BTreeMap<VertexId, Bitmap> {
    let mut out = BTreeMap::new();
    for v in g.vertices() {
        let alive = Bitmap::of_set(&v.validity);
        let mut admitted = Bitmap::empty();
        for &(a, b) in windows {
            if oracle_quantifier(q, &alive, a, b) {
                admitted.fill(a.max(LO), b.min(HI));
            }
        }
        if admitted.0.iter().any(|&x| x) {
            out.insert(v.vid, admitted);
        }
    }
    out
}

/// Expected zoomed edge validity: the first run of consecutive windows that
/// pass the edge quantifier and lie inside both admitted endpoints.
pub fn oracle_edge_zoom(
    e: &EdgeRecord,
    windows: &[(i64, i64)],
    q: Quantifier,
    admitted: &BTreeMap<VertexId, Bitmap>,
) -> Option<(i64, i64)> {
    let own = Bitmap::of_interval(&e.validity);
    let inside = |vid: VertexId, a: i64, b: i64| {
        admitted.get(&vid).is_some_and(|bm| bm.count_in(a, b) == b - a)
    };
    let mut run: Option<(i64, i64)> = None;
    for &(a, b) in windows {
        let ok = own.count_in(a, b) > 0
            && oracle_quantifier(q, &own, a, b)
            && inside(e.src, a, b)
            && inside(e.dst, a, b);
        match (&mut run, ok) {
            (None, true) => run = Some((a, b)),
            (Some(r), true) if r.1 == a => r.1 = b,
            (Some(_), _) => break,
            _ => {}
        }
    }
    run
}

/// Degree per (vertex, window start) by nested loops over windows and edges.
pub fn oracle_degree(
    g: &EvolvingGraph,
    windows: &[(i64, i64)],
    inbound: bool,
) -> BTreeMap<(u64, i64), u64> {
    let mut out = BTreeMap::new();
    for &(a, b) in windows {
        for e in g.edges() {
            let (s, x) = (e.validity.start().seconds(), e.validity.end().seconds());
            if s < b && a < x {
                let target = if inbound { e.dst } else { e.src };
                *out.entry((target.0, a)).or_insert(0) += 1;
            }
        }
    }
    out
}

pub fn micro(deg: f64) -> i64 {
    (deg * MICRO as f64).round() as i64
}

pub fn fixed(d: i64, origin: i64) -> WindowSpec {
    WindowSpec::fixed(d, t(origin)).unwrap()
}
