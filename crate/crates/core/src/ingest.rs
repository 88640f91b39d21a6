//! Trip-record ingestion: CSV parsing, cleaning, and graph construction.

use std::collections::HashMap;
use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{parse_scaled_decimal, GeoCell, GeoError, Resolution, MICRO};
use crate::graph::{EdgeId, EdgeRecord, EvolvingGraph, GraphError, VertexId, VertexRecord};
pub use crate::geo::quantize;
use crate::temporal::{Interval, TimeInstant};

/// Longest trip kept, inclusive.
pub const MAX_TRIP_SECONDS: i64 = 2 * 60 * 60;

const PARSE_BATCH: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("column map refers to column {field} by name but the input has no header")]
    NamedColumnWithoutHeader { field: &'static str },
    #[error("cannot read input: {0}")]
    Csv(#[from] csv::Error),
    #[error("no trips to build a graph from")]
    EmptyInput,
    #[error("trip {row} does not end after it starts; clean the rows first")]
    UncleanTrip { row: usize },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One parsed (not yet cleaned) trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripRow {
    pub pickup_time: TimeInstant,
    pub dropoff_time: TimeInstant,
    pub pickup_lat: i64,
    pub pickup_lon: i64,
    pub dropoff_lat: i64,
    pub dropoff_lon: i64,
    pub passengers: u32,
    pub fare_cents: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        ColumnRef::Name(s.to_string())
    }
}

/// Where each required field lives in the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub has_header: bool,
    pub delimiter: char,
    pub pickup_time: ColumnRef,
    pub dropoff_time: ColumnRef,
    pub pickup_lat: ColumnRef,
    pub pickup_lon: ColumnRef,
    pub dropoff_lat: ColumnRef,
    pub dropoff_lon: ColumnRef,
    pub passengers: ColumnRef,
    pub fare: ColumnRef,
}

impl Default for ColumnMap {
    /// The 2015–2016 yellow-cab schema.
    fn default() -> Self {
        ColumnMap {
            has_header: true,
            delimiter: ',',
            pickup_time: "tpep_pickup_datetime".into(),
            dropoff_time: "tpep_dropoff_datetime".into(),
            pickup_lat: "pickup_latitude".into(),
            pickup_lon: "pickup_longitude".into(),
            dropoff_lat: "dropoff_latitude".into(),
            dropoff_lon: "dropoff_longitude".into(),
            passengers: "passenger_count".into(),
            fare: "fare_amount".into(),
        }
    }
}

impl ColumnMap {
    fn fields(&self) -> [(&'static str, &ColumnRef); 8] {
        [
            ("pickup_time", &self.pickup_time),
            ("dropoff_time", &self.dropoff_time),
            ("pickup_lat", &self.pickup_lat),
            ("pickup_lon", &self.pickup_lon),
            ("dropoff_lat", &self.dropoff_lat),
            ("dropoff_lon", &self.dropoff_lon),
            ("passengers", &self.passengers),
            ("fare", &self.fare),
        ]
    }

    fn resolve(&self, header: Option<&csv::StringRecord>) -> Result<[usize; 8], IngestError> {
        let by_name: HashMap<&str, usize> = header
            .map(|h| h.iter().enumerate().map(|(i, name)| (name.trim(), i)).collect())
            .unwrap_or_default();
        let mut out = [0usize; 8];
        for (slot, (field, col)) in out.iter_mut().zip(self.fields()) {
            *slot = match col {
                ColumnRef::Index(i) => *i,
                ColumnRef::Name(name) => {
                    if header.is_none() {
                        return Err(IngestError::NamedColumnWithoutHeader { field });
                    }
                    *by_name.get(name.as_str()).ok_or_else(|| IngestError::MissingColumn(name.clone()))?
                }
            };
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedTrips {
    pub rows: Vec<TripRow>,
    pub parse_errors: u64,
}

/// Parses delimited trip records. Rows that fail in any mapped field are
/// counted and skipped; only configuration and I/O problems are fatal.
pub fn parse_trips<R: Read>(input: R, map: &ColumnMap) -> Result<ParsedTrips, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(map.has_header)
        .delimiter(map.delimiter as u8)
        .flexible(true)
        .from_reader(input);
    let header = if map.has_header { Some(reader.headers()?.clone()) } else { None };
    let columns = map.resolve(header.as_ref())?;

    let mut out = ParsedTrips::default();
    let mut batch: Vec<csv::StringRecord> = Vec::with_capacity(PARSE_BATCH);
    let mut record = csv::StringRecord::new();
    loop {
        let more = match reader.read_record(&mut record) {
            Ok(more) => more,
            // undecodable bytes are a bad row, not a bad file
            Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => {
                out.parse_errors += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if more {
            batch.push(record.clone());
        }
        if batch.len() == PARSE_BATCH || (!more && !batch.is_empty()) {
            let parsed: Vec<Option<TripRow>> =
                batch.par_iter().map(|r| parse_record(r, &columns)).collect();
            for row in parsed {
                match row {
                    Some(r) => out.rows.push(r),
                    None => out.parse_errors += 1,
                }
            }
            batch.clear();
        }
        if !more {
            break;
        }
    }
    Ok(out)
}

fn parse_record(record: &csv::StringRecord, columns: &[usize; 8]) -> Option<TripRow> {
    let field = |i: usize| record.get(columns[i]);
    let coord = |i: usize| parse_scaled_decimal(field(i)?, 6);
    Some(TripRow {
        pickup_time: TimeInstant::parse(field(0)?).ok()?,
        dropoff_time: TimeInstant::parse(field(1)?).ok()?,
        pickup_lat: coord(2)?,
        pickup_lon: coord(3)?,
        dropoff_lat: coord(4)?,
        dropoff_lon: coord(5)?,
        passengers: field(6)?.trim().parse().ok()?,
        fare_cents: parse_scaled_decimal(field(7)?, 2)?,
    })
}

/// Per-rule rejection counts; every row read lands in exactly one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub total_read: u64,
    pub malformed: u64,
    pub zero_coordinate: u64,
    pub out_of_bounds: u64,
    pub negative_duration: u64,
    pub zero_duration: u64,
    pub too_long: u64,
    pub total_kept: u64,
    /// Kept rows with a coordinate outside the New York region. Informational.
    pub outside_region_warnings: u64,
}

impl CleaningReport {
    pub fn total_rejected(&self) -> u64 {
        self.malformed
            + self.zero_coordinate
            + self.out_of_bounds
            + self.negative_duration
            + self.zero_duration
            + self.too_long
    }

    /// Folds in rows that never parsed.
    pub fn with_parse_errors(mut self, parse_errors: u64) -> Self {
        self.malformed += parse_errors;
        self.total_read += parse_errors;
        self
    }

    pub fn merge(&mut self, other: &CleaningReport) {
        self.total_read += other.total_read;
        self.malformed += other.malformed;
        self.zero_coordinate += other.zero_coordinate;
        self.out_of_bounds += other.out_of_bounds;
        self.negative_duration += other.negative_duration;
        self.zero_duration += other.zero_duration;
        self.too_long += other.too_long;
        self.total_kept += other.total_kept;
        self.outside_region_warnings += other.outside_region_warnings;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    ZeroCoordinate,
    OutOfBounds,
    NegativeDuration,
    ZeroDuration,
    TooLong,
}

/// First matching rule, in fixed order.
pub fn rejection(row: &TripRow) -> Option<Rejection> {
    let coords = [row.pickup_lat, row.pickup_lon, row.dropoff_lat, row.dropoff_lon];
    if coords.contains(&0) {
        return Some(Rejection::ZeroCoordinate);
    }
    let lat_ok = |v: i64| v.abs() <= 90 * MICRO;
    let lon_ok = |v: i64| v.abs() <= 180 * MICRO;
    if !(lat_ok(row.pickup_lat) && lat_ok(row.dropoff_lat) && lon_ok(row.pickup_lon) && lon_ok(row.dropoff_lon)) {
        return Some(Rejection::OutOfBounds);
    }
    let duration = row.dropoff_time - row.pickup_time;
    match duration {
        d if d < 0 => Some(Rejection::NegativeDuration),
        0 => Some(Rejection::ZeroDuration),
        d if d > MAX_TRIP_SECONDS => Some(Rejection::TooLong),
        _ => None,
    }
}

fn outside_region(row: &TripRow) -> bool {
    let lat = |v: i64| (40 * MICRO..=42 * MICRO).contains(&v);
    let lon = |v: i64| (-75 * MICRO..=-72 * MICRO).contains(&v);
    !(lat(row.pickup_lat) && lat(row.dropoff_lat) && lon(row.pickup_lon) && lon(row.dropoff_lon))
}

pub fn clean_trips(rows: Vec<TripRow>) -> (Vec<TripRow>, CleaningReport) {
    let mut report = CleaningReport { total_read: rows.len() as u64, ..Default::default() };
    let verdicts: Vec<Option<Rejection>> = rows.par_iter().map(rejection).collect();
    let mut kept = Vec::with_capacity(rows.len());
    for (row, verdict) in rows.into_iter().zip(verdicts) {
        match verdict {
            Some(Rejection::ZeroCoordinate) => report.zero_coordinate += 1,
            Some(Rejection::OutOfBounds) => report.out_of_bounds += 1,
            Some(Rejection::NegativeDuration) => report.negative_duration += 1,
            Some(Rejection::ZeroDuration) => report.zero_duration += 1,
            Some(Rejection::TooLong) => report.too_long += 1,
            None => {
                if outside_region(&row) {
                    report.outside_region_warnings += 1;
                }
                kept.push(row);
            }
        }
    }
    report.total_kept = kept.len() as u64;
    (kept, report)
}

/// Builds the initial graph: one vertex per distinct quantized cell, one
/// edge per trip. Vertex validity is `[first incident pickup, last incident
/// dropoff)`. Vids follow grouping-key order; eids follow row order.
pub fn build_graph(rows: &[TripRow], resolution: Resolution) -> Result<EvolvingGraph, IngestError> {
    if rows.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let cells: Vec<(GeoCell, GeoCell)> = rows
        .par_iter()
        .map(|r| {
            Ok((
                GeoCell::from_raw(r.pickup_lat, r.pickup_lon, resolution)?,
                GeoCell::from_raw(r.dropoff_lat, r.dropoff_lon, resolution)?,
            ))
        })
        .collect::<Result<_, GeoError>>()?;

    let mut distinct: Vec<GeoCell> = cells.iter().flat_map(|&(a, b)| [a, b]).collect();
    distinct.par_sort_unstable();
    distinct.dedup();
    let vid_of: HashMap<GeoCell, VertexId> = distinct
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, VertexId(i as u64)))
        .collect();

    let mut hull: Vec<Option<(TimeInstant, TimeInstant)>> = vec![None; distinct.len()];
    let mut edges = Vec::with_capacity(rows.len());
    for (eid, (row, (pick, drop))) in rows.iter().zip(&cells).enumerate() {
        let src = vid_of[pick];
        let dst = vid_of[drop];
        for vid in [src, dst] {
            let slot = &mut hull[vid.0 as usize];
            *slot = Some(match *slot {
                None => (row.pickup_time, row.dropoff_time),
                Some((a, b)) => (a.min(row.pickup_time), b.max(row.dropoff_time)),
            });
        }
        let validity = Interval::new(row.pickup_time, row.dropoff_time)
            .map_err(|_| IngestError::UncleanTrip { row: eid })?;
        edges.push(EdgeRecord {
            eid: EdgeId(eid as u64),
            src,
            dst,
            validity,
            passengers: row.passengers,
            fare_cents: row.fare_cents,
            duration_seconds: validity.length(),
        });
    }

    let vertices = distinct
        .into_iter()
        .zip(hull)
        .enumerate()
        .map(|(i, (cell, span))| {
            let (a, b) = span.expect("every distinct cell has an incident trip");
            VertexRecord {
                vid: VertexId(i as u64),
                cell,
                validity: Interval::new(a, b).expect("trips are nonempty").into(),
            }
        })
        .collect();
    Ok(EvolvingGraph::from_parts(vertices, edges, resolution, None)?)
}
