//! On-disk graph directory.
//!
//! ```text
//! <dir>/manifest.json        format version, counts, span, digests
//! <dir>/vertices.tsv         vid  lat_micro  lon_micro  validity
//! <dir>/edges-00000.tsv ...  eid  src  dst  start  end  passengers  fare_cents  duration_seconds
//! ```
//!
//! Data files are tab-separated with a header row; vertex validity is
//! `start,end` pairs joined by `;`. Rows follow the graph's sort order, so
//! equal graphs produce identical bytes. The manifest is written last.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geo::{GeoCell, Resolution};
use crate::graph::{EdgeId, EdgeRecord, EvolvingGraph, GraphMeta, VertexId, VertexRecord};
use crate::ingest::CleaningReport;
use crate::temporal::{Interval, IntervalSet, WindowSpec};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VERTEX_FILE: &str = "vertices.tsv";
const VERTEX_HEADER: &str = "vid\tlat_micro\tlon_micro\tvalidity";
const EDGE_HEADER: &str =
    "eid\tsrc\tdst\tstart\tend\tpassengers\tfare_cents\tduration_seconds";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: bad manifest: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("{path}: format version {found} (this build reads {FORMAT_VERSION})")]
    VersionMismatch { path: PathBuf, found: u32 },
    #[error("{file}: digest mismatch (manifest {expected}, file {actual})")]
    DigestMismatch { file: String, expected: String, actual: String },
    #[error("{file}: manifest says {expected} rows, file has {actual}")]
    CountMismatch { file: String, expected: u64, actual: u64 },
    #[error("{file} row {row}: {message}")]
    BadRow { file: String, row: usize, message: String },
    #[error("loaded graph fails validation: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphManifest {
    pub format_version: u32,
    pub resolution_digits: Resolution,
    pub time_span: Option<Interval>,
    pub vertex_count: u64,
    pub edge_count: u64,
    pub partition_count: usize,
    pub window_spec: Option<WindowSpec>,
    pub cleaning: Option<CleaningReport>,
    pub vertex_file: FileEntry,
    pub edge_files: Vec<FileEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StorageError + '_ {
    move |source| StorageError::Io { path: path.to_path_buf(), source }
}

pub fn edge_file_name(partition: usize) -> String {
    format!("edges-{partition:05}.tsv")
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn render_vertices(vertices: &[VertexRecord]) -> String {
    let mut out = String::with_capacity(vertices.len() * 48 + VERTEX_HEADER.len() + 1);
    out.push_str(VERTEX_HEADER);
    out.push('\n');
    for v in vertices {
        let validity: Vec<String> = v
            .validity
            .iter()
            .map(|i| format!("{},{}", i.start().seconds(), i.end().seconds()))
            .collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            v.vid.0,
            v.cell.lat_micro(),
            v.cell.lon_micro(),
            validity.join(";")
        ));
    }
    out
}

fn render_edges(edges: &[EdgeRecord]) -> String {
    let mut out = String::with_capacity(edges.len() * 64 + EDGE_HEADER.len() + 1);
    out.push_str(EDGE_HEADER);
    out.push('\n');
    for e in edges {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            e.eid.0,
            e.src.0,
            e.dst.0,
            e.validity.start().seconds(),
            e.validity.end().seconds(),
            e.passengers,
            e.fare_cents,
            e.duration_seconds
        ));
    }
    out
}

fn read_manifest(path: &Path) -> Result<GraphManifest, StorageError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|source| StorageError::Manifest { path: path.to_path_buf(), source })?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(StorageError::VersionMismatch { path: path.to_path_buf(), found });
    }
    serde_json::from_value(value)
        .map_err(|source| StorageError::Manifest { path: path.to_path_buf(), source })
}

fn write_file(dir: &Path, name: &str, contents: &str, rows: u64) -> Result<FileEntry, StorageError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(FileEntry { name: name.to_string(), rows, sha256: digest(contents.as_bytes()) })
}

pub fn save(g: &EvolvingGraph, dir: &Path) -> Result<GraphManifest, StorageError> {
    save_with_report(g, dir, None)
}

/// Writes the graph directory, echoing the ingest cleaning report into the
/// manifest. Refuses to touch a directory holding another format version.
pub fn save_with_report(
    g: &EvolvingGraph,
    dir: &Path,
    cleaning: Option<&CleaningReport>,
) -> Result<GraphManifest, StorageError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        read_manifest(&manifest_path).map_err(|e| match e {
            StorageError::VersionMismatch { .. } => e,
            other => StorageError::Invalid(format!("existing manifest unreadable: {other}")),
        })?;
        fs::remove_file(&manifest_path).map_err(io_err(&manifest_path))?;
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    remove_stale_partitions(dir, g.partition_count())?;

    let vertex_file = write_file(dir, VERTEX_FILE, &render_vertices(g.vertices()), g.vertex_count() as u64)?;
    let edge_files = g
        .partitions()
        .par_iter()
        .enumerate()
        .map(|(p, part)| write_file(dir, &edge_file_name(p), &render_edges(part), part.len() as u64))
        .collect::<Result<Vec<_>, _>>()?;

    let meta = g.meta();
    let manifest = GraphManifest {
        format_version: FORMAT_VERSION,
        resolution_digits: meta.resolution,
        time_span: meta.time_span,
        vertex_count: meta.vertex_count,
        edge_count: meta.edge_count,
        partition_count: g.partition_count(),
        window_spec: meta.window_spec,
        cleaning: cleaning.copied(),
        vertex_file,
        edge_files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(manifest)
}

fn remove_stale_partitions(dir: &Path, keep: usize) -> Result<(), StorageError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let index = name
            .strip_prefix("edges-")
            .and_then(|rest| rest.strip_suffix(".tsv"))
            .and_then(|n| n.parse::<usize>().ok());
        if index.is_some_and(|i| i >= keep) {
            fs::remove_file(entry.path()).map_err(io_err(&entry.path()))?;
        }
    }
    Ok(())
}

pub fn read_manifest_in(dir: &Path) -> Result<GraphManifest, StorageError> {
    read_manifest(&dir.join(MANIFEST_FILE))
}

/// Loads and verifies a graph directory: row syntax, digests, counts, and
/// the graph invariants.
pub fn load(dir: &Path) -> Result<EvolvingGraph, StorageError> {
    let manifest = read_manifest_in(dir)?;
    let resolution = manifest.resolution_digits;

    let vertices = load_file(dir, &manifest.vertex_file, VERTEX_HEADER, |f| parse_vertex(f, resolution))?;
    let partitions: Vec<Vec<EdgeRecord>> = manifest
        .edge_files
        .par_iter()
        .map(|entry| load_file(dir, entry, EDGE_HEADER, parse_edge))
        .collect::<Result<_, _>>()?;
    if partitions.len() != manifest.partition_count {
        return Err(StorageError::Invalid(format!(
            "manifest lists {} edge files for {} partitions",
            partitions.len(),
            manifest.partition_count
        )));
    }

    let meta = GraphMeta {
        resolution,
        window_spec: manifest.window_spec,
        time_span: manifest.time_span,
        vertex_count: manifest.vertex_count,
        edge_count: manifest.edge_count,
    };
    let g = EvolvingGraph::from_raw_parts(vertices, partitions, meta);
    let report = g.validate();
    if !report.is_ok() {
        return Err(StorageError::Invalid(report.to_string()));
    }
    Ok(g)
}

/// Reads one data file: row count, then row syntax (so a damaged row is
/// reported by number), then the content digest.
fn load_file<T: Send>(
    dir: &Path,
    entry: &FileEntry,
    header: &str,
    parse: impl Fn(&[&str]) -> Result<T, String>,
) -> Result<Vec<T>, StorageError> {
    let path = dir.join(&entry.name);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let rows = text.lines().count().saturating_sub(1) as u64;
    if rows != entry.rows {
        return Err(StorageError::CountMismatch { file: entry.name.clone(), expected: entry.rows, actual: rows });
    }
    let parsed = parse_rows(&entry.name, &text, header, parse)?;
    let actual = digest(text.as_bytes());
    if actual != entry.sha256 {
        return Err(StorageError::DigestMismatch { file: entry.name.clone(), expected: entry.sha256.clone(), actual });
    }
    Ok(parsed)
}

/// Parses every data row; `row` numbers count data rows from 1.
fn parse_rows<T>(
    file: &str,
    text: &str,
    header: &str,
    parse: impl Fn(&[&str]) -> Result<T, String>,
) -> Result<Vec<T>, StorageError> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(StorageError::BadRow { file: file.to_string(), row: 0, message: "unexpected header".into() });
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            parse(&fields).map_err(|message| StorageError::BadRow { file: file.to_string(), row: i + 1, message })
        })
        .collect()
}

fn num<T: std::str::FromStr>(field: &str, name: &str) -> Result<T, String> {
    field.parse().map_err(|_| format!("bad {name} {field:?}"))
}

fn parse_vertex(f: &[&str], resolution: Resolution) -> Result<VertexRecord, String> {
    let [vid, lat, lon, validity] = f else {
        return Err(format!("expected 4 fields, got {}", f.len()));
    };
    let cell = GeoCell::new(num(lat, "lat_micro")?, num(lon, "lon_micro")?, resolution)
        .map_err(|e| e.to_string())?;
    let mut intervals = Vec::new();
    for pair in validity.split(';') {
        let (a, b) = pair.split_once(',').ok_or_else(|| format!("bad interval {pair:?}"))?;
        intervals.push(Interval::from_seconds(num(a, "start")?, num(b, "end")?).map_err(|e| e.to_string())?);
    }
    let validity = IntervalSet::from_canonical(intervals).ok_or("validity not canonical")?;
    Ok(VertexRecord { vid: VertexId(num(vid, "vid")?), cell, validity })
}

fn parse_edge(f: &[&str]) -> Result<EdgeRecord, String> {
    let [eid, src, dst, start, end, pax, fare, dur] = f else {
        return Err(format!("expected 8 fields, got {}", f.len()));
    };
    Ok(EdgeRecord {
        eid: EdgeId(num(eid, "eid")?),
        src: VertexId(num(src, "src")?),
        dst: VertexId(num(dst, "dst")?),
        validity: Interval::from_seconds(num(start, "start")?, num(end, "end")?).map_err(|e| e.to_string())?,
        passengers: num(pax, "passengers")?,
        fare_cents: num(fare, "fare_cents")?,
        duration_seconds: num(dur, "duration_seconds")?,
    })
}
