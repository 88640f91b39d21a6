use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde_json::{json, Value};
use tripgraph::analytics::{self, RoutePair};
use tripgraph::ingest::{self, CleaningReport, ColumnMap};
use tripgraph::ops::Direction;
use tripgraph::{storage, EvolvingGraph, Interval, Resolution, TimeInstant, WindowSpec};

use crate::error::CliError;
use crate::report::RunReport;
use crate::{DirectionArg, HotspotArgs, IngestArgs, RouteArgs, StatsArgs};

const DEFAULT_GEOJSON_PAIRS: usize = 300;

fn resolution(digits: u8) -> Result<Resolution, CliError> {
    Resolution::new(digits).map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_instant(text: &str) -> Result<TimeInstant, CliError> {
    TimeInstant::parse(text).map_err(|e| CliError::Usage(e.to_string()))
}

/// `YYYY-MM` to the half-open calendar month.
fn parse_month(text: &str) -> Result<Interval, CliError> {
    let first = parse_instant(&format!("{text}-01 00:00:00"))
        .map_err(|_| CliError::Usage(format!("month must be YYYY-MM, got {text:?}")))?;
    WindowSpec::CalendarMonth
        .window_containing(first)
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn parse_window(text: &str, origin: Option<&str>, g: &EvolvingGraph) -> Result<WindowSpec, CliError> {
    match text {
        "month" => Ok(WindowSpec::CalendarMonth),
        "span" => Ok(analytics::span_window(g)?),
        secs => {
            let seconds: i64 = secs.parse().map_err(|_| {
                CliError::Usage(format!("window must be month, span or a number of seconds, got {secs:?}"))
            })?;
            let origin = origin.map(parse_instant).transpose()?.unwrap_or_default();
            WindowSpec::fixed(seconds, origin).map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn load_graph(dir: &Path, report: &mut RunReport) -> Result<EvolvingGraph, CliError> {
    report.input(dir);
    let g = report.stage("load", || storage::load(dir))?;
    report.count("graph_vertices", g.vertex_count() as u64);
    report.count("graph_edges", g.edge_count() as u64);
    Ok(g)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn cleaning_counts(report: &mut RunReport, c: &CleaningReport) {
    report.count("rows_read", c.total_read);
    report.count("rows_kept", c.total_kept);
    report.count("rejected_malformed", c.malformed);
    report.count("rejected_zero_coordinate", c.zero_coordinate);
    report.count("rejected_out_of_bounds", c.out_of_bounds);
    report.count("rejected_negative_duration", c.negative_duration);
    report.count("rejected_zero_duration", c.zero_duration);
    report.count("rejected_too_long", c.too_long);
    report.count("warn_outside_region", c.outside_region_warnings);
}

pub fn ingest(args: &IngestArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("ingest");
    report.param("digits", args.digits);
    report.param("no_header", args.no_header);
    let digits = resolution(args.digits)?;

    let mut map = match &args.column_map {
        Some(path) => {
            report.input(path);
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<ColumnMap>(&text)
                .map_err(|e| CliError::Usage(format!("{}: bad column map: {e}", path.display())))?
        }
        None => ColumnMap::default(),
    };
    if args.no_header {
        map.has_header = false;
    }
    if let Some(d) = args.delimiter {
        if !d.is_ascii() {
            return Err(CliError::Usage(format!("delimiter must be a single ASCII character, got {d:?}")));
        }
        map.delimiter = d;
    }
    report.param("delimiter", map.delimiter.to_string());
    for path in &args.input {
        if !path.is_file() {
            return Err(CliError::Usage(format!("input {} does not exist", path.display())));
        }
    }

    let mut rows = Vec::new();
    let mut parse_errors = 0;
    for path in &args.input {
        report.input(path);
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let parsed = report.stage("parse", || ingest::parse_trips(BufReader::new(file), &map))?;
        parse_errors += parsed.parse_errors;
        rows.extend(parsed.rows);
    }
    let (kept, cleaning) = report.stage("clean", || ingest::clean_trips(rows));
    let cleaning = cleaning.with_parse_errors(parse_errors);
    cleaning_counts(&mut report, &cleaning);
    eprintln!(
        "read {} rows, kept {}: malformed {}, zero coordinate {}, out of bounds {}, \
         negative duration {}, zero duration {}, over 2 h {} ({} kept outside region)",
        cleaning.total_read,
        cleaning.total_kept,
        cleaning.malformed,
        cleaning.zero_coordinate,
        cleaning.out_of_bounds,
        cleaning.negative_duration,
        cleaning.zero_duration,
        cleaning.too_long,
        cleaning.outside_region_warnings,
    );

    let g = report.stage("build", || ingest::build_graph(&kept, digits))?;
    drop(kept);
    report.count("vertices", g.vertex_count() as u64);
    report.count("edges", g.edge_count() as u64);
    report.stage("save", || storage::save_with_report(&g, &args.out, Some(&cleaning)))?;
    report.output(&args.out);
    report.results = Some(serde_json::to_value(cleaning).expect("report serializes"));
    Ok(report)
}

pub fn hotspots(args: &HotspotArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("hotspots");
    report.param("digits", args.digits);
    report.param("window", args.window.clone());
    report.param("origin", args.origin.clone());
    report.param("k", args.k);
    report.param("direction", format!("{:?}", args.direction).to_lowercase());
    let digits = resolution(args.digits)?;
    let g = load_graph(&args.graph, &mut report)?;
    let windows = parse_window(&args.window, args.origin.as_deref(), &g)?;

    let rows = report.stage("hotspots", || analytics::hotspots(&g, digits, &windows, args.k))?;
    let wanted = |d: Direction| match args.direction {
        DirectionArg::Both => true,
        DirectionArg::In => d == Direction::In,
        DirectionArg::Out => d == Direction::Out,
    };

    let mut out = csv_writer(&args.out)?;
    out.write_record(["window_start", "window_end", "rank", "direction", "lat", "lon", "degree"])?;
    let mut written = 0u64;
    for r in rows.iter().filter(|r| wanted(r.direction)) {
        out.write_record([
            r.window.start().format(),
            r.window.end().format(),
            r.rank.to_string(),
            r.direction.as_str().to_string(),
            r.cell.lat_text(),
            r.cell.lon_text(),
            r.degree.to_string(),
        ])?;
        written += 1;
    }
    out.flush().map_err(|e| CliError::io(&args.out, e))?;
    report.output(&args.out);
    report.count("hotspot_rows", written);
    Ok(report)
}

fn geojson(pairs: &[RoutePair]) -> Value {
    let features: Vec<Value> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": [
                        [p.source.lon_degrees(), p.source.lat_degrees()],
                        [p.dest.lon_degrees(), p.dest.lat_degrees()],
                    ],
                },
                "properties": { "num_trips": p.trip_count, "rank": i + 1 },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn routes(args: &RouteArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("routes");
    report.param("digits", args.digits);
    report.param("window_seconds", args.window_seconds);
    report.param("window_origin", args.window_origin.clone());
    report.param("month", args.month.clone());
    report.param("top", args.top);
    let digits = resolution(args.digits)?;
    let origin = args.window_origin.as_deref().map(parse_instant).transpose()?.unwrap_or_default();
    let windows = WindowSpec::fixed(args.window_seconds, origin).map_err(|e| CliError::Usage(e.to_string()))?;
    let g = load_graph(&args.graph, &mut report)?;
    let span = g.meta().time_span.ok_or_else(|| CliError::Data("graph is empty".into()))?;
    let period = args.month.as_deref().map(parse_month).transpose()?;
    if let Some(month) = period {
        if !month.overlaps(&span) {
            return Err(CliError::Usage(format!(
                "month {} lies outside the graph span {} .. {}",
                args.month.as_deref().unwrap_or_default(),
                span.start(),
                span.end()
            )));
        }
    }

    let result = report.stage("group_by", || analytics::popular_routes_in(&g, digits, &windows, period))?;
    report.count("trips_considered", result.trips_considered);
    report.count("self_loop_trips", result.self_loop_trips);
    report.count("route_windows", result.routes.len() as u64);

    let limit = args.top.unwrap_or(usize::MAX);
    let mut out = csv_writer(&args.out)?;
    out.write_record([
        "source_lat",
        "source_lon",
        "dest_lat",
        "dest_lon",
        "window_start",
        "num_trips",
        "total_passengers",
        "total_cost_cents",
        "total_duration_seconds",
    ])?;
    for r in result.routes.iter().take(limit) {
        out.write_record([
            r.source.lat_text(),
            r.source.lon_text(),
            r.dest.lat_text(),
            r.dest.lon_text(),
            r.start.format(),
            r.num_trips.to_string(),
            r.total_passengers.to_string(),
            r.total_cost_cents.to_string(),
            r.total_duration_seconds.to_string(),
        ])?;
    }
    out.flush().map_err(|e| CliError::io(&args.out, e))?;
    report.output(&args.out);

    if let Some(path) = &args.stats {
        let stats = report.stage("route_stats", || analytics::route_stats(&result.routes));
        report.count("routes", stats.per_route.len() as u64);
        report.count("max_simultaneous", stats.max_simultaneous);
        let at_least: Vec<Value> = stats
            .at_least
            .iter()
            .map(|&(m, n)| json!({ "min_trips": m, "routes": n, "exactly": stats.routes_with_exactly(m) }))
            .collect();
        let top: Vec<Value> = stats
            .per_route
            .iter()
            .take(DEFAULT_GEOJSON_PAIRS)
            .map(|r| {
                json!({
                    "source_lat": r.source.lat_text(), "source_lon": r.source.lon_text(),
                    "dest_lat": r.dest.lat_text(), "dest_lon": r.dest.lon_text(),
                    "max_simultaneous": r.max_simultaneous,
                })
            })
            .collect();
        let value = json!({
            "routes": stats.per_route.len(),
            "max_simultaneous": stats.max_simultaneous,
            "at_least": at_least,
            "top_routes": top,
        });
        write_json(path, &value)?;
        report.output(path);
    }

    if let Some(path) = &args.geojson {
        let n = args.top.unwrap_or(DEFAULT_GEOJSON_PAIRS);
        let pairs = report.stage("top_pairs", || {
            analytics::top_route_pairs(&g, digits, period.unwrap_or(span), n)
        })?;
        write_json(path, &geojson(&pairs))?;
        report.count("geojson_features", pairs.len() as u64);
        report.output(path);
    }
    Ok(report)
}

pub fn stats(args: &StatsArgs) -> Result<RunReport, CliError> {
    let mut report = RunReport::new("stats");
    report.param("digits", args.digits);
    report.param("window", args.window.clone());
    if args.window != "month" && args.window != "span" {
        return Err(CliError::Usage(format!("window must be month or span, got {:?}", args.window)));
    }
    let digits = resolution(args.digits)?;
    let g = load_graph(&args.graph, &mut report)?;
    let windows = parse_window(&args.window, None, &g)?;
    let stats = report.stage("stats", || analytics::graph_stats(&g, digits, &windows))?;
    report.count("vertices", stats.vertices);
    report.count("edges", stats.edges);

    eprintln!("resolution {} digits: {} locations, {} trips", digits, stats.vertices, stats.edges);
    for w in &stats.windows {
        eprintln!("  {} .. {}  {:>10} locations {:>12} trips", w.window.start(), w.window.end(), w.vertices, w.edges);
    }
    if let Some(path) = &args.out {
        let mut out = csv_writer(path)?;
        out.write_record(["window_start", "window_end", "vertices", "edges"])?;
        for w in &stats.windows {
            out.write_record([
                w.window.start().format(),
                w.window.end().format(),
                w.vertices.to_string(),
                w.edges.to_string(),
            ])?;
        }
        out.flush().map_err(|e| CliError::io(path, e))?;
        report.output(path);
    }
    let windows: Vec<Value> = stats
        .windows
        .iter()
        .map(|w| {
            json!({
                "window_start": w.window.start().format(),
                "window_end": w.window.end().format(),
                "vertices": w.vertices,
                "edges": w.edges,
            })
        })
        .collect();
    report.results = Some(json!({
        "resolution_digits": digits.digits(),
        "vertices": stats.vertices,
        "edges": stats.edges,
        "windows": windows,
    }));
    Ok(report)
}
