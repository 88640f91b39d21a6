use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const HEADER: &str = "tpep_pickup_datetime,tpep_dropoff_datetime,passenger_count,pickup_longitude,pickup_latitude,dropoff_longitude,dropoff_latitude,fare_amount\n";

// A 40.7510,-73.9930  B 40.7610,-73.9820  C 40.7200,-74.0010  D 40.7740,-73.8720
// E 40.7800,-73.9540  F 40.7560,-73.9680  G 40.7300,-73.9900
const TWO_MONTHS: &str = "\
2016-03-01 08:00:00,2016-03-01 08:10:00,1,-73.9930,40.7510,-73.9820,40.7610,8.50
2016-03-01 08:02:00,2016-03-01 08:15:00,2,-73.9930,40.7510,-73.9820,40.7610,9.00
2016-03-01 08:05:00,2016-03-01 08:12:00,1,-73.9930,40.7510,-73.9820,40.7610,7.25
2016-03-01 09:00:00,2016-03-01 09:20:00,1,-73.9820,40.7610,-74.0010,40.7200,14.00
2016-03-01 09:30:00,2016-03-01 10:10:00,3,-74.0010,40.7200,-73.8720,40.7740,45.00
2016-03-01 10:30:00,2016-03-01 10:50:00,1,-73.8720,40.7740,-73.9540,40.7800,30.00
2016-03-01 11:00:00,2016-03-01 11:10:00,1,-73.9540,40.7800,-73.9680,40.7560,6.00
2016-03-01 11:30:00,2016-03-01 11:45:00,2,-73.9680,40.7560,-73.9900,40.7300,11.00
2016-03-01 12:00:00,2016-03-01 12:20:00,1,-73.9900,40.7300,-73.9930,40.7510,10.00
2016-04-02 08:00:00,2016-04-02 08:20:00,1,-73.9930,40.7510,-74.0010,40.7200,15.00
2016-04-02 09:00:00,2016-04-02 09:30:00,1,-73.9820,40.7610,-73.8720,40.7740,40.00
2016-04-03 10:00:00,2016-04-03 10:15:00,4,-73.9540,40.7800,-73.9930,40.7510,12.50
";

const EIGHT_ROWS: &str = "\
2016-03-01 08:00:00,2016-03-01 08:10:00,1,-73.9930,40.7510,-73.9820,40.7610,8.50
2016-03-01 08:02:00,2016-03-01 08:15:00,2,-73.9930,40.7510,-73.9820,40.7610,9.00
2016-03-01 08:03:00,2016-03-01 08:15:00,1,0,0,-73.9820,40.7610,9.00
2016-03-01 09:00:00,2016-03-01 09:20:00,1,-73.9820,40.7610,-74.0010,40.7200,14.00
2016-03-01 09:30:00,2016-03-01 09:10:00,3,-74.0010,40.7200,-73.8720,40.7740,45.00
2016-03-01 10:30:00,2016-03-01 10:50:00,1,-73.8720,40.7740,-73.9540,40.7800,30.00
2016-03-01 11:00:00,2016-03-01 11:10:00,1,-73.9540,40.7800,-73.9680,40.7560,6.00
2016-03-01 11:30:00,2016-03-01 11:45:00,2,-73.9680,40.7560,-73.9900,40.7300,11.00
";

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn csv(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, format!("{HEADER}{body}")).unwrap();
        p
    }

    fn graph(&self, body: &str, digits: &str) -> PathBuf {
        let input = self.csv("trips.csv", body);
        let out = self.path(&format!("graph-{digits}"));
        let o = run(&["ingest", "--input", s(&input), "--out", s(&out), "--digits", digits]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tripgraph")).args(args).output().unwrap()
}

fn report(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn ingest_drops_rejected_rows() {
    let f = Fixture::new();
    let input = f.csv("eight.csv", EIGHT_ROWS);
    let out = f.path("g");
    let rep = report(&run(&["ingest", "--input", s(&input), "--out", s(&out)]));
    assert_eq!(rep["counts"]["rows_read"], 8);
    assert_eq!(rep["counts"]["rows_kept"], 6);
    assert_eq!(rep["counts"]["rejected_zero_coordinate"], 1);
    assert_eq!(rep["counts"]["rejected_negative_duration"], 1);
    assert_eq!(rep["counts"]["edges"], 6);
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["edge_count"], 6);
    assert_eq!(manifest["resolution_digits"], 4);
    assert_eq!(manifest["cleaning"]["total_kept"], 6);
}

#[test]
fn ingest_records_requested_digits() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "3");
    let manifest: Value = serde_json::from_slice(&std::fs::read(g.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolution_digits"], 3);
}

#[test]
fn missing_input_is_a_usage_error() {
    let f = Fixture::new();
    let o = run(&["ingest", "--input", s(&f.path("nope.csv")), "--out", s(&f.path("g"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!f.path("g").exists());
}

#[test]
fn missing_named_column_is_a_usage_error() {
    let f = Fixture::new();
    let p = f.path("bad.csv");
    std::fs::write(&p, "a,b,c\n1,2,3\n").unwrap();
    let o = run(&["ingest", "--input", s(&p), "--out", s(&f.path("g"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupt_graph_is_a_data_error() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "4");
    let path = g.join("vertices.tsv");
    let text = std::fs::read_to_string(&path).unwrap().replace("40751000", "40752000");
    std::fs::write(&path, text).unwrap();
    let o = run(&["stats", "--graph", s(&g), "--digits", "4"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn hotspots_span_top_five() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "4");
    let out = f.path("hot.csv");
    report(&run(&["hotspots", "--graph", s(&g), "--digits", "3", "--k", "5", "--out", s(&out)]));
    let header = std::fs::read_to_string(&out).unwrap();
    assert!(header.starts_with("window_start,window_end,rank,direction,lat,lon,degree\n"));
    let rows = csv_rows(&out);
    assert_eq!(rows.iter().filter(|r| r[3] == "in").count(), 5);
    assert_eq!(rows.iter().filter(|r| r[3] == "out").count(), 5);
    // A leaves 4 times, B receives 3
    let first_in = rows.iter().find(|r| r[3] == "in").unwrap();
    assert_eq!((first_in[4].as_str(), first_in[5].as_str(), first_in[6].as_str()), ("40.761", "-73.982", "3"));
    let first_out = rows.iter().find(|r| r[3] == "out").unwrap();
    assert_eq!((first_out[4].as_str(), first_out[5].as_str(), first_out[6].as_str()), ("40.751", "-73.993", "4"));
    assert_eq!(first_out[0], "2016-03-01 08:00:00");
    assert_eq!(first_out[1], "2016-04-03 10:15:00");
}

#[test]
fn hotspots_single_edge_k1() {
    let f = Fixture::new();
    let g = f.graph(&TWO_MONTHS.lines().next().map(|l| format!("{l}\n")).unwrap(), "4");
    let out = f.path("hot.csv");
    report(&run(&["hotspots", "--graph", s(&g), "--digits", "4", "--k", "1", "--out", s(&out)]));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][3..], ["in", "40.7610", "-73.9820", "1"]);
    assert_eq!(rows[1][3..], ["out", "40.7510", "-73.9930", "1"]);
}

#[test]
fn hotspots_by_month_give_two_window_groups() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "4");
    let out = f.path("hot.csv");
    report(&run(&["hotspots", "--graph", s(&g), "--digits", "3", "--window", "month", "--k", "2", "--direction", "out", "--out", s(&out)]));
    let rows = csv_rows(&out);
    let starts: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(starts.into_iter().collect::<Vec<_>>(), ["2016-03-01 00:00:00", "2016-04-01 00:00:00"]);
    assert!(rows.iter().all(|r| r[3] == "out"));
}

#[test]
fn hotspots_reject_finer_digits() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "3");
    let o = run(&["hotspots", "--graph", s(&g), "--digits", "4", "--out", s(&f.path("h.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn routes_lead_with_simultaneous_trips() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "4");
    let (out, stats, geo) = (f.path("routes.csv"), f.path("stats.json"), f.path("routes.geojson"));
    let rep = report(&run(&[
        "routes", "--graph", s(&g), "--digits", "3", "--out", s(&out), "--stats", s(&stats), "--geojson", s(&geo),
    ]));
    assert_eq!(rep["counts"]["trips_considered"], 12);
    assert_eq!(rep["counts"]["self_loop_trips"], 0);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0], ["40.751", "-73.993", "40.761", "-73.982", "2016-03-01 08:00:00", "3", "4", "2475", "1800"]);

    let st: Value = serde_json::from_slice(&std::fs::read(&stats).unwrap()).unwrap();
    assert_eq!(st["max_simultaneous"], 3);
    assert_eq!(st["routes"], 10);

    let gj: Value = serde_json::from_slice(&std::fs::read(&geo).unwrap()).unwrap();
    assert_eq!(gj["type"], "FeatureCollection");
    let features = gj["features"].as_array().unwrap();
    assert_eq!(features.len(), 10);
    assert_eq!(features[0]["geometry"]["type"], "LineString");
    assert_eq!(features[0]["geometry"]["coordinates"], serde_json::json!([[-73.993, 40.751], [-73.982, 40.761]]));
    assert_eq!(features[0]["properties"]["num_trips"], 3);
    assert_eq!(features[0]["properties"]["rank"], 1);
}

#[test]
fn routes_month_filter_and_top() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "4");
    let out = f.path("routes.csv");
    let rep = report(&run(&["routes", "--graph", s(&g), "--digits", "2", "--month", "2016-04", "--top", "2", "--out", s(&out)]));
    assert_eq!(rep["counts"]["trips_considered"], 3);
    assert_eq!(csv_rows(&out).len(), 2);

    let o = run(&["routes", "--graph", s(&g), "--digits", "3", "--month", "2015-01", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["routes", "--graph", s(&g), "--digits", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_match_hand_counts() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "4");
    let out = f.path("stats.csv");
    let rep = report(&run(&["stats", "--graph", s(&g), "--digits", "4", "--window", "month", "--out", s(&out)]));
    assert_eq!(rep["results"]["vertices"], 7);
    assert_eq!(rep["results"]["edges"], 12);
    let rows = csv_rows(&out);
    assert_eq!(rows, [
        ["2016-03-01 00:00:00", "2016-04-01 00:00:00", "7", "9"],
        ["2016-04-01 00:00:00", "2016-05-01 00:00:00", "5", "3"],
    ]);
    let rep = report(&run(&["stats", "--graph", s(&g), "--digits", "2"]));
    assert_eq!(rep["results"]["vertices"], 7);
}

#[test]
fn reports_are_reproducible_apart_from_runtime() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "4");
    let out = f.path("routes.csv");
    let args = ["routes", "--graph", s(&g), "--digits", "3", "--out", s(&out)];
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("runtime");
        v
    };
    let a = strip(report(&run(&args)));
    let first = std::fs::read(&out).unwrap();
    let b = strip(report(&run(&["--threads", "3", args[0], args[1], args[2], args[3], args[4], args[5], args[6]])));
    assert_eq!(a, b);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn report_file_option() {
    let f = Fixture::new();
    let g = f.graph(TWO_MONTHS, "4");
    let rep_path = f.path("report.json");
    let o = run(&["--report", s(&rep_path), "stats", "--graph", s(&g), "--digits", "3"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let rep: Value = serde_json::from_slice(&std::fs::read(&rep_path).unwrap()).unwrap();
    assert_eq!(rep["command"], "stats");
    assert!(rep["runtime"]["timings_ms"].as_array().unwrap().len() >= 2);
}
