use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use stormgrid::geo::GeoPoint;
use stormgrid::grid::parse_case;
use stormgrid::impact::exposure_for_step;
use stormgrid::{FragilityCurve, WindFieldParams};
use stormgrid_cli::geojson::export_geojson;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn stormgrid(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_stormgrid"));
    cmd.args(args).env_remove("STORMGRID_THREADS");
    if let Some(n) = threads {
        cmd.env("STORMGRID_THREADS", n);
    }
    cmd.output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs a small gulf50 study and returns the run directory.
fn simulate(out: &Path, extra: &[&str], threads: Option<&str>) -> PathBuf {
    let case = fixture("gulf50.m");
    let coords = fixture("gulf50_coords.csv");
    let mut args = vec![
        "simulate",
        "--case",
        path_str(&case),
        "--coords",
        path_str(&coords),
        "--out-dir",
        path_str(out),
    ];
    args.extend_from_slice(extra);
    let o = stormgrid(&args, threads);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8(o.stdout).unwrap().trim())
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.cfg");
    std::fs::write(&p, "# quick study\nn_hurricanes = 4\ntrials_per_cell = 60\n").unwrap();
    p
}

fn history_arg() -> String {
    fixture("history_sample.csv").to_str().unwrap().to_string()
}

#[test]
fn missing_case_is_a_usage_error() {
    let o = stormgrid(&["simulate", "--coords", "x.csv", "--history", "h.csv"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreadable_input_fails_with_one_line() {
    let o = stormgrid(
        &["simulate", "--case", "/nonexistent.m", "--coords", "x.csv", "--history", "h.csv"],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("stormgrid: "));
}

#[test]
fn gen_scenarios_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let h = history_arg();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = stormgrid(&["gen-scenarios", "--history", &h, "--seed", "11", "--out", path_str(out)], None);
        assert!(o.status.success());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1 + 30 * 7);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let cfg = dir.path().join("none.cfg");
    std::fs::write(&cfg, "n_hurricanes = 0\n").unwrap();
    let o = stormgrid(
        &["gen-scenarios", "--history", &h, "--config", path_str(&cfg), "--out", path_str(&a)],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runs_are_byte_identical_and_resum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let h = history_arg();
    let extra = ["--history", &h, "--config", path_str(&cfg), "--seed", "9"];
    let r1 = simulate(dir.path(), &extra, Some("1"));
    let r2 = simulate(dir.path(), &extra, Some("4"));
    assert_ne!(r1, r2);
    let losses = std::fs::read_to_string(r1.join("losses.csv")).unwrap();
    assert_eq!(losses, std::fs::read_to_string(r2.join("losses.csv")).unwrap());
    assert_eq!(
        std::fs::read_to_string(r1.join("aggregate.csv")).unwrap(),
        std::fs::read_to_string(r2.join("aggregate.csv")).unwrap()
    );

    // aggregate is the plain mean of the per-cell rows at each step
    let aggregate = std::fs::read_to_string(r1.join("aggregate.csv")).unwrap();
    for line in aggregate.lines().skip(1) {
        let (t, loss) = line.split_once(',').unwrap();
        let rows: Vec<f64> = losses
            .lines()
            .skip(1)
            .filter(|l| l.split(',').next() == Some(t))
            .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
            .collect();
        assert_eq!(rows.len(), 3 * 4);
        let mean = rows.iter().sum::<f64>() / rows.len() as f64;
        assert!((mean - loss.parse::<f64>().unwrap()).abs() < 1e-9);
    }
}

#[test]
fn scenario_file_reproduces_sampled_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let h = history_arg();
    let scen = dir.path().join("scen.csv");
    let o = stormgrid(
        &["gen-scenarios", "--history", &h, "--config", path_str(&cfg), "--seed", "5", "--out", path_str(&scen)],
        None,
    );
    assert!(o.status.success());
    let sampled = simulate(dir.path(), &["--history", &h, "--config", path_str(&cfg), "--seed", "5"], None);
    let reused = simulate(
        dir.path(),
        &["--scenarios", path_str(&scen), "--config", path_str(&cfg), "--seed", "5"],
        None,
    );
    assert_eq!(
        std::fs::read_to_string(sampled.join("losses.csv")).unwrap(),
        std::fs::read_to_string(reused.join("losses.csv")).unwrap()
    );
}

#[test]
fn manifest_is_enough_to_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let h = history_arg();
    let first = simulate(dir.path(), &["--history", &h, "--config", path_str(&cfg), "--seed", "21"], None);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 21);
    for key in ["case", "coords", "history"] {
        assert_eq!(manifest["inputs"][key]["sha256"].as_str().unwrap().len(), 64);
    }

    let snapshot = dir.path().join("snapshot.cfg");
    let text: String = manifest["config"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| format!("{k} = {}\n", v.as_str().unwrap()))
        .collect();
    std::fs::write(&snapshot, text).unwrap();
    let history = manifest["inputs"]["history"]["path"].as_str().unwrap().to_string();
    let second = simulate(dir.path(), &["--history", &history, "--config", path_str(&snapshot)], None);
    assert_eq!(
        std::fs::read_to_string(first.join("losses.csv")).unwrap(),
        std::fs::read_to_string(second.join("losses.csv")).unwrap()
    );
}

#[test]
fn geojson_files_are_written_per_cell_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("one.cfg");
    std::fs::write(&cfg, "n_hurricanes = 2\nn_tracks = 1\ntrials_per_cell = 10\ntime_steps = 0, 6\n").unwrap();
    let h = history_arg();
    let run = simulate(dir.path(), &["--history", &h, "--config", path_str(&cfg), "--geojson"], None);
    let mut names: Vec<String> = std::fs::read_dir(run.join("geojson"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["t0_track1_h1.geojson", "t0_track1_h2.geojson", "t6_track1_h1.geojson", "t6_track1_h2.geojson"]);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(run.join("geojson").join(&names[0])).unwrap()).unwrap();
    check_structure(&doc);
    assert_eq!(doc["features"].as_array().unwrap().len(), 62 + 3);
}

/// Signed shoelace area in lon/lat degrees; positive for counter-clockwise rings.
fn shoelace(ring: &[Value]) -> f64 {
    ring.windows(2)
        .map(|w| {
            let (x0, y0) = (w[0][0].as_f64().unwrap(), w[0][1].as_f64().unwrap());
            let (x1, y1) = (w[1][0].as_f64().unwrap(), w[1][1].as_f64().unwrap());
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        / 2.0
}

fn check_position(p: &Value) {
    let p = p.as_array().unwrap();
    assert_eq!(p.len(), 2);
    let (lon, lat) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
    assert!((-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat));
}

fn check_structure(doc: &Value) {
    assert_eq!(doc["type"], "FeatureCollection");
    for f in doc["features"].as_array().unwrap() {
        assert_eq!(f["type"], "Feature");
        assert!(f["properties"].is_object());
        let geom = &f["geometry"];
        match geom["type"].as_str().unwrap() {
            "Point" => check_position(&geom["coordinates"]),
            "LineString" => {
                let coords = geom["coordinates"].as_array().unwrap();
                assert!(coords.len() >= 2);
                coords.iter().for_each(check_position);
            }
            "Polygon" => {
                let rings = geom["coordinates"].as_array().unwrap();
                assert_eq!(rings.len(), 1);
                let ring = rings[0].as_array().unwrap();
                assert!(ring.len() >= 4);
                assert_eq!(ring.first(), ring.last());
                ring.iter().for_each(check_position);
                assert!(shoelace(ring) > 0.0);
            }
            other => panic!("unexpected geometry {other}"),
        }
    }
}

#[test]
fn geojson_feature_counts() {
    let params = WindFieldParams::new(100.0, 25.0, 150.0, 1.14, 10.0).unwrap();
    let eye = GeoPoint::new(28.9, -95.2).unwrap();

    let empty = parse_case("mpc.bus = [\n1 3 0\n];\nmpc.gen = [\n1 0 0 0 0 1 100 1 10 0\n];\nmpc.branch = [\n];\n").unwrap();
    let doc = export_geojson(&empty, &[], eye, &params);
    check_structure(&doc);
    assert_eq!(doc["features"].as_array().unwrap().len(), 3);

    let text = std::fs::read_to_string(fixture("case4_gulf.m")).unwrap();
    let coords = std::fs::read_to_string(fixture("case4_gulf_coords.csv")).unwrap();
    let grid = parse_case(&text).unwrap().with_coordinates(coords.as_bytes()).unwrap();
    let exposures = exposure_for_step(&grid, &params, eye, &FragilityCurve::default()).unwrap();
    let doc = export_geojson(&grid, &exposures, eye, &params);
    check_structure(&doc);
    let features = doc["features"].as_array().unwrap();
    assert_eq!(features.len(), 6);
    assert_eq!(features[0]["geometry"]["coordinates"][0][0], -95.6);
    assert_eq!(features[0]["geometry"]["coordinates"][0][1], 30.2);
}
