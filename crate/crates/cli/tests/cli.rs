use std::fs;
use std::path::Path;
use std::process::Command;

use pemap::{distance, PeMap};
use pemap_cli::{parse_map_config, serialize_map, SWEEP_HEADER};

fn pemap(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pemap"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn strip_out(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("\"out\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn unknown_family_exits_two_and_lists_families() {
    let dir = tempfile::tempdir().unwrap();
    let o = pemap(&["analyze", "--family", "henon", "--a", "1.4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["doubling", "tent", "lorenz", "lorenz_reversed"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn bad_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        pemap(&["analyze", "--family", "lorenz"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        pemap(&["analyze", "--family", "doubling", "--ulam-n", "8"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(pemap(&["analyze"], dir.path()).status.code(), Some(2));
    let map = dir.path().join("map.json");
    fs::write(
        &map,
        r#"{"partition":[0,1],"branches":[{"kind":"affine","slope":0.5,"intercept":0}]}"#,
    )
    .unwrap();
    let o = pemap(&["analyze", "--map", map.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_sweep_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = pemap(&["sweep", "--family", "lorenz"], dir.path());
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.trim_end(), SWEEP_HEADER.join(","));
}

#[test]
fn sweep_records_transitions() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep",
        "--family",
        "lorenz",
        "--param-from",
        "1.3",
        "--param-to",
        "1.5",
        "--param-steps",
        "3",
        "--ulam-n",
        "1024",
    ];
    assert!(pemap(&args, dir.path()).status.success());
    let mut rdr = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let periods: Vec<&str> = rows.iter().map(|r| &r[2]).collect();
    assert_eq!(periods, ["2", "2", "1"]);
    let flags: Vec<&str> = rows.iter().map(|r| &r[4]).collect();
    assert_eq!(flags, ["false", "false", "true"]);
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "analyze", "--family", "lorenz", "--a", "1.3", "--ulam-n", "1024", "--seed", "7",
    ];
    assert!(pemap(&args, a.path()).status.success());
    assert!(pemap(&args, b.path()).status.success());
    for name in ["analysis.json", "density_0.txt"] {
        let x = fs::read_to_string(a.path().join(name)).unwrap();
        let y = fs::read_to_string(b.path().join(name)).unwrap();
        assert_eq!(strip_out(&x), strip_out(&y), "{name}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("analysis.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["ulam_n"], 1024);
    assert_eq!(json["config"]["seed"], 7);
}

#[test]
fn periodic_and_separation_reports() {
    let dir = tempfile::tempdir().unwrap();
    assert!(pemap(
        &[
            "periodic",
            "--family",
            "doubling",
            "--max-period",
            "3",
            "--ulam-n",
            "256"
        ],
        dir.path()
    )
    .status
    .success());
    let mut rdr = csv::Reader::from_path(dir.path().join("periodic.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["point", "period", "itinerary", "regular"]);
    // doubling: 2 fixed points, 1 orbit of period 2, 2 of period 3
    assert_eq!(rdr.records().count(), 5);

    let o = pemap(&["check-separation", "--family", "lorenz", "--a", "1.41"], dir.path());
    assert!(o.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("separation.json")).unwrap()).unwrap();
    assert_eq!(json["separation"]["verdict"], "pass");
}

#[test]
fn stability_report_for_a_family_shift() {
    let dir = tempfile::tempdir().unwrap();
    let o = pemap(
        &[
            "stability",
            "--family",
            "lorenz",
            "--a",
            "1.3",
            "--eps",
            "0.02,0.01",
            "--ulam-n",
            "1024",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("stability.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
    assert_eq!(json["continuity"], true);
}

#[test]
fn map_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lorenz.json");
    let m = PeMap::lorenz_reversed(1.45).unwrap();
    fs::write(&path, serialize_map(&m)).unwrap();
    let back = parse_map_config(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(distance(&m, &back).unwrap().total, 0.0);
    let o = pemap(
        &["check-separation", "--map", path.to_str().unwrap(), "--ulam-n", "1024"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
