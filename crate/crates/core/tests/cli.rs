use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use topomap::graph::TopoGraph;
use topomap::io::{read_distance_map, read_pbm, Checkpoint};
use topomap::map_model::{save_grid, GridFrame, OccupancyGrid};
use topomap::metrics::VertexErrorReport;
use topomap::raster::PixelCoord;

fn topomap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topomap")).args(args).current_dir(cwd).output().expect("spawn topomap")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = topomap(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fail(args: &[&str], cwd: &Path) -> String {
    let out = topomap(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic should be one line: {err}");
    err
}

fn graph(path: PathBuf) -> TopoGraph {
    TopoGraph::from_json(&fs::read_to_string(path).unwrap()).unwrap()
}

/// A short drive through the house: along the corridor and into one room.
fn short_house(dir: &Path) {
    ok(&["fixture", "house", "--out", "house.png"], dir);
    fs::write(dir.join("short.traj"), "step 0.1\n2 8.1\n8.2 8.1\n8.2 4\n8.2 8.1\n14 8.1\n").unwrap();
    ok(&["simulate", "house.png", "short.traj", "--out", "short.log", "--seed", "11"], dir);
}

const HOUSE_RES: &str = "0.2";

#[test]
fn build_corridor_gives_one_edge_and_all_artifacts() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["fixture", "corridor", "--width", "9", "--out", "corridor.pgm"], d);
    let stdout = ok(&["build", "corridor.pgm", "--out", "b"], d);
    assert!(stdout.contains("2 vertices, 1 edges"), "{stdout}");
    let g = graph(d.join("b/graph.json"));
    assert_eq!((g.vertex_count(), g.edge_count()), (2, 1));
    for name in ["distance_map.png", "skeleton.png", "graph.png"] {
        image::open(d.join("b").join(name)).unwrap();
    }
    let (dm, sigma) = read_distance_map(&d.join("b/distance_map.bin")).unwrap();
    assert_eq!((dm.width(), dm.height(), sigma), (64, 11, 6.0));
    let sk = read_pbm(&d.join("b/skeleton.pbm"), PixelCoord::new(0, 0)).unwrap();
    assert!(sk.count_set() > 50);
    let dot = fs::read_to_string(d.join("b/graph.dot")).unwrap();
    assert!(dot.starts_with("graph"), "{dot}");
}

#[test]
fn blank_map_warns_and_writes_empty_graph() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_grid(&OccupancyGrid::new(20, 20, GridFrame::default()).unwrap(), &d.join("blank.pgm")).unwrap();
    let out = topomap(&["build", "blank.pgm", "--out", "b"], d);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(graph(d.join("b/graph.json")).is_empty());
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["fixture", "corridor", "--out", "c.pgm"], d);
    fs::write(d.join("run.cfg"), "sigma 4\nthreshold 10\n").unwrap();
    ok(&["--config", "run.cfg", "build", "c.pgm", "--out", "from_file"], d);
    ok(&["build", "c.pgm", "--out", "from_flag", "--config", "run.cfg", "--sigma", "5"], d);
    assert_eq!(read_distance_map(&d.join("from_file/distance_map.bin")).unwrap().1, 4.0);
    assert_eq!(read_distance_map(&d.join("from_flag/distance_map.bin")).unwrap().1, 5.0);
}

#[test]
fn bad_inputs_fail_with_one_line() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["fixture", "corridor", "--out", "c.pgm"], d);
    let e = fail(&["build", "c.pgm", "--out", "b", "--schedule", "1,20,70"], d);
    assert!(e.contains("schedule") || e.contains("divis"), "{e}");
    fail(&["build", "missing.pgm", "--out", "b"], d);
    fs::write(d.join("bad.cfg"), "sigma 3\nwat 1\n").unwrap();
    let e = fail(&["build", "c.pgm", "--out", "b", "--config", "bad.cfg"], d);
    assert!(e.contains("bad.cfg:2"), "{e}");
}

#[test]
fn malformed_log_reports_its_line() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    short_house(d);
    let text = fs::read_to_string(d.join("short.log")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "2 1.0 oops";
    fs::write(d.join("bad.log"), lines.join("\n")).unwrap();
    let e = fail(&["replay", "bad.log", "--out", "r"], d);
    assert!(e.contains("bad.log:3"), "{e}");
}

#[test]
fn empty_log_gives_empty_checkpoint() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("empty.log"), "").unwrap();
    ok(&["replay", "empty.log", "--out", "r"], d);
    let cp = Checkpoint::read(&d.join("r")).unwrap();
    assert_eq!(cp.frame_count, 0);
    assert!(cp.graph.is_empty());
    assert_eq!(cp.skeleton.count_set(), 0);
}

#[test]
fn simulate_and_replay_are_deterministic_and_modes_agree() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    short_house(d);
    ok(&["simulate", "house.png", "short.traj", "--out", "again.log", "--seed", "11"], d);
    assert_eq!(fs::read(d.join("short.log")).unwrap(), fs::read(d.join("again.log")).unwrap());
    ok(&["simulate", "house.png", "short.traj", "--out", "other.log", "--seed", "12"], d);
    assert_ne!(fs::read(d.join("short.log")).unwrap(), fs::read(d.join("other.log")).unwrap());

    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["replay", "short.log", "--out", out, "--resolution", HOUSE_RES];
        args.extend_from_slice(extra);
        ok(&args, d);
    };
    run("a", &[]);
    run("b", &[]);
    run("p", &["--pipelined"]);
    for name in ["graph.json", "graph.dot", "updates.json", "skeleton.pbm", "distance_map.bin", "manifest.txt"] {
        let a = fs::read(d.join("a").join(name)).unwrap();
        assert_eq!(a, fs::read(d.join("b").join(name)).unwrap(), "{name} differs between runs");
        assert_eq!(a, fs::read(d.join("p").join(name)).unwrap(), "{name} differs in pipelined mode");
    }
    let timing: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("a/timing.json")).unwrap()).unwrap();
    for l in ["distance", "skeleton", "graph"] {
        assert!(timing[l]["max_ms"].as_f64().unwrap() >= timing[l]["min_ms"].as_f64().unwrap());
    }

    ok(&["compare", "a/graph.json", "b/graph.json", "--out", "self.json"], d);
    ok(&["compare", "a/graph.json", "b/graph.json", "--out", "self2.json"], d);
    assert_eq!(fs::read(d.join("self.json")).unwrap(), fs::read(d.join("self2.json")).unwrap());
    let report: VertexErrorReport = serde_json::from_str(&fs::read_to_string(d.join("self.json")).unwrap()).unwrap();
    assert_eq!(report.avg_dist, Some(0.0));
    assert_eq!(report.pct_within_1, Some(100.0));
}

#[test]
fn snapshots_follow_the_period() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    short_house(d);
    let frames = fs::read_to_string(d.join("short.log")).unwrap().lines().count();
    ok(&["replay", "short.log", "--out", "r", "--resolution", HOUSE_RES, "--snapshot-every", "40"], d);
    let shots = fs::read_dir(d.join("r/snapshots")).unwrap().count();
    assert_eq!(shots, frames / 40);
    assert!(d.join("r/snapshots/frame_000040.png").exists());
}

#[test]
fn render_accepts_checkpoints_graphs_and_skeletons() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["fixture", "plus", "--out", "plus.pgm"], d);
    ok(&["build", "plus.pgm", "--out", "b"], d);
    fs::write(d.join("empty.log"), "").unwrap();
    ok(&["replay", "empty.log", "--out", "r"], d);
    ok(&["render", "r", "--out", "cp.png", "--map", "plus.pgm"], d);
    ok(&["render", "b/graph.json", "--out", "g.png", "--map", "plus.pgm"], d);
    ok(&["render", "b/skeleton.pbm", "--out", "s.png"], d);
    let g = image::open(d.join("g.png")).unwrap();
    assert!(g.width() >= 57 && g.height() >= 57);
}

#[test]
fn compare_rejects_empty_reference() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_grid(&OccupancyGrid::new(20, 20, GridFrame::default()).unwrap(), &d.join("blank.pgm")).unwrap();
    ok(&["build", "blank.pgm", "--out", "b"], d);
    let e = fail(&["compare", "b/graph.json", "b/graph.json"], d);
    assert!(e.contains("no vertices"), "{e}");
}
