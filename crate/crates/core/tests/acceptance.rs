//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always show.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topomap::distance_field::{build_distance_map, GaussianKernel};
use topomap::engine::{replay, Engine, ReplayOptions, UpdateSchedule};
use topomap::fixtures;
use topomap::graph::{pixel_link, pixels_to_graph, skeleton_to_graph, TopoGraph};
use topomap::metrics::{vertex_error, DEFAULT_OUTLIER_THRESHOLD};
use topomap::raster::{Bounds, PixelCoord, SkeletonMap};
use topomap::sim::SensorConfig;
use topomap::skeleton::{skeletonize, suppress_t_cross_within, thin, SkeletonParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn no_snapshots() -> impl FnMut(&topomap::engine::Snapshot) -> topomap::Result<()> {
    |_| Ok(())
}

fn distance_exactness() -> Outcome {
    let run = house_run(fixtures::HOUSE_RESOLUTION, 7, SensorConfig::default(), UpdateSchedule::default());
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    let schedules = [(1, 20, 80), (1, 1, 1), (2, 10, 40), (5, 50, 100)];
    for (d, s, g) in schedules {
        let config = topomap::engine::EngineConfig { schedule: UpdateSchedule::new(d, s, g).unwrap(), ..run.config };
        let t = Instant::now();
        let r = replay(config, &run.frames, ReplayOptions::default(), &mut no_snapshots()).unwrap();
        slowest = slowest.max(t.elapsed().as_secs_f64());
        worst = worst.max(max_abs_diff(r.engine.distance_map(), &batch_for(&r.engine, &run.frames).distance));
    }
    outcome(
        run.frames.len() >= 1000 && worst <= 1e-6 && slowest < 60.0,
        format!(
            "{} frames, {} schedules, max |incremental - batch| = {worst:e}, slowest replay {slowest:.2} s",
            run.frames.len(),
            schedules.len()
        ),
    )
}

fn corridor_geometry() -> Outcome {
    let params = SkeletonParams::default();
    let kernel = GaussianKernel::new(topomap::config::DEFAULT_SIGMA).unwrap();
    let length = 60;
    let mut failures = Vec::new();
    for free in (5..=15).step_by(2) {
        let grid = fixtures::corridor_grid(free, length).unwrap();
        let dm = build_distance_map(&grid.obstacles(), grid.bounds(), &kernel);
        let sk = skeletonize(&dm, &params);
        let center = (free as i32 + 1) / 2;
        let off_line = grid
            .bounds()
            .iter()
            .filter(|p| p.col >= 2 && p.col < length as i32 - 2)
            .filter(|p| sk.is_set(*p) != (p.row == center))
            .count();
        let g = skeleton_to_graph(&sk);
        if off_line > 0 || g.vertex_count() != 2 || g.edge_count() != 1 {
            failures.push(format!("width {free}: {off_line} px off the centerline, V={} E={}", g.vertex_count(), g.edge_count()));
        }
    }
    let detail = if failures.is_empty() {
        "free widths 5,7,..,15: exact centerline away from the ends, 2 vertices and 1 edge each".to_string()
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

/// A random union of disks and rectangles with a few holes punched out.
fn random_blob(rng: &mut ChaCha8Rng) -> SkeletonMap {
    let (w, h) = (rng.gen_range(8..=64), rng.gen_range(8..=64));
    let mut m = SkeletonMap::new(Bounds::new(PixelCoord::new(0, 0), w, h));
    let paint = |m: &mut SkeletonMap, value: bool, rng: &mut ChaCha8Rng| {
        let (cx, cy) = (rng.gen_range(0..w as i32), rng.gen_range(0..h as i32));
        let (rx, ry) = (rng.gen_range(1..=w as i32 / 3 + 1), rng.gen_range(1..=h as i32 / 3 + 1));
        let disk = rng.gen_bool(0.5);
        for p in m.bounds().iter().collect::<Vec<_>>() {
            let (dx, dy) = ((p.col - cx) as f64 / rx as f64, (p.row - cy) as f64 / ry as f64);
            let inside = if disk { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
            if inside {
                m.set(p, value);
            }
        }
    };
    for _ in 0..rng.gen_range(1..=6) {
        paint(&mut m, true, rng);
    }
    for _ in 0..rng.gen_range(0..=3) {
        paint(&mut m, false, rng);
    }
    m
}

fn connectivity_preservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bad_components = 0;
    let mut blocks = 0;
    let mut pixels = 0;
    for _ in 0..100 {
        let blob = random_blob(&mut rng);
        let sk = thin(&blob, None);
        pixels += blob.count_set();
        if blob.component_count8() != sk.component_count8() {
            bad_components += 1;
        }
        if sk.has_full_2x2() || suppress_t_cross_within(&sk, None).has_full_2x2() {
            blocks += 1;
        }
    }
    outcome(
        bad_components == 0 && blocks == 0,
        format!("100 blobs ({pixels} set px): {bad_components} component-count mismatches, {blocks} skeletons with a full 2x2 block"),
    )
}

fn untouched_region_stability() -> Outcome {
    let run = house_run(fixtures::HOUSE_RESOLUTION, 7, SensorConfig::default(), UpdateSchedule::default());
    let (_, st) = replay_checking_stability(run.config, &run.frames);
    let ok = st.skeleton_violations + st.vertex_violations + st.edge_violations == 0 && st.skeleton_updates > 0 && st.graph_updates > 0;
    outcome(
        ok,
        format!(
            "{} skeleton and {} graph updates checked: {} skeleton px, {} vertices, {} edges changed outside the mask",
            st.skeleton_updates, st.graph_updates, st.skeleton_violations, st.vertex_violations, st.edge_violations
        ),
    )
}

fn graph_quality() -> Outcome {
    let res = fixtures::HOUSE_RESOLUTION;
    let run = house_run(res, 7, SensorConfig::default(), UpdateSchedule::default());
    let r = replay(run.config, &run.frames, ReplayOptions::default(), &mut no_snapshots()).unwrap();
    let region = fixtures::house_interior(res);
    let batch = batch_for(&r.engine, &run.frames);
    let report = vertex_error(r.engine.graph(), &batch.graph, DEFAULT_OUTLIER_THRESHOLD, Some(region)).unwrap();
    let (avg, pct) = (report.avg_dist.unwrap_or(f64::INFINITY), report.pct_within_1.unwrap_or(0.0));

    // Context only: against the batch graph of the ground-truth map, whose
    // walls sit up to a pixel away from where noisy scans put them.
    let kernel = GaussianKernel::new(run.config.sigma).unwrap();
    let truth_dm = build_distance_map(&run.grid.obstacles(), run.grid.bounds(), &kernel);
    let truth = skeleton_to_graph(&skeletonize(&truth_dm, &run.config.skeleton));
    let ctx = vertex_error(r.engine.graph(), &truth, DEFAULT_OUTLIER_THRESHOLD, Some(region)).unwrap();
    outcome(
        avg <= 3.0 && pct >= 60.0,
        format!(
            "schedule 1,20,80, interior {},{},{},{}: avg {avg:.3} px, {pct:.1}% within 1 px, {}/{} outliers \
             (vs ground-truth map: avg {:.3} px, {:.1}%)",
            region.x0,
            region.y0,
            region.x1,
            region.y1,
            report.outliers,
            report.total,
            ctx.avg_dist.unwrap_or(f64::NAN),
            ctx.pct_within_1.unwrap_or(f64::NAN)
        ),
    )
}

fn timing() -> Outcome {
    let res = 0.03;
    let run = house_run(res, 7, SensorConfig::default(), UpdateSchedule::default());
    let mut engine = Engine::new(run.config).unwrap();
    engine.reserve_canvas(Bounds::new(PixelCoord::new(0, 0), 800, 800).union(&run.grid.bounds()));
    let canvas = engine.distance_map().bounds();
    let mut worst_frame = 0.0f64;
    for f in &run.frames {
        let t = Instant::now();
        engine.ingest_frame(f).unwrap();
        worst_frame = worst_frame.max(t.elapsed().as_secs_f64() * 1e3);
    }
    let t = engine.timings();
    let line = |name: &str, l: &topomap::engine::LoopTimer| {
        format!("{name} n={} min/mean/max {:.2}/{:.2}/{:.2} ms", l.count, l.min_ms, l.mean_ms(), l.max_ms)
    };
    outcome(
        t.distance.max_ms <= 100.0,
        format!(
            "{}x{} map on a {}x{} canvas, {} frames; {}; {}; {}; worst whole frame {worst_frame:.2} ms",
            run.grid.width(),
            run.grid.height(),
            canvas.width,
            canvas.height,
            run.frames.len(),
            line("distance", &t.distance),
            line("skeleton", &t.skeleton),
            line("graph", &t.graph)
        ),
    )
}

fn shifted(g: &TopoGraph, dc: i32, dr: i32) -> TopoGraph {
    let mut out = TopoGraph::new();
    for v in g.vertices() {
        out.insert_vertex(v.id, v.pos.offset(dc, dr));
    }
    for e in g.edges() {
        out.insert_edge(e.id, e.endpoints.0, e.endpoints.1, e.path.iter().map(|p| p.offset(dc, dr)).collect());
    }
    out
}

fn metric_self_checks() -> Outcome {
    let grid = fixtures::house_grid(fixtures::HOUSE_RESOLUTION).unwrap();
    let kernel = GaussianKernel::new(topomap::config::DEFAULT_SIGMA).unwrap();
    let dm = build_distance_map(&grid.obstacles(), grid.bounds(), &kernel);
    let g = skeleton_to_graph(&skeletonize(&dm, &SkeletonParams::default()));
    let same = vertex_error(&g, &g, DEFAULT_OUTLIER_THRESHOLD, None).unwrap();
    // A reference whose vertices are pairwise far apart, so a 1-px shift
    // cannot land on a different reference vertex.
    let sparse = {
        let corridor = fixtures::corridor_grid(9, 60).unwrap();
        let dm = build_distance_map(&corridor.obstacles(), corridor.bounds(), &kernel);
        skeleton_to_graph(&skeletonize(&dm, &SkeletonParams::default()))
    };
    let moved = vertex_error(&shifted(&sparse, 1, 0), &sparse, DEFAULT_OUTLIER_THRESHOLD, None).unwrap();
    let house_moved = vertex_error(&shifted(&g, 0, 1), &g, DEFAULT_OUTLIER_THRESHOLD, None).unwrap();
    let ok = same.avg_dist == Some(0.0)
        && same.outliers == 0
        && same.pct_within_1 == Some(100.0)
        && moved.avg_dist == Some(1.0)
        && moved.pct_within_1 == Some(100.0)
        && house_moved.avg_dist.is_some_and(|a| a <= 1.0)
        && house_moved.pct_within_1 == Some(100.0);
    outcome(
        ok,
        format!(
            "self: avg {:?}, {} outliers, {:?}% within 1; 1-px shift: avg {:?}, {:?}% (house graph {} vertices: avg {:.3}, {:?}%)",
            same.avg_dist,
            same.outliers,
            same.pct_within_1,
            moved.avg_dist,
            moved.pct_within_1,
            g.vertex_count(),
            house_moved.avg_dist.unwrap_or(f64::NAN),
            house_moved.pct_within_1
        ),
    )
}

fn cli(args: &[&str], cwd: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_topomap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let d = dir.path();
    let mut ok = cli(&["fixture", "house", "--out", "house.png"], d);
    for run in ["1", "2"] {
        let log = format!("log{run}.txt");
        let out = format!("replay{run}");
        let report = format!("report{run}.json");
        ok &= cli(&["simulate", "house.png", "house.traj", "--out", &log, "--seed", "7"], d);
        ok &= cli(&["replay", &log, "--out", &out, "--resolution", "0.2"], d);
        ok &= cli(&["build", "house.png", "--out", &format!("build{run}")], d);
        let cand = format!("{out}/graph.json");
        let reference = format!("build{run}/graph.json");
        ok &= cli(&["compare", &cand, &reference, "--region", "6,6,123,68", "--out", &report], d);
    }
    if !ok {
        return outcome(false, "a CLI step failed");
    }
    let same = |a: &str, b: &str| fs::read(d.join(a)).ok().is_some_and(|x| Some(x) == fs::read(d.join(b)).ok());
    let files = [
        ("log1.txt", "log2.txt"),
        ("replay1/graph.json", "replay2/graph.json"),
        ("replay1/updates.json", "replay2/updates.json"),
        ("build1/graph.json", "build2/graph.json"),
        ("report1.json", "report2.json"),
    ];
    let differing: Vec<&str> = files.iter().filter(|(a, b)| !same(a, b)).map(|(a, _)| *a).collect();
    let frames = fs::read_to_string(d.join("log1.txt")).map(|t| t.lines().count()).unwrap_or(0);
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("two seeded simulate+replay+compare runs ({frames} frames): log, graph JSON, update records and reports byte-identical")
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

/// 3x3 window with the center set and ring pixels from `bits`
/// (bit i = ring position i, row-major skipping the center).
fn window(bits: u8) -> SkeletonMap {
    let mut m = SkeletonMap::new(Bounds::new(PixelCoord::new(0, 0), 3, 3));
    m.set(PixelCoord::new(1, 1), true);
    let ring = [(0, 0), (1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (1, 2), (2, 2)];
    for (i, &(c, r)) in ring.iter().enumerate() {
        if bits & (1 << i) != 0 {
            m.set(PixelCoord::new(c, r), true);
        }
    }
    m
}

/// The T rule stated as a predicate: exactly three orthogonal neighbors set,
/// and the set ring pixels form one 4-connected group without the center.
fn t_predicate(m: &SkeletonMap) -> bool {
    let center = PixelCoord::new(1, 1);
    let orthogonal = [(1, 0), (0, 1), (2, 1), (1, 2)].iter().filter(|&&(c, r)| m.is_set(PixelCoord::new(c, r))).count();
    if orthogonal != 3 {
        return false;
    }
    let set: Vec<PixelCoord> = m.iter_set().filter(|&p| p != center).collect();
    let mut seen = vec![set[0]];
    let mut i = 0;
    while i < seen.len() {
        let p = seen[i];
        for q in &set {
            let four = (p.col - q.col).abs() + (p.row - q.row).abs() == 1;
            if four && !seen.contains(q) {
                seen.push(*q);
            }
        }
        i += 1;
    }
    seen.len() == set.len()
}

fn rule_exhaustiveness() -> Outcome {
    let center = PixelCoord::new(1, 1);
    let mut t_mismatch = 0;
    let mut t_removed = 0;
    for bits in 0..=255u8 {
        let m = window(bits);
        let only_center = {
            let mut w = SkeletonMap::new(m.bounds());
            w.set(center, true);
            w
        };
        let cleared = !suppress_t_cross_within(&m, Some(&only_center)).is_set(center);
        t_removed += usize::from(cleared);
        if cleared != t_predicate(&m) {
            t_mismatch += 1;
        }
    }
    let mut l_mismatch = 0;
    for bits in 0..16u8 {
        let mut m = SkeletonMap::new(Bounds::new(PixelCoord::new(0, 0), 2, 2));
        let cells = [PixelCoord::new(0, 0), PixelCoord::new(1, 0), PixelCoord::new(0, 1), PixelCoord::new(1, 1)];
        for (i, &p) in cells.iter().enumerate() {
            if bits & (1 << i) != 0 {
                m.set(p, true);
            }
        }
        let mut expected = 0;
        for i in 0..4 {
            for j in i + 1..4 {
                let (p, q) = (cells[i], cells[j]);
                if !(m.is_set(p) && m.is_set(q)) {
                    continue;
                }
                let diagonal = p.col != q.col && p.row != q.row;
                let shared = [PixelCoord::new(p.col, q.row), PixelCoord::new(q.col, p.row)];
                let linked = !diagonal || !shared.iter().any(|&s| m.is_set(s));
                if linked != pixel_link(&m, p, q) {
                    l_mismatch += 1;
                }
                expected += usize::from(linked);
            }
        }
        if pixels_to_graph(&m).edge_count() != expected {
            l_mismatch += 1;
        }
    }
    outcome(
        t_mismatch == 0 && l_mismatch == 0,
        format!("T rule: 256 patterns, {t_removed} removable, {t_mismatch} mismatches; L rule: 16 patterns, {l_mismatch} mismatches"),
    )
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 9] = [
        ("distance-map exactness", distance_exactness),
        ("corridor geometry", corridor_geometry),
        ("connectivity preservation", connectivity_preservation),
        ("untouched-region stability", untouched_region_stability),
        ("incremental vs batch graph quality", graph_quality),
        ("timing", timing),
        ("metric self-checks", metric_self_checks),
        ("determinism", determinism),
        ("T/L rule exhaustiveness", rule_exhaustiveness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {} {}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
