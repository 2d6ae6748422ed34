#![allow(dead_code)]

use std::collections::BTreeSet;

use topomap::config::RunConfig;
use topomap::distance_field::{build_distance_map, DistanceMap};
use topomap::engine::{Engine, EngineConfig, UpdateSchedule};
use topomap::fixtures;
use topomap::graph::{skeleton_to_graph, TopoGraph};
use topomap::map_model::{scan_to_obstacles, GridFrame, OccupancyGrid, ScanFrame};
use topomap::raster::{PixelCoord, Raster, SkeletonMap};
use topomap::sim::{simulate_frames, SensorConfig, Trajectory};
use topomap::skeleton::skeletonize;

pub struct HouseRun {
    pub grid: OccupancyGrid,
    pub frames: Vec<ScanFrame>,
    pub config: EngineConfig,
}

/// The house fixture driven along its full trajectory.
pub fn house_run(resolution: f64, seed: u64, sensor: SensorConfig, schedule: UpdateSchedule) -> HouseRun {
    let grid = fixtures::house_grid(resolution).unwrap();
    let traj = fixtures::house_trajectory(0.1).unwrap();
    let frames = simulate_frames(&grid, &traj, &sensor, seed).unwrap();
    let run = RunConfig { resolution, schedule, ..RunConfig::default() };
    HouseRun { config: run.engine_config().unwrap(), grid, frames }
}

pub fn trajectory(points: &[(f64, f64)], step: f64) -> Trajectory {
    Trajectory::new(points.iter().map(|&(x, y)| topomap::map_model::Pose2D::new(x, y, 0.0)).collect(), step).unwrap()
}

/// Every distinct obstacle pixel the frames project to.
pub fn accumulated_obstacles(frames: &[ScanFrame], grid: &GridFrame) -> Vec<PixelCoord> {
    let set: BTreeSet<PixelCoord> = frames.iter().flat_map(|f| scan_to_obstacles(f, grid)).collect();
    set.into_iter().collect()
}

pub struct Batch {
    pub distance: DistanceMap,
    pub skeleton: SkeletonMap,
    pub graph: TopoGraph,
}

/// Batch pipeline on the engine's accumulated obstacles, over its canvas.
pub fn batch_for(engine: &Engine, frames: &[ScanFrame]) -> Batch {
    let cfg = engine.config();
    let obstacles = accumulated_obstacles(frames, &cfg.grid);
    let distance = build_distance_map(&obstacles, engine.distance_map().bounds(), engine.kernel());
    let skeleton = skeletonize(&distance, &cfg.skeleton);
    let graph = skeleton_to_graph(&skeleton);
    Batch { distance, skeleton, graph }
}

pub fn max_abs_diff(a: &DistanceMap, b: &DistanceMap) -> f64 {
    assert_eq!(a.bounds(), b.bounds());
    a.data().iter().zip(b.data()).map(|(x, y)| (f64::from(*x) - f64::from(*y)).abs()).fold(0.0, f64::max)
}

/// Skeleton pixels outside `mask` that differ between `before` and `after`.
pub fn skeleton_changes_outside(before: &SkeletonMap, after: &SkeletonMap, mask: &Raster<bool>) -> Vec<PixelCoord> {
    let canvas = before.bounds().union(&after.bounds());
    canvas
        .iter()
        .filter(|&p| !mask.is_set(p) && before.is_set(p) != after.is_set(p))
        .collect()
}

fn edge_key(path: &[PixelCoord]) -> Vec<PixelCoord> {
    let mut fwd = path.to_vec();
    let rev: Vec<PixelCoord> = path.iter().rev().copied().collect();
    if rev < fwd {
        fwd = rev;
    }
    fwd
}

/// Graph elements lying wholly outside `zone` that appear in only one of
/// the two graphs: vertices by position, edges by pixel path.
pub fn graph_changes_outside(before: &TopoGraph, after: &TopoGraph, zone: &Raster<bool>) -> (usize, usize) {
    let outside_vertices = |g: &TopoGraph| -> BTreeSet<PixelCoord> {
        g.vertices().map(|v| v.pos).filter(|&p| !zone.is_set(p)).collect()
    };
    let outside_edges = |g: &TopoGraph| -> BTreeSet<Vec<PixelCoord>> {
        g.edges().filter(|e| e.path.iter().all(|&p| !zone.is_set(p))).map(|e| edge_key(&e.path)).collect()
    };
    let (va, vb) = (outside_vertices(before), outside_vertices(after));
    let (ea, eb) = (outside_edges(before), outside_edges(after));
    (va.symmetric_difference(&vb).count(), ea.symmetric_difference(&eb).count())
}

#[derive(Debug, Default)]
pub struct Stability {
    pub skeleton_updates: usize,
    pub graph_updates: usize,
    pub skeleton_violations: usize,
    pub vertex_violations: usize,
    pub edge_violations: usize,
}

/// Replays `frames` through the manual API, checking after every skeleton
/// and graph update that nothing outside its mask moved.
pub fn replay_checking_stability(config: EngineConfig, frames: &[ScanFrame]) -> (Engine, Stability) {
    let mut engine = Engine::new(config).unwrap();
    let mut st = Stability::default();
    let sched = config.schedule;
    for f in frames {
        let next = engine.frame_count() + 1;
        let sk_due = next.is_multiple_of(sched.skeleton_every);
        let g_due = next.is_multiple_of(sched.graph_every);
        let sk_before = sk_due.then(|| engine.skeleton().clone());
        let g_before = g_due.then(|| engine.graph().clone());
        let out = engine.ingest_frame(f).unwrap();
        if let (Some(before), Some(u)) = (sk_before, out.skeleton) {
            st.skeleton_updates += 1;
            st.skeleton_violations += skeleton_changes_outside(&before, engine.skeleton(), &u.mask).len();
        }
        if let (Some(before), Some(u)) = (g_before, out.graph) {
            st.graph_updates += 1;
            let (v, e) = graph_changes_outside(&before, engine.graph(), &u.mask.dilate(1));
            st.vertex_violations += v;
            st.edge_violations += e;
        }
    }
    engine.flush();
    (engine, st)
}

pub fn noiseless() -> SensorConfig {
    SensorConfig { noise_std: 0.0, ..SensorConfig::default() }
}
