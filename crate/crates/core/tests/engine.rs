mod common;

use common::*;
use proptest::prelude::*;
use topomap::config::RunConfig;
use topomap::engine::{replay, Engine, ReplayOptions, UpdateSchedule};
use topomap::map_model::{Cell, GridFrame, OccupancyGrid, WorldPoint};
use topomap::metrics::vertex_error;
use topomap::sim::{simulate_frames, SensorConfig};

fn no_snapshots() -> impl FnMut(&topomap::engine::Snapshot) -> topomap::Result<()> {
    |_| Ok(())
}

/// A straight corridor at 0.1 m/px, `free` pixels wide and 16 m long.
fn corridor(free: i32) -> OccupancyGrid {
    let frame = GridFrame::new(0.1, WorldPoint { x: 0.0, y: 0.0 }).unwrap();
    let mut g = OccupancyGrid::new(160, (free + 2) as usize, frame).unwrap();
    g.fill_rect(0, 0, 159, 0, Cell::Occupied);
    g.fill_rect(0, free + 1, 159, free + 1, Cell::Occupied);
    g
}

#[test]
fn corridor_drive_ends_with_a_single_edge() {
    for free in [7, 9, 11] {
        let grid = corridor(free);
        let cy = (free as f64 + 2.0) * 0.1 / 2.0;
        let traj = trajectory(&[(1.0, cy), (15.0, cy)], 0.1);
        let sensor = SensorConfig { range_max: 2.5, ..noiseless() };
        let frames = simulate_frames(&grid, &traj, &sensor, 1).unwrap();
        let cfg = RunConfig { resolution: 0.1, schedule: UpdateSchedule::new(1, 5, 10).unwrap(), ..RunConfig::default() };
        let r = replay(cfg.engine_config().unwrap(), &frames, ReplayOptions::default(), &mut no_snapshots()).unwrap();
        let g = r.engine.graph();
        let batch = batch_for(&r.engine, &frames);
        assert_eq!((g.vertex_count(), g.edge_count()), (batch.graph.vertex_count(), batch.graph.edge_count()), "width {free}");
        assert_eq!((g.vertex_count(), g.edge_count()), (2, 1), "width {free}");
        assert_eq!(g.components().len(), 1);
    }
}

#[test]
fn distance_map_ignores_the_schedule() {
    let run = house_run(0.2, 3, SensorConfig::default(), UpdateSchedule::default());
    let frames = &run.frames[..400];
    let mut maps = Vec::new();
    for s in [(1, 1, 1), (1, 20, 80), (5, 10, 40), (4, 40, 40)] {
        let config = topomap::engine::EngineConfig { schedule: UpdateSchedule::new(s.0, s.1, s.2).unwrap(), ..run.config };
        let r = replay(config, frames, ReplayOptions::default(), &mut no_snapshots()).unwrap();
        let batch = batch_for(&r.engine, frames);
        assert_eq!(max_abs_diff(r.engine.distance_map(), &batch.distance), 0.0, "schedule {s:?}");
        maps.push(r.engine.distance_map().clone());
    }
    assert!(maps.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn every_update_leaves_the_outside_untouched() {
    let run = house_run(0.2, 5, SensorConfig::default(), UpdateSchedule::new(1, 10, 40).unwrap());
    let (_, st) = replay_checking_stability(run.config, &run.frames[..600]);
    assert!(st.skeleton_updates >= 40 && st.graph_updates >= 10, "{st:?}");
    assert_eq!((st.skeleton_violations, st.vertex_violations, st.edge_violations), (0, 0, 0), "{st:?}");
}

#[test]
fn frequent_updates_track_the_batch_graph() {
    let run = house_run(0.2, 9, SensorConfig::default(), UpdateSchedule::new(1, 1, 1).unwrap());
    let frames = &run.frames[..300];
    let r = replay(run.config, frames, ReplayOptions::default(), &mut no_snapshots()).unwrap();
    let batch = batch_for(&r.engine, frames);
    let region = topomap::fixtures::house_interior(0.2);
    let report = vertex_error(r.engine.graph(), &batch.graph, 20.0, Some(region)).unwrap();
    assert!(report.avg_dist.unwrap() <= 1.0, "{}", report.to_table());
}

#[test]
fn pipelined_replay_matches_sequential() {
    let run = house_run(0.2, 4, SensorConfig::default(), UpdateSchedule::new(1, 20, 40).unwrap());
    let frames = &run.frames[..500];
    let mut shots_a = Vec::new();
    let mut shots_b = Vec::new();
    let opts = |pipelined| ReplayOptions { pipelined, snapshot_every: 100 };
    let a = replay(run.config, frames, opts(false), &mut |s| {
        shots_a.push((s.frame, s.graph.renumbered(), s.skeleton.clone()));
        Ok(())
    })
    .unwrap();
    let b = replay(run.config, frames, opts(true), &mut |s| {
        shots_b.push((s.frame, s.graph.renumbered(), s.skeleton.clone()));
        Ok(())
    })
    .unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.engine.graph().renumbered(), b.engine.graph().renumbered());
    assert_eq!(a.engine.distance_map(), b.engine.distance_map());
    assert_eq!(shots_a.len(), 5);
    assert!(shots_a == shots_b);
}

#[test]
fn out_of_order_frames_are_rejected_in_both_modes() {
    let run = house_run(0.2, 1, SensorConfig::default(), UpdateSchedule::default());
    let mut frames = run.frames[..5].to_vec();
    frames.swap(2, 3);
    for pipelined in [false, true] {
        let opts = ReplayOptions { pipelined, snapshot_every: 0 };
        assert!(replay(run.config, &frames, opts, &mut no_snapshots()).is_err());
    }
}

#[test]
fn flush_settles_every_loop() {
    let run = house_run(0.2, 2, SensorConfig::default(), UpdateSchedule::default());
    let mut engine = Engine::new(run.config).unwrap();
    for f in &run.frames[..123] {
        engine.ingest_frame(f).unwrap();
    }
    engine.flush();
    assert!(!engine.dm_dirty().any());
    assert!(!engine.sk_dirty().any());
    let settled = engine.graph().renumbered();
    let again = engine.flush();
    assert!(again.skeleton.is_none() || again.skeleton.unwrap().changed == 0);
    assert_eq!(engine.graph().renumbered(), settled);
    let from_skeleton = topomap::graph::skeleton_to_graph(engine.skeleton()).renumbered();
    assert_eq!(settled, from_skeleton);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Incremental distance maps match the batch map for any frame subset,
    /// order-preserving, and any schedule.
    #[test]
    fn merge_is_exact_for_any_subset(seed in 0u64..1000, start in 0usize..900, len in 1usize..200, d in 1u64..4) {
        let run = house_run(0.2, seed, SensorConfig::default(), UpdateSchedule::default());
        let end = (start + len).min(run.frames.len());
        let frames = &run.frames[start..end];
        let config = topomap::engine::EngineConfig { schedule: UpdateSchedule::new(d, d * 5, d * 10).unwrap(), ..run.config };
        let r = replay(config, frames, ReplayOptions::default(), &mut no_snapshots()).unwrap();
        let batch = batch_for(&r.engine, frames);
        prop_assert_eq!(max_abs_diff(r.engine.distance_map(), &batch.distance), 0.0);
    }
}
