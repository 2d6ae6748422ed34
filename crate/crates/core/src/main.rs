use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use topomap::config::RunConfig;
use topomap::distance_field::{build_distance_map, GaussianKernel};
use topomap::engine::{replay, ReplayOptions, Snapshot, UpdateSchedule};
use topomap::fixtures;
use topomap::graph::{skeleton_to_graph, TopoGraph};
use topomap::io::{self, Checkpoint, Overlay};
use topomap::map_model::{load_grid, save_grid, OccupancyGrid};
use topomap::metrics::{vertex_error, Region};
use topomap::raster::{Bounds, Raster};
use topomap::sim::{generate_log, parse_sensor, read_log, Trajectory};
use topomap::skeleton::skeletonize;

/// Topology graphs from occupancy grids, built in one pass or incrementally
/// from range-scan logs.
#[derive(Parser)]
#[command(name = "topomap", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Precedence: built-in defaults, then
/// `--config`, then these flags.
#[derive(Args)]
struct Common {
    /// Key-value config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Gaussian kernel sigma in pixels.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Binarization threshold on the ridge response.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Factor applied to the distance map before the Laplacian.
    #[arg(long, global = true)]
    scale: Option<f64>,
    /// Update periods in frames: distance,skeleton,graph.
    #[arg(long, global = true, value_name = "D,S,G")]
    schedule: Option<UpdateSchedule>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pixel rectangle x0,y0,x1,y1 restricting compared vertices.
    #[arg(long, global = true, value_name = "X0,Y0,X1,Y1")]
    region: Option<Region>,
    #[arg(long, global = true)]
    outlier_threshold: Option<f64>,
    /// Meters per pixel for projecting scans (replay).
    #[arg(long, global = true)]
    resolution: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Batch pipeline on a map image.
    Build {
        map: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulate a range sensor along a waypoint trajectory and write a frame log.
    Simulate {
        map: PathBuf,
        trajectory: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Key-value sensor file (beams, fov, range_max, noise_std, noise_mean).
        #[arg(long, value_name = "FILE")]
        sensor: Option<PathBuf>,
    },
    /// Feed a frame log through the incremental engine.
    Replay {
        log: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Render a snapshot every N frames (0 disables).
        #[arg(long, default_value_t = 0)]
        snapshot_every: u64,
        /// Run the three loops on separate threads.
        #[arg(long)]
        pipelined: bool,
    },
    /// Nearest-vertex error of graph A against reference graph B.
    Compare {
        candidate: PathBuf,
        reference: PathBuf,
        /// Also write the report as JSON.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Render a checkpoint directory, graph JSON or skeleton PBM to PNG.
    Render {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Map image drawn underneath.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Write a built-in fixture map (and, for the house, its trajectory).
    Fixture {
        kind: FixtureKind,
        #[arg(long, short)]
        out: PathBuf,
        /// Free width in pixels for corridor and plus fixtures.
        #[arg(long, default_value_t = 9)]
        width: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    House,
    Corridor,
    Plus,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            c.apply_file(path)?;
        }
        if let Some(v) = self.sigma {
            c.sigma = v;
        }
        if let Some(v) = self.threshold {
            c.binarize_threshold = v;
        }
        if let Some(v) = self.scale {
            c.laplacian_scale = v;
        }
        if let Some(v) = self.schedule {
            c.schedule = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.region {
            c.region = Some(v);
        }
        if let Some(v) = self.outlier_threshold {
            c.outlier_threshold = v;
        }
        if let Some(v) = self.resolution {
            c.resolution = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create {}", path.display()))
}

fn walls_of(grid: &OccupancyGrid) -> Raster<bool> {
    let mut walls = Raster::new(grid.bounds());
    for p in grid.obstacles() {
        walls.set(p, true);
    }
    walls
}

fn cmd_build(cfg: &RunConfig, map: &Path, out: &Path) -> Result<()> {
    let grid = load_grid(map, cfg.occupied_below, cfg.free_above)?;
    let kernel = GaussianKernel::new(cfg.sigma)?;
    let dm = build_distance_map(&grid.obstacles(), grid.bounds(), &kernel);
    let sk = skeletonize(&dm, &cfg.skeleton_params());
    let graph = skeleton_to_graph(&sk);
    create_dir(out)?;
    io::write_distance_map(&dm, cfg.sigma, &out.join("distance_map.bin"))?;
    io::write_pbm(&sk, &out.join("skeleton.pbm"))?;
    write_text(&out.join("graph.json"), &graph.to_json()?)?;
    write_text(&out.join("graph.dot"), &graph.to_dot())?;
    let walls = walls_of(&grid);
    let canvas = grid.bounds();
    let heat = Overlay { distance: Some(&dm), ..Overlay::default() };
    io::write_png(&io::render(canvas, &heat), &out.join("distance_map.png"))?;
    let skel = Overlay { walls: Some(&walls), skeleton: Some(&sk), ..Overlay::default() };
    io::write_png(&io::render(canvas, &skel), &out.join("skeleton.png"))?;
    let over = Overlay { walls: Some(&walls), graph: Some(&graph), ..Overlay::default() };
    io::write_png(&io::render(canvas, &over), &out.join("graph.png"))?;
    if graph.is_empty() {
        eprintln!("warning: {} produced an empty skeleton", map.display());
    }
    println!(
        "built {}: {} skeleton pixels, {} vertices, {} edges",
        out.display(),
        sk.count_set(),
        graph.vertex_count(),
        graph.edge_count()
    );
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, map: &Path, trajectory: &Path, out: &Path, sensor_file: Option<&Path>) -> Result<()> {
    let grid = load_grid(map, cfg.occupied_below, cfg.free_above)?;
    let traj = Trajectory::load(trajectory, cfg.step)?;
    let sensor = match sensor_file {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            parse_sensor(&text, path, cfg.sensor)?
        }
        None => cfg.sensor,
    };
    let n = generate_log(&grid, &traj, &sensor, cfg.seed, out)?;
    println!("wrote {n} frames to {}", out.display());
    Ok(())
}

fn cmd_replay(cfg: &RunConfig, log: &Path, out: &Path, snapshot_every: u64, pipelined: bool) -> Result<()> {
    let frames = read_log(log)?;
    let engine_cfg = cfg.engine_config()?;
    create_dir(out)?;
    let snap_dir = out.join("snapshots");
    if snapshot_every > 0 {
        create_dir(&snap_dir)?;
    }
    let mut on_snapshot = |s: &Snapshot| -> topomap::Result<()> {
        if s.distance.bounds().is_empty() {
            return Ok(());
        }
        let mask = s.pending_mask();
        let img = io::render(
            s.distance.bounds(),
            &Overlay {
                distance: Some(&s.distance),
                mask: Some(&mask),
                skeleton: Some(&s.skeleton),
                graph: Some(&s.graph),
                walls: None,
            },
        );
        io::write_png(&img, &snap_dir.join(format!("frame_{:06}.png", s.frame)))
    };
    let result = replay(engine_cfg, &frames, ReplayOptions { pipelined, snapshot_every }, &mut on_snapshot)?;
    let engine = &result.engine;
    let cp = engine.checkpoint();
    cp.write(out)?;
    if !cp.distance.bounds().is_empty() {
        io::write_png(&cp.render(), &out.join("final.png"))?;
    }
    write_text(&out.join("updates.json"), &(serde_json::to_string_pretty(&result.records)? + "\n"))?;
    let timings = engine.timings();
    write_text(&out.join("timing.json"), &(serde_json::to_string_pretty(timings)? + "\n"))?;
    println!("replayed {} frames; graph has {} vertices, {} edges", frames.len(), cp.graph.vertex_count(), cp.graph.edge_count());
    println!("{:<10} {:>8} {:>10} {:>10} {:>10}", "loop", "runs", "min_ms", "mean_ms", "max_ms");
    for (name, t) in [("distance", timings.distance), ("skeleton", timings.skeleton), ("graph", timings.graph)] {
        println!("{:<10} {:>8} {:>10.3} {:>10.3} {:>10.3}", name, t.count, t.min_ms, t.mean_ms(), t.max_ms);
    }
    Ok(())
}

fn read_graph(path: &Path) -> Result<TopoGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    TopoGraph::from_json(&text).with_context(|| format!("cannot parse graph {}", path.display()))
}

fn cmd_compare(cfg: &RunConfig, candidate: &Path, reference: &Path, out: Option<&Path>) -> Result<()> {
    let report = vertex_error(&read_graph(candidate)?, &read_graph(reference)?, cfg.outlier_threshold, cfg.region)?;
    print!("{}", report.to_table());
    if let Some(path) = out {
        write_text(path, &report.to_json()?)?;
    }
    Ok(())
}

fn cmd_render(cfg: &RunConfig, input: &Path, out: &Path, map: Option<&Path>) -> Result<()> {
    let grid = map.map(|m| load_grid(m, cfg.occupied_below, cfg.free_above)).transpose()?;
    let walls = grid.as_ref().map(walls_of);
    let img = if input.is_dir() {
        let cp = Checkpoint::read(input)?;
        if cp.distance.bounds().is_empty() && walls.is_none() {
            bail!("{} is empty; pass --map to draw the map alone", input.display());
        }
        if let Some(w) = &walls {
            let canvas = cp.distance.bounds().union(&w.bounds());
            io::render(
                canvas,
                &Overlay { distance: Some(&cp.distance), walls: Some(w), skeleton: Some(&cp.skeleton), graph: Some(&cp.graph), mask: None },
            )
        } else {
            cp.render()
        }
    } else if input.extension().is_some_and(|e| e == "json") {
        let g = read_graph(input)?;
        let pixels = g.edges().flat_map(|e| e.path.iter().copied()).chain(g.vertices().map(|v| v.pos));
        let own = Bounds::enclosing(pixels).map(|b| b.dilate(2));
        let canvas = match (own, &walls) {
            (Some(b), Some(w)) => b.union(&w.bounds()),
            (Some(b), None) => b,
            (None, Some(w)) => w.bounds(),
            (None, None) => bail!("{} has nothing to draw", input.display()),
        };
        io::render(canvas, &Overlay { walls: walls.as_ref(), graph: Some(&g), ..Overlay::default() })
    } else {
        let sk = io::read_pbm(input, topomap::raster::PixelCoord::new(0, 0))?;
        let canvas = walls.as_ref().map_or(sk.bounds(), |w| w.bounds().union(&sk.bounds()));
        io::render(canvas, &Overlay { walls: walls.as_ref(), skeleton: Some(&sk), ..Overlay::default() })
    };
    io::write_png(&img, out)?;
    println!("rendered {}", out.display());
    Ok(())
}

fn cmd_fixture(kind: FixtureKind, out: &Path, width: usize, cfg: &RunConfig) -> Result<()> {
    let grid = match kind {
        FixtureKind::House => fixtures::house_grid(fixtures::HOUSE_RESOLUTION)?,
        FixtureKind::Corridor => fixtures::corridor_grid(width, 64)?,
        FixtureKind::Plus => fixtures::plus_grid(width, 24)?,
    };
    save_grid(&grid, out)?;
    println!("wrote {}", out.display());
    if let FixtureKind::House = kind {
        let traj_path = out.with_extension("traj");
        write_text(&traj_path, &fixtures::house_trajectory(cfg.step)?.to_text())?;
        let r = fixtures::house_interior(fixtures::HOUSE_RESOLUTION);
        println!("wrote {} (interior region {},{},{},{})", traj_path.display(), r.x0, r.y0, r.x1, r.y1);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.common.resolve()?;
    match cli.command {
        Command::Build { map, out } => cmd_build(&cfg, &map, &out),
        Command::Simulate { map, trajectory, out, sensor } => cmd_simulate(&cfg, &map, &trajectory, &out, sensor.as_deref()),
        Command::Replay { log, out, snapshot_every, pipelined } => cmd_replay(&cfg, &log, &out, snapshot_every, pipelined),
        Command::Compare { candidate, reference, out } => cmd_compare(&cfg, &candidate, &reference, out.as_deref()),
        Command::Render { input, out, map } => cmd_render(&cfg, &input, &out, map.as_deref()),
        Command::Fixture { kind, out, width } => cmd_fixture(kind, &out, width, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: bad arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
