//! C ABI over `topomap`.
//!
//! Objects cross the boundary as opaque heap handles released by their
//! `_free` function. Every fallible call returns a [`TopoStatus`]; on failure
//! [`topo_last_error`] describes the problem for the calling thread.
//! Strings handed out by the library must be released with
//! [`topo_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use topomap::config::RunConfig;
use topomap::distance_field::{build_distance_map, GaussianKernel};
use topomap::engine::{Engine, UpdateSchedule};
use topomap::graph::{skeleton_to_graph, TopoGraph as Graph};
use topomap::map_model::{load_grid, Cell, GridFrame, OccupancyGrid, Pose2D, ScanFrame, WorldPoint};
use topomap::metrics::{vertex_error, Region};
use topomap::skeleton::skeletonize;
use topomap::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    EmptyReference = 5,
    Panic = 6,
}

/// Occupancy grid handle.
pub struct TopoGrid(OccupancyGrid);

/// Topology graph handle.
pub struct TopoGraph(Graph);

/// Incremental engine handle.
pub struct TopoEngine(Engine);

/// Pipeline and engine parameters; start from [`topo_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopoParams {
    pub sigma: f64,
    pub laplacian_scale: f64,
    pub binarize_threshold: f64,
    pub distmap_every: u64,
    pub skeleton_every: u64,
    pub graph_every: u64,
    pub protected_layer_width: i32,
    pub connect_radius: i32,
    /// Meters per pixel for projecting scans.
    pub resolution: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

/// Inclusive pixel rectangle.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TopoRegion {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

/// Vertex error summary. Undefined averages are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopoVertexError {
    pub avg_dist: f64,
    pub pct_within_1: f64,
    pub outliers: usize,
    pub total: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(TopoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => TopoStatus::Io,
            Error::Parse { .. } | Error::Json(_) | Error::Image { .. } | Error::NotGrayscale { .. } => TopoStatus::Parse,
            Error::EmptyReference => TopoStatus::EmptyReference,
            _ => TopoStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TopoStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> TopoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TopoStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TopoStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TopoStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let slot = as_mut(out, "output pointer")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

fn run_config(p: &TopoParams) -> Result<RunConfig, Failure> {
    let c = RunConfig {
        sigma: p.sigma,
        laplacian_scale: p.laplacian_scale,
        binarize_threshold: p.binarize_threshold,
        schedule: UpdateSchedule::new(p.distmap_every, p.skeleton_every, p.graph_every)?,
        protected_layer_width: p.protected_layer_width,
        connect_radius: p.connect_radius,
        resolution: p.resolution,
        origin_x: p.origin_x,
        origin_y: p.origin_y,
        ..RunConfig::default()
    };
    c.validate()?;
    Ok(c)
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn topo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn topo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default parameters.
#[no_mangle]
pub extern "C" fn topo_params_default() -> TopoParams {
    let c = RunConfig::default();
    let [d, s, g] = c.schedule.as_array();
    TopoParams {
        sigma: c.sigma,
        laplacian_scale: c.laplacian_scale,
        binarize_threshold: c.binarize_threshold,
        distmap_every: d,
        skeleton_every: s,
        graph_every: g,
        protected_layer_width: c.protected_layer_width,
        connect_radius: c.connect_radius,
        resolution: c.resolution,
        origin_x: c.origin_x,
        origin_y: c.origin_y,
    }
}

/// Loads a grayscale PGM or PNG map (with optional `.meta` sidecar).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topo_grid_load(
    path: *const c_char,
    occupied_below: u8,
    free_above: u8,
    out: *mut *mut TopoGrid,
) -> TopoStatus {
    guard(|| {
        let path = as_str(path, "path")?;
        let grid = load_grid(Path::new(path), occupied_below, free_above)?;
        put(out, TopoGrid(grid))
    })
}

/// Builds a grid from `width * height` row-major cells: 0 free,
/// 1 occupied, 2 unknown.
///
/// # Safety
/// `cells` must point to `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topo_grid_from_cells(
    width: usize,
    height: usize,
    cells: *const u8,
    resolution: f64,
    origin_x: f64,
    origin_y: f64,
    out: *mut *mut TopoGrid,
) -> TopoStatus {
    guard(|| {
        if cells.is_null() {
            return Err(null("cells"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Failure(TopoStatus::InvalidArgument, "grid too large".into()))?;
        let raw = std::slice::from_raw_parts(cells, n);
        let cells = raw
            .iter()
            .map(|&c| match c {
                0 => Ok(Cell::Free),
                1 => Ok(Cell::Occupied),
                2 => Ok(Cell::Unknown),
                v => Err(Failure(TopoStatus::InvalidArgument, format!("cell value {v} is not 0, 1 or 2"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let frame = GridFrame::new(resolution, WorldPoint { x: origin_x, y: origin_y })?;
        put(out, TopoGrid(OccupancyGrid::from_cells(width, height, cells, frame)?))
    })
}

/// Writes the grid size.
///
/// # Safety
/// `grid` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn topo_grid_size(grid: *const TopoGrid, width: *mut usize, height: *mut usize) -> TopoStatus {
    guard(|| {
        let g = &as_ref(grid, "grid")?.0;
        *as_mut(width, "width")? = g.width();
        *as_mut(height, "height")? = g.height();
        Ok(())
    })
}

/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn topo_grid_free(grid: *mut TopoGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Batch pipeline: distance map, skeleton, graph. `params` may be null for
/// defaults.
///
/// # Safety
/// `grid` must be a live handle; `params` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topo_build_graph(
    grid: *const TopoGrid,
    params: *const TopoParams,
    out: *mut *mut TopoGraph,
) -> TopoStatus {
    guard(|| {
        let grid = &as_ref(grid, "grid")?.0;
        let p = params.as_ref().copied().unwrap_or_else(|| topo_params_default());
        let cfg = run_config(&p)?;
        let kernel = GaussianKernel::new(cfg.sigma)?;
        let dm = build_distance_map(&grid.obstacles(), grid.bounds(), &kernel);
        let graph = skeleton_to_graph(&skeletonize(&dm, &cfg.skeleton_params()));
        put(out, TopoGraph(graph.renumbered()))
    })
}

/// Vertex count; 0 for null.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn topo_graph_vertex_count(graph: *const TopoGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.vertex_count())
}

/// Edge count; 0 for null.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn topo_graph_edge_count(graph: *const TopoGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.edge_count())
}

/// Serializes the graph to JSON. Free the result with [`topo_string_free`].
///
/// # Safety
/// `graph` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topo_graph_to_json(graph: *const TopoGraph, out: *mut *mut c_char) -> TopoStatus {
    guard(|| {
        let json = as_ref(graph, "graph")?.0.to_json()?;
        let c = CString::new(json).map_err(|_| Failure(TopoStatus::Parse, "JSON contains NUL".into()))?;
        *as_mut(out, "output pointer")? = c.into_raw();
        Ok(())
    })
}

/// Parses a graph from JSON.
///
/// # Safety
/// `json` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topo_graph_from_json(json: *const c_char, out: *mut *mut TopoGraph) -> TopoStatus {
    guard(|| {
        let g = Graph::from_json(as_str(json, "json")?)?;
        put(out, TopoGraph(g))
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn topo_graph_free(graph: *mut TopoGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Nearest-vertex error of `candidate` against `reference`, optionally
/// restricted to `region` (null for all vertices).
///
/// # Safety
/// Graph handles must be live; `region` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topo_vertex_error(
    candidate: *const TopoGraph,
    reference: *const TopoGraph,
    outlier_threshold: f64,
    region: *const TopoRegion,
    out: *mut TopoVertexError,
) -> TopoStatus {
    guard(|| {
        let a = &as_ref(candidate, "candidate")?.0;
        let b = &as_ref(reference, "reference")?.0;
        let region = region.as_ref().map(|r| Region::new(r.x0, r.y0, r.x1, r.y1));
        let r = vertex_error(a, b, outlier_threshold, region)?;
        *as_mut(out, "output pointer")? = TopoVertexError {
            avg_dist: r.avg_dist.unwrap_or(f64::NAN),
            pct_within_1: r.pct_within_1.unwrap_or(f64::NAN),
            outliers: r.outliers,
            total: r.total,
        };
        Ok(())
    })
}

/// New incremental engine. `params` may be null for defaults.
///
/// # Safety
/// `params` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topo_engine_new(params: *const TopoParams, out: *mut *mut TopoEngine) -> TopoStatus {
    guard(|| {
        let p = params.as_ref().copied().unwrap_or_else(|| topo_params_default());
        let engine = Engine::new(run_config(&p)?.engine_config()?)?;
        put(out, TopoEngine(engine))
    })
}

/// Ingests one scan. `ranges` holds `count` beams; values above
/// `range_max` (or infinite) mean no return. Frame ids must increase.
///
/// # Safety
/// `engine` must be a live handle; `ranges` must point to `count` doubles.
#[no_mangle]
pub unsafe extern "C" fn topo_engine_ingest(
    engine: *mut TopoEngine,
    frame_id: u64,
    x: f64,
    y: f64,
    theta: f64,
    angle_min: f64,
    angle_increment: f64,
    range_max: f64,
    ranges: *const f64,
    count: usize,
) -> TopoStatus {
    guard(|| {
        let e = &mut as_mut(engine, "engine")?.0;
        if ranges.is_null() {
            return Err(null("ranges"));
        }
        let frame = ScanFrame {
            frame_id,
            pose: Pose2D::new(x, y, theta),
            angle_min,
            angle_increment,
            range_max,
            ranges: std::slice::from_raw_parts(ranges, count).to_vec(),
        };
        e.ingest_frame(&frame)?;
        Ok(())
    })
}

/// Ingests one line of the text frame-log format.
///
/// # Safety
/// `engine` must be a live handle; `line` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn topo_engine_ingest_line(engine: *mut TopoEngine, line: *const c_char) -> TopoStatus {
    guard(|| {
        let e = &mut as_mut(engine, "engine")?.0;
        let frame = topomap::sim::parse_frame(as_str(line, "line")?, Path::new("<line>"), 1)?;
        e.ingest_frame(&frame)?;
        Ok(())
    })
}

/// Runs every loop once so nothing stays pending.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn topo_engine_flush(engine: *mut TopoEngine) -> TopoStatus {
    guard(|| {
        as_mut(engine, "engine")?.0.flush();
        Ok(())
    })
}

/// Frames ingested so far; 0 for null.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn topo_engine_frame_count(engine: *const TopoEngine) -> u64 {
    engine.as_ref().map_or(0, |e| e.0.frame_count())
}

/// Copies the engine's current graph (canonical ids) into a new handle.
///
/// # Safety
/// `engine` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn topo_engine_graph(engine: *const TopoEngine, out: *mut *mut TopoGraph) -> TopoStatus {
    guard(|| {
        let g = as_ref(engine, "engine")?.0.graph().renumbered();
        put(out, TopoGraph(g))
    })
}

/// # Safety
/// `engine` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn topo_engine_free(engine: *mut TopoEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}
