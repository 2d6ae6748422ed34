//! Incremental maintenance of the distance map, skeleton and topology graph
//! as frames stream in.
//!
//! Three loops run at independent, frame-count-based periods. The distance
//! loop max-merges each frame's local map and marks increased pixels. The
//! skeleton loop re-thins only around those pixels, with a ring of the
//! existing skeleton protected so seams stay connected. The graph loop
//! rebuilds the graph inside the changed skeleton area and stitches it to
//! the trimmed remainder.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::distance_field::{build_distance_map, merge_into, DistanceMap, GaussianKernel};
use crate::error::{Error, Result};
use crate::graph::{contract_where, pixel_link, TopoGraph, VertexId};
use crate::io::Checkpoint;
use crate::map_model::{scan_to_obstacles, GridFrame, ScanFrame};
use crate::raster::{Bounds, DirtyMask, PixelCoord, SkeletonMap, NEIGHBORS8};
use crate::skeleton::{binarize, ridge_filter_region, suppress_t_cross_within, thin, SkeletonParams};

/// Update periods, in frames, for the three loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateSchedule {
    pub distmap_every: u64,
    pub skeleton_every: u64,
    pub graph_every: u64,
}

impl Default for UpdateSchedule {
    fn default() -> Self {
        Self { distmap_every: 1, skeleton_every: 20, graph_every: 80 }
    }
}

impl UpdateSchedule {
    pub fn new(distmap_every: u64, skeleton_every: u64, graph_every: u64) -> Result<Self> {
        let s = Self { distmap_every, skeleton_every, graph_every };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { distmap_every: d, skeleton_every: s, graph_every: g } = *self;
        if d == 0 || s == 0 || g == 0 {
            return Err(Error::InvalidArgument("update periods must be at least 1".into()));
        }
        if s % d != 0 || g % s != 0 {
            return Err(Error::InvalidArgument(format!(
                "schedule {d},{s},{g}: skeleton period must be a multiple of the distance period \
                 and graph period a multiple of the skeleton period"
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [u64; 3] {
        [self.distmap_every, self.skeleton_every, self.graph_every]
    }
}

impl std::str::FromStr for UpdateSchedule {
    type Err = Error;

    /// Parses `d,s,g`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u64> = s
            .split(',')
            .map(|t| t.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("schedule `{s}`: {e}")))?;
        match parts[..] {
            [d, sk, g] => UpdateSchedule::new(d, sk, g),
            _ => Err(Error::InvalidArgument(format!("schedule `{s}` needs three comma-separated periods"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub sigma: f64,
    pub skeleton: SkeletonParams,
    pub schedule: UpdateSchedule,
    /// Width of the protected ring of existing skeleton around a re-thinned area.
    pub protected_width: i32,
    /// Search radius for stitching a seam vertex when no exact neighbor exists.
    pub connect_radius: i32,
    pub grid: GridFrame,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            sigma: crate::config::DEFAULT_SIGMA,
            skeleton: SkeletonParams::default(),
            schedule: UpdateSchedule::default(),
            protected_width: 3,
            connect_radius: 3,
            grid: GridFrame::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.protected_width < 1 || self.connect_radius < 1 {
            return Err(Error::InvalidArgument("protected width and connect radius must be at least 1".into()));
        }
        GaussianKernel::new(self.sigma).map(|_| ())
    }
}

/// Running min/mean/max of one loop's wall-clock cost.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LoopTimer {
    pub count: usize,
    pub total_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LoopTimer {
    pub fn record(&mut self, ms: f64) {
        if self.count == 0 || ms < self.min_ms {
            self.min_ms = ms;
        }
        if ms > self.max_ms {
            self.max_ms = ms;
        }
        self.count += 1;
        self.total_ms += ms;
    }

    pub fn mean_ms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_ms / self.count as f64
        }
    }

    fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.record(t.elapsed().as_secs_f64() * 1e3);
        out
    }
}

impl Serialize for LoopTimer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("LoopTimer", 4)?;
        st.serialize_field("count", &self.count)?;
        st.serialize_field("min_ms", &self.min_ms)?;
        st.serialize_field("mean_ms", &self.mean_ms())?;
        st.serialize_field("max_ms", &self.max_ms)?;
        st.end()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    /// Per ingested frame: projection, local map and merge.
    pub distance: LoopTimer,
    pub skeleton: LoopTimer,
    pub graph: LoopTimer,
}

#[derive(Debug, Clone)]
pub struct SkeletonUpdate {
    pub frame: u64,
    /// Pixels whose skeleton value was recomputed.
    pub mask: DirtyMask,
    pub region: Bounds,
    pub changed: usize,
}

#[derive(Debug, Clone)]
pub struct GraphUpdate {
    pub frame: u64,
    /// Pixels whose graph structure was rebuilt.
    pub mask: DirtyMask,
    /// Seam vertices that found nothing to attach to.
    pub dangling: Vec<PixelCoord>,
    /// Seam links that fell back to a straight segment within the radius.
    pub fallback_links: usize,
}

/// Compact, serializable record of one update, independent of timing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "loop", rename_all = "snake_case")]
pub enum UpdateRecord {
    Skeleton { frame: u64, mask_pixels: usize, changed: usize },
    Graph { frame: u64, mask_pixels: usize, vertices: usize, edges: usize, fallback_links: usize, dangling: Vec<[i32; 2]> },
}

impl UpdateRecord {
    fn order_key(&self) -> (u64, u8) {
        match self {
            UpdateRecord::Skeleton { frame, .. } => (*frame, 0),
            UpdateRecord::Graph { frame, .. } => (*frame, 1),
        }
    }
}

/// Owns the global distance map and the pixels it raised since the last
/// skeleton update.
#[derive(Debug, Clone)]
pub struct DistanceLoop {
    kernel: GaussianKernel,
    grid: GridFrame,
    map: DistanceMap,
    dirty: DirtyMask,
    pending: Vec<PixelCoord>,
}

impl DistanceLoop {
    pub fn new(kernel: GaussianKernel, grid: GridFrame) -> Self {
        let empty = Bounds::new(PixelCoord::new(0, 0), 0, 0);
        Self { kernel, grid, map: DistanceMap::new(empty), dirty: DirtyMask::new(empty), pending: Vec::new() }
    }

    pub fn map(&self) -> &DistanceMap {
        &self.map
    }

    pub fn dirty(&self) -> &DirtyMask {
        &self.dirty
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    /// Grows the canvas (zero-filled) so it covers `bounds`.
    pub fn reserve(&mut self, bounds: Bounds) {
        let target = self.map.bounds().union(&bounds);
        self.map.grow(target, 0.0);
        self.dirty.grow(target, false);
    }

    pub fn queue(&mut self, frame: &ScanFrame) {
        self.pending.extend(scan_to_obstacles(frame, &self.grid));
    }

    /// Builds a local map over the queued obstacles' footprint at offset
    /// `c` (its top-left pixel) and max-merges it. Returns the number of
    /// raised pixels.
    pub fn merge_pending(&mut self) -> usize {
        if self.pending.is_empty() {
            return 0;
        }
        let mut obstacles = std::mem::take(&mut self.pending);
        obstacles.sort_unstable();
        obstacles.dedup();
        let footprint = Bounds::enclosing(obstacles.iter().copied()).expect("non-empty").dilate(self.kernel.radius());
        let c = footprint.min;
        let local_obstacles: Vec<PixelCoord> = obstacles.iter().map(|p| p.offset(-c.col, -c.row)).collect();
        let local_bounds = Bounds::new(PixelCoord::new(0, 0), footprint.width, footprint.height);
        let local = build_distance_map(&local_obstacles, local_bounds, &self.kernel);
        merge_into(&mut self.map, &local, c, &mut self.dirty)
    }

    fn take_dirty(&mut self) -> DirtyMask {
        let fresh = DirtyMask::new(self.dirty.bounds());
        std::mem::replace(&mut self.dirty, fresh)
    }
}

/// Owns the global skeleton and the pixels recomputed since the last graph update.
#[derive(Debug, Clone)]
pub struct SkeletonLoop {
    params: SkeletonParams,
    protected_width: i32,
    skeleton: SkeletonMap,
    dirty: DirtyMask,
}

impl SkeletonLoop {
    pub fn new(params: SkeletonParams, protected_width: i32) -> Self {
        let empty = Bounds::new(PixelCoord::new(0, 0), 0, 0);
        Self { params, protected_width, skeleton: SkeletonMap::new(empty), dirty: DirtyMask::new(empty) }
    }

    pub fn skeleton(&self) -> &SkeletonMap {
        &self.skeleton
    }

    pub fn dirty(&self) -> &DirtyMask {
        &self.dirty
    }

    fn sync_canvas(&mut self, canvas: Bounds) {
        if self.skeleton.bounds() != canvas {
            let target = canvas.union(&self.skeleton.bounds());
            self.skeleton.grow(target, false);
            self.dirty.grow(target, false);
        }
    }

    /// Re-skeletonizes the pixels within one pixel of `dm_dirty` (the
    /// Laplacian's reach). Existing skeleton in a ring of the protected
    /// width around them is fed to thinning as undeletable, and only the
    /// recomputed pixels are written back.
    pub fn update(&mut self, dm: &DistanceMap, dm_dirty: &DirtyMask, frame: u64) -> Option<SkeletonUpdate> {
        self.sync_canvas(dm.bounds());
        if !dm_dirty.any() {
            return None;
        }
        let mask = dm_dirty.crop(self.skeleton.bounds(), false).dilate(1);
        let set = mask.set_bounds().expect("non-empty mask");
        let l = self.protected_width;
        let region = set.dilate(l).intersect(&self.skeleton.bounds()).expect("inside canvas");
        let binary = binarize(&ridge_filter_region(dm, region, self.params.scale, self.params.stencil), self.params.threshold);
        let inner = mask.crop(region, false);
        let ring = inner.dilate(l);
        let mut input = SkeletonMap::new(region);
        let mut protected = SkeletonMap::new(region);
        for p in region.iter() {
            if inner.is_set(p) {
                input.set(p, binary.is_set(p));
            } else if ring.is_set(p) && self.skeleton.is_set(p) {
                input.set(p, true);
                protected.set(p, true);
            }
        }
        let result = suppress_t_cross_within(&thin(&input, Some(&protected)), Some(&inner));
        let mut changed = 0;
        for p in inner.iter_set() {
            let v = result.is_set(p);
            if self.skeleton.is_set(p) != v {
                self.skeleton.set(p, v);
                changed += 1;
            }
        }
        self.dirty.union_with(&mask);
        Some(SkeletonUpdate { frame, mask, region, changed })
    }

    fn take_dirty(&mut self) -> DirtyMask {
        let fresh = DirtyMask::new(self.dirty.bounds());
        std::mem::replace(&mut self.dirty, fresh)
    }
}

/// 8-connected straight segment from `a` to `b`, both included.
fn bresenham(a: PixelCoord, b: PixelCoord) -> Vec<PixelCoord> {
    let (dx, dy) = ((b.col - a.col).abs(), -(b.row - a.row).abs());
    let (sx, sy) = ((b.col - a.col).signum(), (b.row - a.row).signum());
    let (mut p, mut err) = (a, dx + dy);
    let mut out = vec![a];
    while p != b {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            p.col += sx;
        }
        if e2 <= dx {
            err += dx;
            p.row += sy;
        }
        out.push(p);
    }
    out
}

/// Splits edge `eid` at path index `at` (strictly inside the path) and
/// returns the new vertex.
fn split_edge(g: &mut TopoGraph, eid: crate::graph::EdgeId, at: usize) -> VertexId {
    let e = g.remove_edge(eid).expect("edge exists");
    let v = g.add_vertex(e.path[at]);
    g.add_edge(e.endpoints.0, v, e.path[..=at].to_vec());
    g.add_edge(v, e.endpoints.1, e.path[at..].to_vec());
    v
}

/// Owns the global topology graph.
#[derive(Debug, Clone)]
pub struct GraphLoop {
    connect_radius: i32,
    graph: TopoGraph,
}

impl GraphLoop {
    pub fn new(connect_radius: i32) -> Self {
        Self { connect_radius, graph: TopoGraph::new() }
    }

    pub fn graph(&self) -> &TopoGraph {
        &self.graph
    }

    /// Rebuilds the graph inside `mask`:
    /// 1. pixel graph of the skeleton inside the mask, noting seam pixels
    ///    that link to skeleton outside it;
    /// 2. global edges trimmed to their runs outside the mask, with a new
    ///    vertex at each cut;
    /// 3. every seam link attached to the outside vertex or edge pixel it
    ///    touches (splitting the edge there), else to the nearest outside
    ///    vertex within the connect radius;
    /// 4. both parts kept in one graph;
    /// 5. degree-2 vertices within one pixel of the mask contracted.
    pub fn update(&mut self, skeleton: &SkeletonMap, mask: &DirtyMask, frame: u64) -> Option<GraphUpdate> {
        if !mask.any() {
            return None;
        }
        let inside = |p: PixelCoord| mask.is_set(p);
        let mut g = std::mem::take(&mut self.graph);

        // Step 2 first, so the local part can be added with fresh ids afterward.
        let mut cut_vertices: BTreeSet<VertexId> = BTreeSet::new();
        let touched: Vec<_> = g.edges().filter(|e| e.path.iter().any(|&p| inside(p))).map(|e| e.id).collect();
        for eid in touched {
            let e = g.remove_edge(eid).expect("listed edge");
            let last = e.path.len() - 1;
            let mut i = 0;
            while i <= last {
                if inside(e.path[i]) {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < last && !inside(e.path[i + 1]) {
                    i += 1;
                }
                let end = i;
                let mut cut = |p: PixelCoord| {
                    let v = g.add_vertex(p);
                    cut_vertices.insert(v);
                    v
                };
                let a = match start {
                    0 => e.endpoints.0,
                    s if s == last => e.endpoints.1,
                    s => cut(e.path[s]),
                };
                let b = match end {
                    x if x == start => a,
                    x if x == last => e.endpoints.1,
                    x => cut(e.path[x]),
                };
                if end > start {
                    g.add_edge(a, b, e.path[start..=end].to_vec());
                }
                i += 1;
            }
        }
        let doomed: Vec<VertexId> = g.vertices().filter(|v| inside(v.pos)).map(|v| v.id).collect();
        for v in doomed {
            g.remove_vertex(v);
        }

        // Step 1: local pixel graph with ids in row-major order.
        let mut local: BTreeMap<PixelCoord, VertexId> = BTreeMap::new();
        for p in mask.iter_set().filter(|&p| skeleton.is_set(p)) {
            local.insert(p, g.add_vertex(p));
        }
        const FORWARD: [(i32, i32); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];
        let mut seams: Vec<(PixelCoord, PixelCoord)> = Vec::new();
        for (&p, &pv) in &local {
            for (dc, dr) in FORWARD {
                let q = p.offset(dc, dr);
                if let Some(&qv) = local.get(&q) {
                    if pixel_link(skeleton, p, q) {
                        g.add_edge(pv, qv, vec![p, q]);
                    }
                }
            }
            for (dc, dr) in NEIGHBORS8 {
                let q = p.offset(dc, dr);
                if !inside(q) && pixel_link(skeleton, p, q) {
                    seams.push((p, q));
                }
            }
        }

        // Step 3: stitch seams onto the outer part.
        let mut at_vertex: HashMap<PixelCoord, VertexId> =
            g.vertices().filter(|v| !inside(v.pos)).map(|v| (v.pos, v.id)).collect();
        let mut on_edge: HashMap<PixelCoord, (crate::graph::EdgeId, usize)> = HashMap::new();
        for e in g.edges() {
            if e.path.iter().all(|&p| !inside(p)) {
                for (i, &p) in e.path.iter().enumerate().take(e.path.len() - 1).skip(1) {
                    on_edge.insert(p, (e.id, i));
                }
            }
        }
        let mut dangling = Vec::new();
        let mut fallback_links = 0;
        let mut unmatched: BTreeSet<PixelCoord> = BTreeSet::new();
        let mut matched: BTreeSet<PixelCoord> = BTreeSet::new();
        for (b, q) in seams {
            let bv = local[&b];
            let target = if let Some(&v) = at_vertex.get(&q) {
                Some(v)
            } else if let Some(&(eid, idx)) = on_edge.get(&q) {
                let v = split_edge(&mut g, eid, idx);
                cut_vertices.insert(v);
                at_vertex.insert(q, v);
                on_edge.remove(&q);
                for e in g.incidence().get(&v).into_iter().flatten().filter_map(|&id| g.edge(id)) {
                    for (i, &p) in e.path.iter().enumerate().take(e.path.len() - 1).skip(1) {
                        on_edge.insert(p, (e.id, i));
                    }
                }
                Some(v)
            } else {
                None
            };
            match target {
                Some(v) => {
                    g.add_edge(bv, v, vec![b, q]);
                    matched.insert(b);
                }
                None => {
                    unmatched.insert(b);
                }
            }
        }
        let r = self.connect_radius;
        for b in unmatched.into_iter().filter(|b| !matched.contains(b)) {
            let nearest = at_vertex
                .iter()
                .filter(|(p, _)| (p.col - b.col).abs() <= r && (p.row - b.row).abs() <= r)
                .map(|(&p, &v)| {
                    let d = (i64::from(p.col - b.col)).pow(2) + (i64::from(p.row - b.row)).pow(2);
                    (d, p, v)
                })
                .filter(|&(d, _, _)| d <= i64::from(r * r))
                .min();
            match nearest {
                Some((_, p, v)) => {
                    g.add_edge(local[&b], v, bresenham(b, p));
                    fallback_links += 1;
                }
                None => dangling.push(b),
            }
        }

        // Step 5: drop cut vertices left isolated, contract seam chains.
        let inc = g.incidence();
        for v in cut_vertices {
            if inc.get(&v).is_none_or(|es| es.is_empty()) {
                g.remove_vertex(v);
            }
        }
        let near = mask.dilate(1);
        self.graph = contract_where(&g, |v| near.is_set(v.pos));
        Some(GraphUpdate { frame, mask: mask.clone(), dangling, fallback_links })
    }
}

/// Read-only view of the engine state after a given frame.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub frame: u64,
    pub distance: DistanceMap,
    pub dm_dirty: DirtyMask,
    pub skeleton: SkeletonMap,
    pub sk_dirty: DirtyMask,
    pub graph: TopoGraph,
}

impl Snapshot {
    /// Union of both pending masks, on the distance map's canvas.
    pub fn pending_mask(&self) -> DirtyMask {
        let mut m = self.dm_dirty.crop(self.distance.bounds(), false);
        m.union_with(&self.sk_dirty);
        m
    }
}

/// What one call to [`Engine::ingest_frame`] or [`Engine::flush`] triggered.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub merged: bool,
    pub skeleton: Option<SkeletonUpdate>,
    pub graph: Option<GraphUpdate>,
}

/// Single-owner engine state running the three loops in sequence.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    frame_count: u64,
    last_frame_id: Option<u64>,
    distance: DistanceLoop,
    skeleton: SkeletonLoop,
    graph: GraphLoop,
    timings: Timings,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let kernel = GaussianKernel::new(config.sigma)?;
        Ok(Self {
            config,
            frame_count: 0,
            last_frame_id: None,
            distance: DistanceLoop::new(kernel, config.grid),
            skeleton: SkeletonLoop::new(config.skeleton, config.protected_width),
            graph: GraphLoop::new(config.connect_radius),
            timings: Timings::default(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn frame_count(&self) -> u64 {
        self.frame_count
    }

    pub fn kernel(&self) -> &GaussianKernel {
        self.distance.kernel()
    }

    pub fn distance_map(&self) -> &DistanceMap {
        self.distance.map()
    }

    pub fn dm_dirty(&self) -> &DirtyMask {
        self.distance.dirty()
    }

    pub fn skeleton(&self) -> &SkeletonMap {
        self.skeleton.skeleton()
    }

    pub fn sk_dirty(&self) -> &DirtyMask {
        self.skeleton.dirty()
    }

    pub fn graph(&self) -> &TopoGraph {
        self.graph.graph()
    }

    pub fn timings(&self) -> &Timings {
        &self.timings
    }

    /// Pre-sizes the canvas so it covers `bounds`.
    pub fn reserve_canvas(&mut self, bounds: Bounds) {
        self.distance.reserve(bounds);
        self.skeleton.sync_canvas(self.distance.map().bounds());
    }

    fn check_order(&mut self, frame: &ScanFrame) -> Result<()> {
        frame.validate()?;
        if let Some(last) = self.last_frame_id {
            if frame.frame_id <= last {
                return Err(Error::InvalidArgument(format!(
                    "frame id {} after {last}: ids must increase",
                    frame.frame_id
                )));
            }
        }
        self.last_frame_id = Some(frame.frame_id);
        Ok(())
    }

    /// Queues the frame's obstacles without running any loop.
    pub fn queue_frame(&mut self, frame: &ScanFrame) -> Result<()> {
        self.check_order(frame)?;
        self.distance.queue(frame);
        self.frame_count += 1;
        Ok(())
    }

    /// Ingests one frame and runs whichever loops are due.
    pub fn ingest_frame(&mut self, frame: &ScanFrame) -> Result<StepOutcome> {
        self.check_order(frame)?;
        let schedule = self.config.schedule;
        let t = Instant::now();
        self.distance.queue(frame);
        self.frame_count += 1;
        let n = self.frame_count;
        let mut out = StepOutcome::default();
        if n.is_multiple_of(schedule.distmap_every) {
            self.distance.merge_pending();
            out.merged = true;
        }
        self.timings.distance.record(t.elapsed().as_secs_f64() * 1e3);
        if n.is_multiple_of(schedule.skeleton_every) {
            out.skeleton = self.update_skeleton();
        }
        if n.is_multiple_of(schedule.graph_every) {
            out.graph = self.update_graph();
        }
        Ok(out)
    }

    pub fn merge_pending(&mut self) -> usize {
        self.distance.merge_pending()
    }

    /// Skeleton loop: consumes the distance map's dirty mask.
    pub fn update_skeleton(&mut self) -> Option<SkeletonUpdate> {
        let frame = self.frame_count;
        let dm_dirty = self.distance.take_dirty();
        let (sk, dm, timer) = (&mut self.skeleton, self.distance.map(), &mut self.timings.skeleton);
        timer.time(|| sk.update(dm, &dm_dirty, frame))
    }

    /// Graph loop: consumes the skeleton's dirty mask.
    pub fn update_graph(&mut self) -> Option<GraphUpdate> {
        let frame = self.frame_count;
        let sk_dirty = self.skeleton.take_dirty();
        let (g, sk, timer) = (&mut self.graph, self.skeleton.skeleton(), &mut self.timings.graph);
        timer.time(|| g.update(sk, &sk_dirty, frame))
    }

    /// Runs every loop once so nothing stays pending.
    pub fn flush(&mut self) -> StepOutcome {
        let merged = self.distance.merge_pending() > 0;
        let skeleton = self.update_skeleton();
        let graph = self.update_graph();
        StepOutcome { merged, skeleton, graph }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            frame: self.frame_count,
            distance: self.distance.map().clone(),
            dm_dirty: self.distance.dirty().clone(),
            skeleton: self.skeleton.skeleton().clone(),
            sk_dirty: self.skeleton.dirty().clone(),
            graph: self.graph.graph().clone(),
        }
    }

    /// Checkpoint with all rasters on the distance map's canvas and the
    /// graph in canonical id order.
    pub fn checkpoint(&self) -> Checkpoint {
        let canvas = self.distance.map().bounds();
        Checkpoint {
            frame_count: self.frame_count,
            schedule: self.config.schedule.as_array(),
            sigma: self.config.sigma,
            distance: self.distance.map().clone(),
            skeleton: self.skeleton.skeleton().crop(canvas, false),
            dm_dirty: self.distance.dirty().crop(canvas, false),
            sk_dirty: self.skeleton.dirty().crop(canvas, false),
            graph: self.graph.graph().renumbered(),
        }
    }
}

/// Replay settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReplayOptions {
    /// Run the loops on three threads instead of one.
    pub pipelined: bool,
    /// Emit a snapshot every this many frames (0 disables).
    pub snapshot_every: u64,
}

pub struct Replay {
    pub engine: Engine,
    pub records: Vec<UpdateRecord>,
}

fn skeleton_record(u: &SkeletonUpdate) -> UpdateRecord {
    UpdateRecord::Skeleton { frame: u.frame, mask_pixels: u.mask.count_set(), changed: u.changed }
}

fn graph_record(u: &GraphUpdate, g: &TopoGraph) -> UpdateRecord {
    UpdateRecord::Graph {
        frame: u.frame,
        mask_pixels: u.mask.count_set(),
        vertices: g.vertex_count(),
        edges: g.edge_count(),
        fallback_links: u.fallback_links,
        dangling: u.dangling.iter().map(|p| [p.col, p.row]).collect(),
    }
}

/// Feeds every frame through a fresh engine, then flushes. Snapshots are
/// taken after each multiple of `snapshot_every` frames. Both modes give
/// identical state, records and snapshots.
pub fn replay(
    config: EngineConfig,
    frames: &[ScanFrame],
    options: ReplayOptions,
    on_snapshot: &mut dyn FnMut(&Snapshot) -> Result<()>,
) -> Result<Replay> {
    let mut engine = Engine::new(config)?;
    if options.pipelined {
        // Validate ordering up front so the worker threads never fail.
        let mut probe = Engine::new(config)?;
        for f in frames {
            probe.check_order(f)?;
        }
        return replay_pipelined(engine, frames, options, on_snapshot);
    }
    let mut records = Vec::new();
    for f in frames {
        let out = engine.ingest_frame(f)?;
        push_records(&mut records, &out, engine.graph());
        if options.snapshot_every > 0 && engine.frame_count % options.snapshot_every == 0 {
            on_snapshot(&engine.snapshot())?;
        }
    }
    let out = engine.flush();
    push_records(&mut records, &out, engine.graph());
    Ok(Replay { engine, records })
}

fn push_records(records: &mut Vec<UpdateRecord>, out: &StepOutcome, g: &TopoGraph) {
    if let Some(u) = &out.skeleton {
        records.push(skeleton_record(u));
    }
    if let Some(u) = &out.graph {
        records.push(graph_record(u, g));
    }
}

enum ToSkeleton {
    Update { frame: u64, map: DistanceMap, dirty: DirtyMask, graph_due: bool },
    Snapshot { frame: u64, map: DistanceMap, dirty: DirtyMask },
}

enum ToGraph {
    Update { frame: u64, skeleton: SkeletonMap, dirty: DirtyMask },
    Snapshot(Box<Snapshot>),
}

enum ToCollector {
    Record(UpdateRecord),
    Snapshot(Box<Snapshot>),
}

/// Each loop owns its product and receives whole snapshots of its
/// upstream product at loop boundaries, so no loop sees a half-merged raster.
fn replay_pipelined(
    engine: Engine,
    frames: &[ScanFrame],
    options: ReplayOptions,
    on_snapshot: &mut dyn FnMut(&Snapshot) -> Result<()>,
) -> Result<Replay> {
    let Engine { config, mut distance, mut skeleton, mut graph, .. } = engine;
    let schedule = config.schedule;
    let (to_sk, sk_rx) = mpsc::channel::<ToSkeleton>();
    let (to_g, g_rx) = mpsc::channel::<ToGraph>();
    let (to_c, c_rx) = mpsc::channel::<ToCollector>();
    let total = frames.len() as u64;

    std::thread::scope(|scope| -> Result<Replay> {
        let dist_handle = scope.spawn(move || {
            let mut timer = LoopTimer::default();
            let mut last_id = None;
            for (i, f) in frames.iter().enumerate() {
                let n = i as u64 + 1;
                let t = Instant::now();
                distance.queue(f);
                if n.is_multiple_of(schedule.distmap_every) {
                    distance.merge_pending();
                }
                timer.record(t.elapsed().as_secs_f64() * 1e3);
                last_id = Some(f.frame_id);
                if n.is_multiple_of(schedule.skeleton_every) {
                    let dirty = distance.take_dirty();
                    let graph_due = n.is_multiple_of(schedule.graph_every);
                    let _ = to_sk.send(ToSkeleton::Update { frame: n, map: distance.map().clone(), dirty, graph_due });
                }
                if options.snapshot_every > 0 && n.is_multiple_of(options.snapshot_every) {
                    let _ = to_sk.send(ToSkeleton::Snapshot {
                        frame: n,
                        map: distance.map().clone(),
                        dirty: distance.dirty().clone(),
                    });
                }
            }
            distance.merge_pending();
            let dirty = distance.take_dirty();
            let _ = to_sk.send(ToSkeleton::Update { frame: total, map: distance.map().clone(), dirty, graph_due: true });
            (distance, timer, last_id)
        });
        let to_c_sk = to_c.clone();
        let sk_handle = scope.spawn(move || {
            let mut timer = LoopTimer::default();
            for msg in sk_rx {
                match msg {
                    ToSkeleton::Update { frame, map, dirty, graph_due } => {
                        if let Some(u) = timer.time(|| skeleton.update(&map, &dirty, frame)) {
                            let _ = to_c_sk.send(ToCollector::Record(skeleton_record(&u)));
                        }
                        if graph_due {
                            let dirty = skeleton.take_dirty();
                            let _ = to_g.send(ToGraph::Update { frame, skeleton: skeleton.skeleton().clone(), dirty });
                        }
                    }
                    ToSkeleton::Snapshot { frame, map, dirty } => {
                        skeleton.sync_canvas(map.bounds());
                        let _ = to_g.send(ToGraph::Snapshot(Box::new(Snapshot {
                            frame,
                            distance: map,
                            dm_dirty: dirty,
                            skeleton: skeleton.skeleton().clone(),
                            sk_dirty: skeleton.dirty().clone(),
                            graph: TopoGraph::new(),
                        })));
                    }
                }
            }
            (skeleton, timer)
        });
        let g_handle = scope.spawn(move || {
            let mut timer = LoopTimer::default();
            for msg in g_rx {
                match msg {
                    ToGraph::Update { frame, skeleton, dirty } => {
                        if let Some(u) = timer.time(|| graph.update(&skeleton, &dirty, frame)) {
                            let _ = to_c.send(ToCollector::Record(graph_record(&u, graph.graph())));
                        }
                    }
                    ToGraph::Snapshot(mut s) => {
                        s.graph = graph.graph().clone();
                        let _ = to_c.send(ToCollector::Snapshot(s));
                    }
                }
            }
            (graph, timer)
        });

        let mut records = Vec::new();
        let mut failure = None;
        for msg in c_rx {
            match msg {
                ToCollector::Record(r) => records.push(r),
                ToCollector::Snapshot(s) => {
                    if failure.is_none() {
                        if let Err(e) = on_snapshot(&s) {
                            failure = Some(e);
                        }
                    }
                }
            }
        }
        let (distance, dist_timer, last_frame_id) = dist_handle.join().expect("distance loop panicked");
        let (skeleton, sk_timer) = sk_handle.join().expect("skeleton loop panicked");
        let (graph, g_timer) = g_handle.join().expect("graph loop panicked");
        if let Some(e) = failure {
            return Err(e);
        }
        records.sort_by_key(UpdateRecord::order_key);
        let timings = Timings { distance: dist_timer, skeleton: sk_timer, graph: g_timer };
        Ok(Replay {
            engine: Engine { config, frame_count: total, last_frame_id, distance, skeleton, graph, timings },
            records,
        })
    })
}
