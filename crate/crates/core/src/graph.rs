//! Skeleton pixels to topology graph.
//!
//! Every skeleton pixel first becomes a vertex linked to its 8-neighbors,
//! except diagonals that cut the corner of an L (they would duplicate a
//! two-step orthogonal path). Chains of degree-2 vertices then collapse into
//! single edges that remember the pixel path they replaced.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{PixelCoord, SkeletonMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub pos: PixelCoord,
    /// Incident edge count; a self-loop counts twice.
    pub degree: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub endpoints: (VertexId, VertexId),
    /// Pixels from the first endpoint to the second, 8-connected.
    pub path: Vec<PixelCoord>,
    pub length: f64,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.endpoints.0 == self.endpoints.1
    }

    pub fn other(&self, v: VertexId) -> VertexId {
        if self.endpoints.0 == v {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }

    /// Path oriented to start at vertex `from`.
    pub fn path_from(&self, from: VertexId) -> Vec<PixelCoord> {
        if self.endpoints.0 == from {
            self.path.clone()
        } else {
            self.path.iter().rev().copied().collect()
        }
    }
}

/// Sum of step lengths along an 8-connected path.
pub fn path_length(path: &[PixelCoord]) -> f64 {
    path.windows(2).map(|w| w[0].step_length(w[1])).sum()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopoGraph {
    vertices: BTreeMap<VertexId, Vertex>,
    edges: BTreeMap<EdgeId, Edge>,
    next_vertex: u64,
    next_edge: u64,
}

impl TopoGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn add_vertex(&mut self, pos: PixelCoord) -> VertexId {
        let id = VertexId(self.next_vertex);
        self.insert_vertex(id, pos);
        id
    }

    /// Inserts a vertex under a caller-chosen id (replacing any previous one).
    pub fn insert_vertex(&mut self, id: VertexId, pos: PixelCoord) {
        self.next_vertex = self.next_vertex.max(id.0 + 1);
        self.vertices.insert(id, Vertex { id, pos, degree: 0 });
    }

    /// Adds an edge with a fresh id. Both endpoints must exist and the path
    /// must run from `a`'s position to `b`'s.
    pub fn add_edge(&mut self, a: VertexId, b: VertexId, path: Vec<PixelCoord>) -> EdgeId {
        let id = EdgeId(self.next_edge);
        self.insert_edge(id, a, b, path);
        id
    }

    pub fn insert_edge(&mut self, id: EdgeId, a: VertexId, b: VertexId, path: Vec<PixelCoord>) {
        debug_assert_eq!(path.first(), self.vertices.get(&a).map(|v| &v.pos));
        debug_assert_eq!(path.last(), self.vertices.get(&b).map(|v| &v.pos));
        self.next_edge = self.next_edge.max(id.0 + 1);
        let length = path_length(&path);
        self.vertices.get_mut(&a).expect("edge endpoint exists").degree += 1;
        self.vertices.get_mut(&b).expect("edge endpoint exists").degree += 1;
        if let Some(old) = self.edges.insert(id, Edge { id, endpoints: (a, b), path, length }) {
            self.detach(&old);
        }
    }

    fn detach(&mut self, e: &Edge) {
        for v in [e.endpoints.0, e.endpoints.1] {
            if let Some(v) = self.vertices.get_mut(&v) {
                v.degree -= 1;
            }
        }
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Option<Edge> {
        let e = self.edges.remove(&id)?;
        self.detach(&e);
        Some(e)
    }

    /// Removes a vertex and every edge touching it.
    pub fn remove_vertex(&mut self, id: VertexId) -> Option<Vertex> {
        let doomed: Vec<EdgeId> = self
            .edges
            .values()
            .filter(|e| e.endpoints.0 == id || e.endpoints.1 == id)
            .map(|e| e.id)
            .collect();
        for e in doomed {
            self.remove_edge(e);
        }
        self.vertices.remove(&id)
    }

    /// Incident edge ids per vertex, ascending; self-loops appear twice.
    pub fn incidence(&self) -> BTreeMap<VertexId, Vec<EdgeId>> {
        let mut inc: BTreeMap<VertexId, Vec<EdgeId>> =
            self.vertices.keys().map(|&v| (v, Vec::new())).collect();
        for e in self.edges.values() {
            inc.entry(e.endpoints.0).or_default().push(e.id);
            inc.entry(e.endpoints.1).or_default().push(e.id);
        }
        inc
    }

    pub fn position_index(&self) -> HashMap<PixelCoord, VertexId> {
        self.vertices.values().map(|v| (v.pos, v.id)).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.values().map(|e| e.length).sum()
    }

    /// Canonical form: vertices numbered in row-major position order, each
    /// edge oriented from its lower to its higher endpoint (loops from the
    /// smaller of their two path directions), edges numbered in sorted order.
    /// Graphs equal up to ids and edge direction renumber identically.
    pub fn renumbered(&self) -> TopoGraph {
        let mut by_pos: Vec<&Vertex> = self.vertices.values().collect();
        by_pos.sort_by_key(|v| (v.pos, v.id));
        let map: HashMap<VertexId, VertexId> =
            by_pos.iter().enumerate().map(|(i, v)| (v.id, VertexId(i as u64))).collect();
        let mut out = TopoGraph::new();
        for v in &by_pos {
            out.insert_vertex(map[&v.id], v.pos);
        }
        let mut edges: Vec<(VertexId, VertexId, Vec<PixelCoord>)> = self
            .edges
            .values()
            .map(|e| {
                let (a, b) = (map[&e.endpoints.0], map[&e.endpoints.1]);
                let reversed: Vec<PixelCoord> = e.path.iter().rev().copied().collect();
                if a > b || (a == b && reversed < e.path) {
                    (b, a, reversed)
                } else {
                    (a, b, e.path.clone())
                }
            })
            .collect();
        edges.sort();
        for (i, (a, b, path)) in edges.into_iter().enumerate() {
            out.insert_edge(EdgeId(i as u64), a, b, path);
        }
        out
    }

    /// Checks structural invariants; returns a description of the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut degree: HashMap<VertexId, u32> = HashMap::new();
        let mut seen = BTreeSet::new();
        for v in self.vertices.values() {
            if !seen.insert(v.pos) {
                return Err(format!("two vertices at {:?}", v.pos));
            }
        }
        for e in self.edges.values() {
            let (a, b) = e.endpoints;
            let (Some(va), Some(vb)) = (self.vertices.get(&a), self.vertices.get(&b)) else {
                return Err(format!("edge {:?} references a missing vertex", e.id));
            };
            if e.path.first() != Some(&va.pos) || e.path.last() != Some(&vb.pos) {
                return Err(format!("edge {:?} path does not join its endpoints", e.id));
            }
            if e.path.windows(2).any(|w| !w[0].is_neighbor8(w[1])) {
                return Err(format!("edge {:?} path is not 8-connected", e.id));
            }
            if (path_length(&e.path) - e.length).abs() > 1e-9 {
                return Err(format!("edge {:?} length mismatch", e.id));
            }
            *degree.entry(a).or_default() += 1;
            *degree.entry(b).or_default() += 1;
        }
        for v in self.vertices.values() {
            let d = degree.get(&v.id).copied().unwrap_or(0);
            if d != v.degree {
                return Err(format!("vertex {:?} degree {} but {} incident", v.id, v.degree, d));
            }
        }
        Ok(())
    }

    /// Connected components as sets of vertex ids.
    pub fn components(&self) -> Vec<BTreeSet<VertexId>> {
        let mut parent: HashMap<VertexId, VertexId> = self.vertices.keys().map(|&v| (v, v)).collect();
        fn find(parent: &mut HashMap<VertexId, VertexId>, v: VertexId) -> VertexId {
            let p = parent[&v];
            if p == v {
                return v;
            }
            let root = find(parent, p);
            parent.insert(v, root);
            root
        }
        for e in self.edges.values() {
            let (a, b) = (find(&mut parent, e.endpoints.0), find(&mut parent, e.endpoints.1));
            if a != b {
                parent.insert(a.max(b), a.min(b));
            }
        }
        let mut groups: BTreeMap<VertexId, BTreeSet<VertexId>> = BTreeMap::new();
        for &v in self.vertices.keys() {
            let root = find(&mut parent, v);
            groups.entry(root).or_default().insert(v);
        }
        groups.into_values().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = GraphDoc {
            vertices: self
                .vertices
                .values()
                .map(|v| VertexDoc { id: v.id.0, col: v.pos.col, row: v.pos.row })
                .collect(),
            edges: self
                .edges
                .values()
                .map(|e| EdgeDoc {
                    id: e.id.0,
                    v1: e.endpoints.0 .0,
                    v2: e.endpoints.1 .0,
                    length: (e.length * 1e6).round() / 1e6,
                    path: e.path.iter().map(|p| [p.col, p.row]).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<TopoGraph> {
        let doc: GraphDoc = serde_json::from_str(text)?;
        let mut g = TopoGraph::new();
        for v in &doc.vertices {
            g.insert_vertex(VertexId(v.id), PixelCoord::new(v.col, v.row));
        }
        for e in doc.edges {
            let (a, b) = (VertexId(e.v1), VertexId(e.v2));
            if !g.vertices.contains_key(&a) || !g.vertices.contains_key(&b) {
                return Err(crate::error::Error::InvalidArgument(format!(
                    "edge {} references unknown vertex",
                    e.id
                )));
            }
            let path = e.path.into_iter().map(|[c, r]| PixelCoord::new(c, r)).collect();
            g.insert_edge(EdgeId(e.id), a, b, path);
        }
        Ok(g)
    }

    /// Graphviz export with pinned vertex positions (y flipped so the
    /// picture matches the raster orientation).
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph topology {\n  node [shape=point];\n");
        for v in self.vertices.values() {
            let _ = writeln!(s, "  v{} [pos=\"{},{}!\"];", v.id.0, v.pos.col, -v.pos.row);
        }
        for e in self.edges.values() {
            let _ = writeln!(
                s,
                "  v{} -- v{} [id=\"e{}\", len=\"{:.3}\"];",
                e.endpoints.0 .0, e.endpoints.1 .0, e.id.0, e.length
            );
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    vertices: Vec<VertexDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Serialize, Deserialize)]
struct VertexDoc {
    id: u64,
    col: i32,
    row: i32,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    id: u64,
    v1: u64,
    v2: u64,
    length: f64,
    path: Vec<[i32; 2]>,
}

/// Whether the pixel-graph edge between 8-neighbors `p` and `q` exists in
/// `sk`: orthogonal pairs always, diagonal pairs only when neither shared
/// orthogonal neighbor is set.
pub fn pixel_link(sk: &SkeletonMap, p: PixelCoord, q: PixelCoord) -> bool {
    if !p.is_neighbor8(q) || !sk.is_set(p) || !sk.is_set(q) {
        return false;
    }
    if p.col == q.col || p.row == q.row {
        return true;
    }
    !sk.is_set(PixelCoord::new(q.col, p.row)) && !sk.is_set(PixelCoord::new(p.col, q.row))
}

/// Forward neighbor offsets; visiting these from every pixel finds each pair once.
const FORWARD: [(i32, i32); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

/// One vertex per skeleton pixel (ids in row-major order) and one edge per
/// linked neighbor pair, per [`pixel_link`].
pub fn pixels_to_graph(sk: &SkeletonMap) -> TopoGraph {
    let mut g = TopoGraph::new();
    let mut ids = HashMap::new();
    for p in sk.iter_set() {
        ids.insert(p, g.add_vertex(p));
    }
    for p in sk.iter_set() {
        for (dc, dr) in FORWARD {
            let q = p.offset(dc, dr);
            if pixel_link(sk, p, q) {
                g.add_edge(ids[&p], ids[&q], vec![p, q]);
            }
        }
    }
    g
}

/// Collapses every chain of degree-2 vertices into one path-annotated edge,
/// then renumbers ids canonically. Pure cycles keep their row-major-smallest
/// pixel as an anchor vertex carrying a self-loop.
pub fn contract_degree2(g: &TopoGraph) -> TopoGraph {
    contract_where(g, |_| true).renumbered()
}

/// Contracts degree-2 vertices for which `removable` holds, preserving the
/// ids of every surviving vertex and of every edge whose endpoints both
/// survive. Merged edges get fresh ids in deterministic traversal order.
pub fn contract_where<F: Fn(&Vertex) -> bool>(g: &TopoGraph, removable: F) -> TopoGraph {
    let inc = g.incidence();
    let is_removable = |v: &Vertex| -> bool {
        v.degree == 2 && {
            let es = &inc[&v.id];
            es.len() == 2 && es[0] != es[1] && !g.edges[&es[0]].is_loop() && !g.edges[&es[1]].is_loop()
        } && removable(v)
    };
    let gone: BTreeSet<VertexId> = g.vertices.values().filter(|v| is_removable(v)).map(|v| v.id).collect();
    let mut out = TopoGraph { next_vertex: g.next_vertex, next_edge: g.next_edge, ..TopoGraph::default() };
    for v in g.vertices.values().filter(|v| !gone.contains(&v.id)) {
        out.insert_vertex(v.id, v.pos);
    }
    let mut consumed: BTreeSet<EdgeId> = BTreeSet::new();
    for e in g.edges.values() {
        if !gone.contains(&e.endpoints.0) && !gone.contains(&e.endpoints.1) {
            out.insert_edge(e.id, e.endpoints.0, e.endpoints.1, e.path.clone());
            consumed.insert(e.id);
        }
    }
    // Walk from a start vertex along `first` through removable vertices.
    let walk = |start: VertexId, first: EdgeId, consumed: &mut BTreeSet<EdgeId>| -> (VertexId, Vec<PixelCoord>) {
        let mut path = g.edges[&first].path_from(start);
        consumed.insert(first);
        let mut cur = g.edges[&first].other(start);
        let mut via = first;
        while gone.contains(&cur) {
            let next = inc[&cur].iter().copied().find(|&e| e != via).expect("degree-2 vertex");
            if consumed.contains(&next) {
                break;
            }
            consumed.insert(next);
            path.extend(g.edges[&next].path_from(cur).into_iter().skip(1));
            cur = g.edges[&next].other(cur);
            via = next;
        }
        (cur, path)
    };
    for v in g.vertices.values().filter(|v| !gone.contains(&v.id)) {
        for &e in &inc[&v.id] {
            if consumed.contains(&e) {
                continue;
            }
            let (end, path) = walk(v.id, e, &mut consumed);
            out.add_edge(v.id, end, path);
        }
    }
    // Whatever is left forms cycles made only of removable vertices.
    let leftover: Vec<EdgeId> = g.edges.keys().copied().filter(|e| !consumed.contains(e)).collect();
    for e in leftover {
        if consumed.contains(&e) {
            continue;
        }
        // Collect the cycle to find its anchor.
        let mut cycle = Vec::new();
        let (mut cur, mut via) = (g.edges[&e].endpoints.0, e);
        loop {
            cycle.push(cur);
            via = inc[&cur].iter().copied().find(|&x| x != via).unwrap();
            cur = g.edges[&via].other(cur);
            if cur == g.edges[&e].endpoints.0 {
                break;
            }
        }
        let anchor = *cycle.iter().min_by_key(|&&v| (g.vertices[&v].pos, v)).unwrap();
        out.insert_vertex(anchor, g.vertices[&anchor].pos);
        let first = inc[&anchor][0];
        let mut path = g.edges[&first].path_from(anchor);
        consumed.insert(first);
        let (mut cur, mut via) = (g.edges[&first].other(anchor), first);
        while cur != anchor {
            let next = inc[&cur].iter().copied().find(|&x| x != via).unwrap();
            consumed.insert(next);
            path.extend(g.edges[&next].path_from(cur).into_iter().skip(1));
            cur = g.edges[&next].other(cur);
            via = next;
        }
        out.add_edge(anchor, anchor, path);
    }
    out
}

/// Batch path: pixel graph then full contraction.
pub fn skeleton_to_graph(sk: &SkeletonMap) -> TopoGraph {
    contract_degree2(&pixels_to_graph(sk))
}
