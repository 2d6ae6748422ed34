//! Nearest-vertex comparison of two topology graphs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TopoGraph;
use crate::raster::{Bounds, PixelCoord};

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 20.0;

/// Inclusive pixel rectangle `[x0, x1] x [y0, y1]` used to filter
/// candidate vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl Region {
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Self {
        Self { x0: x0.min(x1), y0: y0.min(y1), x1: x0.max(x1), y1: y0.max(y1) }
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        (self.x0..=self.x1).contains(&p.col) && (self.y0..=self.y1).contains(&p.row)
    }

    pub fn to_bounds(&self) -> Bounds {
        Bounds::from_corners(PixelCoord::new(self.x0, self.y0), PixelCoord::new(self.x1 + 1, self.y1 + 1))
    }
}

impl std::str::FromStr for Region {
    type Err = Error;

    /// Parses `x0,y0,x1,y1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<i32> = s
            .split(',')
            .map(|t| t.trim().parse::<i32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("region `{s}`: {e}")))?;
        match parts[..] {
            [x0, y0, x1, y1] => Ok(Region::new(x0, y0, x1, y1)),
            _ => Err(Error::InvalidArgument(format!("region `{s}` needs four comma-separated integers"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexDistance {
    pub id: u64,
    pub col: i32,
    pub row: i32,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexErrorReport {
    /// Mean nearest distance over non-outliers; `None` when nothing was counted.
    pub avg_dist: Option<f64>,
    pub outliers: usize,
    pub total: usize,
    /// Share of counted vertices within 1 px (inclusive), in percent.
    pub pct_within_1: Option<f64>,
    pub outlier_threshold: f64,
    pub region: Option<Region>,
    pub per_vertex: Vec<VertexDistance>,
}

/// Squared distance from `p` to the closest point of `reference`.
fn nearest_sq(p: PixelCoord, reference: &[PixelCoord]) -> i64 {
    reference
        .iter()
        .map(|q| {
            let (dc, dr) = (i64::from(p.col - q.col), i64::from(p.row - q.row));
            dc * dc + dr * dr
        })
        .min()
        .expect("non-empty reference")
}

/// For every candidate vertex (inside `region`, if given) finds the nearest
/// reference vertex. Distances above `outlier_threshold` count toward
/// `total` and `outliers` but not the average.
pub fn vertex_error(
    candidate: &TopoGraph,
    reference: &TopoGraph,
    outlier_threshold: f64,
    region: Option<Region>,
) -> Result<VertexErrorReport> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    if !(outlier_threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("outlier threshold {outlier_threshold} must be non-negative")));
    }
    let refs: Vec<PixelCoord> = reference.vertices().map(|v| v.pos).collect();
    let per_vertex: Vec<VertexDistance> = candidate
        .vertices()
        .filter(|v| region.is_none_or(|r| r.contains(v.pos)))
        .map(|v| VertexDistance {
            id: v.id.0,
            col: v.pos.col,
            row: v.pos.row,
            distance: (nearest_sq(v.pos, &refs) as f64).sqrt(),
        })
        .collect();
    let total = per_vertex.len();
    let inliers: Vec<f64> = per_vertex.iter().map(|d| d.distance).filter(|&d| d <= outlier_threshold).collect();
    let outliers = total - inliers.len();
    let within = per_vertex.iter().filter(|d| d.distance <= 1.0).count();
    let avg_dist = (!inliers.is_empty()).then(|| inliers.iter().sum::<f64>() / inliers.len() as f64);
    let pct_within_1 = (total > 0).then(|| 100.0 * within as f64 / total as f64);
    Ok(VertexErrorReport { avg_dist, outliers, total, pct_within_1, outlier_threshold, region, per_vertex })
}

impl VertexErrorReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Aligned summary table followed by the per-vertex rows.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.3}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>10}", "avg_dist", fmt(self.avg_dist));
        let _ = writeln!(out, "{:<12} {:>10}", "outliers", format!("{}/{}", self.outliers, self.total));
        let _ = writeln!(out, "{:<12} {:>10}", "pct_within_1", fmt(self.pct_within_1));
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>8} {:>6} {:>6} {:>10}", "vertex", "col", "row", "distance");
        for d in &self.per_vertex {
            let _ = writeln!(out, "{:>8} {:>6} {:>6} {:>10.3}", d.id, d.col, d.row, d.distance);
        }
        out
    }
}
