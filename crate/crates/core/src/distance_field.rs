//! Gaussian distance maps and their incremental max-merge.
//!
//! Every obstacle stamps a truncated Gaussian; a pixel keeps the largest
//! stamp it receives, so its value is a decreasing function of the distance
//! to the nearest obstacle. Merging frames is a pointwise max, which makes
//! the accumulated map independent of the order frames arrive in.

use crate::error::{Error, Result};
use crate::raster::{Bounds, DirtyMask, PixelCoord, Raster};

/// Peak-normalized Gaussian proximity field.
pub type DistanceMap = Raster<f32>;

/// Global canvases grow in multiples of this many pixels.
pub const CANVAS_TILE: i32 = 64;

/// Precomputed samples of `exp(-d^2 / 2 sigma^2)` on a disc of `radius` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: i32,
    samples: Vec<f32>,
}

impl GaussianKernel {
    /// Kernel with the default truncation radius `ceil(3.5 sigma)`.
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
        }
        Self::with_radius(sigma, (3.5 * sigma).ceil() as i32)
    }

    pub fn with_radius(sigma: f64, radius: i32) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be > 0, got {sigma}")));
        }
        let min_radius = (3.0 * sigma).ceil() as i32;
        if radius < min_radius {
            return Err(Error::InvalidArgument(format!(
                "kernel radius {radius} below ceil(3 sigma) = {min_radius}"
            )));
        }
        let side = (2 * radius + 1) as usize;
        let mut samples = Vec::with_capacity(side * side);
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                let d = f64::from(dc).hypot(f64::from(dr));
                samples.push(gaussian(sigma, radius, d) as f32);
            }
        }
        Ok(Self { sigma, radius, samples })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    /// Side length of the sample square.
    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// Continuous kernel value at distance `d` (zero beyond the radius).
    pub fn value(&self, d: f64) -> f64 {
        gaussian(self.sigma, self.radius, d)
    }

    /// Stored sample at an integer offset; zero outside the square.
    pub fn sample(&self, dc: i32, dr: i32) -> f32 {
        if dc.abs() > self.radius || dr.abs() > self.radius {
            return 0.0;
        }
        let side = self.side() as i32;
        self.samples[((dr + self.radius) * side + dc + self.radius) as usize]
    }

    /// Square footprint a single obstacle at `p` can influence.
    pub fn footprint(&self, p: PixelCoord) -> Bounds {
        Bounds::new(p.offset(-self.radius, -self.radius), self.side(), self.side())
    }
}

fn gaussian(sigma: f64, radius: i32, d: f64) -> f64 {
    if d > f64::from(radius) {
        0.0
    } else {
        (-(d * d) / (2.0 * sigma * sigma)).exp()
    }
}

/// Pointwise max of kernel stamps at every obstacle, evaluated on `bounds`.
/// Obstacles outside `bounds` still contribute where their stamps overlap it.
pub fn build_distance_map(obstacles: &[PixelCoord], bounds: Bounds, kernel: &GaussianKernel) -> DistanceMap {
    let mut map = DistanceMap::new(bounds);
    for &p in obstacles {
        stamp(&mut map, p, kernel);
    }
    map
}

fn stamp(map: &mut DistanceMap, p: PixelCoord, kernel: &GaussianKernel) {
    let Some(common) = map.bounds().intersect(&kernel.footprint(p)) else {
        return;
    };
    let side = kernel.side();
    let width = map.width();
    let origin = map.origin();
    let samples = kernel.samples();
    let data = map.data_mut();
    for r in 0..common.height as i32 {
        let row = common.min.row + r;
        let kr = (row - p.row + kernel.radius()) as usize;
        let kc0 = (common.min.col - p.col + kernel.radius()) as usize;
        let src = &samples[kr * side + kc0..kr * side + kc0 + common.width];
        let d0 = (row - origin.row) as usize * width + (common.min.col - origin.col) as usize;
        for (dst, &s) in data[d0..d0 + common.width].iter_mut().zip(src) {
            if s > *dst {
                *dst = s;
            }
        }
    }
}

/// Pure merge: `out(x) = max(global(x), local(x - offset))`, where local cell
/// `(c, r)` sits at global pixel `local.origin() + offset + (c, r)`. The
/// canvas grows (tile-aligned) to cover the local footprint. The mask flags
/// exactly the pixels whose value strictly increased.
pub fn merge_distance_maps(
    global: &DistanceMap,
    local: &DistanceMap,
    offset: PixelCoord,
) -> (DistanceMap, DirtyMask) {
    let mut out = global.clone();
    let mut mask = DirtyMask::new(global.bounds());
    merge_into(&mut out, local, offset, &mut mask);
    (out, mask)
}

/// In-place merge; `dirty` is grown alongside `global` and OR-accumulates
/// the increased pixels. Returns the number of pixels that increased.
pub fn merge_into(
    global: &mut DistanceMap,
    local: &DistanceMap,
    offset: PixelCoord,
    dirty: &mut DirtyMask,
) -> usize {
    let placed = local.bounds().translate(offset);
    if placed.is_empty() {
        return 0;
    }
    let target = global.bounds().grown_to_cover(&placed, CANVAS_TILE);
    if target != global.bounds() {
        global.grow(target, 0.0);
    }
    if dirty.bounds() != global.bounds() {
        dirty.grow(global.bounds(), false);
    }
    let gw = global.width();
    let go = global.origin();
    let lw = local.width();
    let mut changed = 0;
    let (gdata, ldata) = (global.data_mut(), local.data());
    let ddata = dirty.data_mut();
    for r in 0..placed.height {
        let grow = (placed.min.row + r as i32 - go.row) as usize;
        let gc0 = (placed.min.col - go.col) as usize;
        let g0 = grow * gw + gc0;
        let lrow = &ldata[r * lw..(r + 1) * lw];
        for (c, &v) in lrow.iter().enumerate() {
            if v > gdata[g0 + c] {
                gdata[g0 + c] = v;
                if !ddata[g0 + c] {
                    ddata[g0 + c] = true;
                }
                changed += 1;
            }
        }
    }
    changed
}

/// Value at a global pixel, zero off-canvas.
pub fn value_at(map: &DistanceMap, p: PixelCoord) -> f32 {
    map.get(p).copied().unwrap_or(0.0)
}
