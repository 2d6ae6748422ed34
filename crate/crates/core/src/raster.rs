//! Dense rasters anchored in a global pixel frame.
//!
//! Every raster carries the global pixel coordinate of its cell (0,0), so
//! local maps, the growing global canvas and the dirty masks can all be
//! addressed with the same [`PixelCoord`] values.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Integer pixel position in the global frame. May be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PixelCoord {
    pub col: i32,
    pub row: i32,
}

impl PixelCoord {
    pub const fn new(col: i32, row: i32) -> Self {
        Self { col, row }
    }

    pub fn offset(self, dc: i32, dr: i32) -> Self {
        Self::new(self.col + dc, self.row + dr)
    }

    pub fn distance(self, other: PixelCoord) -> f64 {
        let dc = f64::from(self.col - other.col);
        let dr = f64::from(self.row - other.row);
        dc.hypot(dr)
    }

    /// True when the two pixels touch in the 8-neighborhood (and differ).
    pub fn is_neighbor8(self, other: PixelCoord) -> bool {
        self != other && (self.col - other.col).abs() <= 1 && (self.row - other.row).abs() <= 1
    }

    /// Step length between two 8-neighbors: 1 orthogonal, sqrt(2) diagonal.
    pub fn step_length(self, other: PixelCoord) -> f64 {
        if self.col != other.col && self.row != other.row {
            std::f64::consts::SQRT_2
        } else {
            1.0
        }
    }
}

/// Row-major order: rows first, then columns.
impl Ord for PixelCoord {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.row, self.col).cmp(&(other.row, other.col))
    }
}

impl PartialOrd for PixelCoord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The 8 neighbor offsets in clockwise order starting north.
pub const NEIGHBORS8: [(i32, i32); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Axis-aligned pixel rectangle, `min` inclusive, `width`/`height` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Bounds {
    pub min: PixelCoord,
    pub width: usize,
    pub height: usize,
}

impl Bounds {
    pub fn new(min: PixelCoord, width: usize, height: usize) -> Self {
        Self { min, width, height }
    }

    /// Rectangle spanning `min` (inclusive) to `max` (exclusive). Empty when
    /// `max` does not exceed `min` on both axes.
    pub fn from_corners(min: PixelCoord, max: PixelCoord) -> Self {
        let width = (max.col - min.col).max(0) as usize;
        let height = (max.row - min.row).max(0) as usize;
        Self { min, width, height }
    }

    /// Smallest rectangle containing every point; `None` for no points.
    pub fn enclosing<I: IntoIterator<Item = PixelCoord>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let (mut lo, mut hi) = (first, first);
        for p in it {
            lo.col = lo.col.min(p.col);
            lo.row = lo.row.min(p.row);
            hi.col = hi.col.max(p.col);
            hi.row = hi.row.max(p.row);
        }
        Some(Self::from_corners(lo, hi.offset(1, 1)))
    }

    /// Exclusive upper corner.
    pub fn max(&self) -> PixelCoord {
        self.min.offset(self.width as i32, self.height as i32)
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        let max = self.max();
        p.col >= self.min.col && p.row >= self.min.row && p.col < max.col && p.row < max.row
    }

    pub fn contains_bounds(&self, other: &Bounds) -> bool {
        other.is_empty()
            || (!self.is_empty() && self.contains(other.min) && {
                let m = other.max();
                let s = self.max();
                m.col <= s.col && m.row <= s.row
            })
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        let (a, b) = (self.max(), other.max());
        Bounds::from_corners(
            PixelCoord::new(self.min.col.min(other.min.col), self.min.row.min(other.min.row)),
            PixelCoord::new(a.col.max(b.col), a.row.max(b.row)),
        )
    }

    pub fn intersect(&self, other: &Bounds) -> Option<Bounds> {
        let (a, b) = (self.max(), other.max());
        let r = Bounds::from_corners(
            PixelCoord::new(self.min.col.max(other.min.col), self.min.row.max(other.min.row)),
            PixelCoord::new(a.col.min(b.col), a.row.min(b.row)),
        );
        (!r.is_empty()).then_some(r)
    }

    /// Grow by `margin` pixels on every side.
    pub fn dilate(&self, margin: i32) -> Bounds {
        Bounds::from_corners(
            self.min.offset(-margin, -margin),
            self.max().offset(margin, margin),
        )
    }

    pub fn translate(&self, by: PixelCoord) -> Bounds {
        Bounds::new(self.min.offset(by.col, by.row), self.width, self.height)
    }

    /// All pixels in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = PixelCoord> + '_ {
        let min = self.min;
        let w = self.width;
        (0..self.height)
            .flat_map(move |r| (0..w).map(move |c| min.offset(c as i32, r as i32)))
    }

    /// Smallest tile-aligned rectangle that contains both `self` and `need`.
    /// Sides of `self` that already cover `need` are left untouched.
    pub fn grown_to_cover(&self, need: &Bounds, tile: i32) -> Bounds {
        if need.is_empty() || self.contains_bounds(need) {
            return *self;
        }
        let floor_tile = |v: i32| v.div_euclid(tile) * tile;
        let ceil_tile = |v: i32| -(-v).div_euclid(tile) * tile;
        if self.is_empty() {
            let max = need.max();
            return Bounds::from_corners(
                PixelCoord::new(floor_tile(need.min.col), floor_tile(need.min.row)),
                PixelCoord::new(ceil_tile(max.col), ceil_tile(max.row)),
            );
        }
        let (mut lo, mut hi) = (self.min, self.max());
        let (nlo, nhi) = (need.min, need.max());
        if nlo.col < lo.col {
            lo.col = floor_tile(nlo.col);
        }
        if nlo.row < lo.row {
            lo.row = floor_tile(nlo.row);
        }
        if nhi.col > hi.col {
            hi.col = ceil_tile(nhi.col);
        }
        if nhi.row > hi.row {
            hi.row = ceil_tile(nhi.row);
        }
        Bounds::from_corners(lo, hi)
    }
}

/// A dense row-major raster positioned at `bounds.min` in global pixels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Raster<T> {
    bounds: Bounds,
    data: Vec<T>,
}

/// Per-pixel change flags co-extensive with the raster they annotate.
pub type DirtyMask = Raster<bool>;
/// Thresholded ridge response.
pub type BinaryMap = Raster<bool>;
/// One-pixel-wide medial curves.
pub type SkeletonMap = Raster<bool>;

impl<T: Clone + Default> Raster<T> {
    pub fn new(bounds: Bounds) -> Self {
        Self::filled(bounds, T::default())
    }
}

impl<T: Clone> Raster<T> {
    pub fn filled(bounds: Bounds, value: T) -> Self {
        Self { data: vec![value; bounds.area()], bounds }
    }

    pub fn from_vec(bounds: Bounds, data: Vec<T>) -> Option<Self> {
        (data.len() == bounds.area()).then_some(Self { bounds, data })
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn origin(&self) -> PixelCoord {
        self.bounds.min
    }

    pub fn width(&self) -> usize {
        self.bounds.width
    }

    pub fn height(&self) -> usize {
        self.bounds.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Linear index of a global pixel, if inside.
    #[inline]
    pub fn index_of(&self, p: PixelCoord) -> Option<usize> {
        let c = p.col - self.bounds.min.col;
        let r = p.row - self.bounds.min.row;
        if c < 0 || r < 0 || c as usize >= self.bounds.width || r as usize >= self.bounds.height {
            None
        } else {
            Some(r as usize * self.bounds.width + c as usize)
        }
    }

    #[inline]
    pub fn coord_of(&self, index: usize) -> PixelCoord {
        let w = self.bounds.width;
        self.bounds.min.offset((index % w) as i32, (index / w) as i32)
    }

    pub fn get(&self, p: PixelCoord) -> Option<&T> {
        self.index_of(p).map(|i| &self.data[i])
    }

    pub fn get_mut(&mut self, p: PixelCoord) -> Option<&mut T> {
        self.index_of(p).map(move |i| &mut self.data[i])
    }

    /// Writes `value` at `p`; returns false when `p` is outside.
    pub fn set(&mut self, p: PixelCoord, value: T) -> bool {
        match self.index_of(p) {
            Some(i) => {
                self.data[i] = value;
                true
            }
            None => false,
        }
    }

    /// Cell at local (column, row) offsets from the raster origin.
    #[inline]
    pub fn at(&self, c: usize, r: usize) -> &T {
        &self.data[r * self.bounds.width + c]
    }

    /// Copy of `region`; cells outside this raster take `fill`.
    pub fn crop(&self, region: Bounds, fill: T) -> Raster<T> {
        let mut out = Raster::filled(region, fill);
        if let Some(common) = self.bounds.intersect(&region) {
            for r in 0..common.height {
                let src_row = common.min.row + r as i32;
                let src = self.index_of(PixelCoord::new(common.min.col, src_row)).unwrap();
                let dst = out.index_of(PixelCoord::new(common.min.col, src_row)).unwrap();
                out.data[dst..dst + common.width]
                    .clone_from_slice(&self.data[src..src + common.width]);
            }
        }
        out
    }

    /// Re-anchors onto `bounds` (which must contain the current bounds),
    /// filling new cells with `fill`.
    pub fn grow(&mut self, bounds: Bounds, fill: T) {
        if bounds == self.bounds {
            return;
        }
        debug_assert!(bounds.contains_bounds(&self.bounds));
        *self = self.crop(bounds, fill);
    }

    /// Copies every cell of `src` that lies inside this raster.
    pub fn paste(&mut self, src: &Raster<T>) {
        if let Some(common) = self.bounds.intersect(&src.bounds) {
            for r in 0..common.height {
                let row = common.min.row + r as i32;
                let s = src.index_of(PixelCoord::new(common.min.col, row)).unwrap();
                let d = self.index_of(PixelCoord::new(common.min.col, row)).unwrap();
                self.data[d..d + common.width].clone_from_slice(&src.data[s..s + common.width]);
            }
        }
    }

    pub fn map<U: Clone, F: Fn(&T) -> U>(&self, f: F) -> Raster<U> {
        Raster { bounds: self.bounds, data: self.data.iter().map(f).collect() }
    }
}

impl Raster<bool> {
    /// Value at `p`, false outside.
    #[inline]
    pub fn is_set(&self, p: PixelCoord) -> bool {
        self.index_of(p).is_some_and(|i| self.data[i])
    }

    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|b| *b = false);
    }

    /// Set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = PixelCoord> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.coord_of(i))
    }

    /// Bounding box of the set pixels.
    pub fn set_bounds(&self) -> Option<Bounds> {
        Bounds::enclosing(self.iter_set())
    }

    /// OR-accumulates `other` wherever it overlaps.
    pub fn union_with(&mut self, other: &Raster<bool>) {
        if let Some(common) = self.bounds.intersect(&other.bounds) {
            for p in common.iter() {
                if other.is_set(p) {
                    self.set(p, true);
                }
            }
        }
    }

    /// Chebyshev dilation by `radius` pixels, clipped to the raster.
    pub fn dilate(&self, radius: i32) -> Raster<bool> {
        if radius <= 0 {
            return self.clone();
        }
        let (w, h) = (self.width() as i32, self.height() as i32);
        // Separable: horizontal pass then vertical pass.
        let mut horiz = vec![false; self.data.len()];
        for r in 0..h {
            let row = &self.data[(r * w) as usize..((r + 1) * w) as usize];
            let mut last_set = i32::MIN / 2;
            let mut next_set = vec![i32::MAX / 2; w as usize];
            let mut nxt = i32::MAX / 2;
            for c in (0..w).rev() {
                if row[c as usize] {
                    nxt = c;
                }
                next_set[c as usize] = nxt;
            }
            for c in 0..w {
                if row[c as usize] {
                    last_set = c;
                }
                horiz[(r * w + c) as usize] =
                    c - last_set <= radius || next_set[c as usize] - c <= radius;
            }
        }
        let mut out = vec![false; self.data.len()];
        for c in 0..w {
            let mut last_set = i32::MIN / 2;
            let mut next_set = vec![i32::MAX / 2; h as usize];
            let mut nxt = i32::MAX / 2;
            for r in (0..h).rev() {
                if horiz[(r * w + c) as usize] {
                    nxt = r;
                }
                next_set[r as usize] = nxt;
            }
            for r in 0..h {
                if horiz[(r * w + c) as usize] {
                    last_set = r;
                }
                out[(r * w + c) as usize] =
                    r - last_set <= radius || next_set[r as usize] - r <= radius;
            }
        }
        Raster { bounds: self.bounds, data: out }
    }

    /// Number of 8-connected components of set pixels.
    pub fn component_count8(&self) -> usize {
        self.components8().1
    }

    /// Labels every set pixel with its 8-connected component (1-based,
    /// 0 = background), discovered in row-major order.
    pub fn components8(&self) -> (Raster<u32>, usize) {
        let mut labels: Raster<u32> = Raster::new(self.bounds);
        let mut count = 0u32;
        let mut queue = VecDeque::new();
        for start in 0..self.data.len() {
            if !self.data[start] || labels.data[start] != 0 {
                continue;
            }
            count += 1;
            labels.data[start] = count;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                let p = self.coord_of(i);
                for (dc, dr) in NEIGHBORS8 {
                    if let Some(j) = self.index_of(p.offset(dc, dr)) {
                        if self.data[j] && labels.data[j] == 0 {
                            labels.data[j] = count;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        (labels, count as usize)
    }

    /// True when some 2x2 window has all four pixels set.
    pub fn has_full_2x2(&self) -> bool {
        let (w, h) = (self.width(), self.height());
        (0..h.saturating_sub(1)).any(|r| {
            (0..w.saturating_sub(1)).any(|c| {
                *self.at(c, r) && *self.at(c + 1, r) && *self.at(c, r + 1) && *self.at(c + 1, r + 1)
            })
        })
    }
}
