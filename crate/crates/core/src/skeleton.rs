//! Distance map to one-pixel-wide skeleton.
//!
//! The proximity field is high near obstacles, so the free-space medial
//! curves sit in its creases. A positive-part Laplacian picks those creases
//! out, a threshold binarizes them, and Guo-Hall thinning reduces the band
//! to single-pixel curves.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::distance_field::DistanceMap;
use crate::raster::{BinaryMap, Bounds, PixelCoord, Raster, SkeletonMap};

/// Clamped Laplacian response of the scaled distance map.
pub type RidgeMap = Raster<f32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Stencil {
    /// `[[0,1,0],[1,-4,1],[0,1,0]]`
    #[default]
    Four,
    /// `[[1,1,1],[1,-8,1],[1,1,1]]`
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonParams {
    pub scale: f64,
    pub threshold: f64,
    pub stencil: Stencil,
}

impl Default for SkeletonParams {
    fn default() -> Self {
        Self { scale: 255.0, threshold: 10.0, stencil: Stencil::Four }
    }
}

/// Positive part of the discrete Laplacian of `scale * dm`. Borders
/// replicate the nearest canvas pixel.
pub fn ridge_filter(dm: &DistanceMap, scale: f64, stencil: Stencil) -> RidgeMap {
    ridge_filter_region(dm, dm.bounds(), scale, stencil)
}

/// Same as [`ridge_filter`] restricted to `region`, reading neighbors from
/// the full map so the values agree with a whole-canvas evaluation.
pub fn ridge_filter_region(dm: &DistanceMap, region: Bounds, scale: f64, stencil: Stencil) -> RidgeMap {
    let Some(region) = dm.bounds().intersect(&region) else {
        return RidgeMap::new(Bounds::new(region.min, 0, 0));
    };
    let (w, h) = (dm.width() as i32, dm.height() as i32);
    let o = dm.origin();
    let data = dm.data();
    let at = |c: i32, r: i32| -> f64 {
        let c = c.clamp(0, w - 1);
        let r = r.clamp(0, h - 1);
        scale * f64::from(data[(r * w + c) as usize])
    };
    let mut out = RidgeMap::new(region);
    let ow = region.width;
    let out_data = out.data_mut();
    for rr in 0..region.height {
        let r = region.min.row - o.row + rr as i32;
        for cc in 0..ow {
            let c = region.min.col - o.col + cc as i32;
            let center = at(c, r);
            let lap = match stencil {
                Stencil::Four => at(c - 1, r) + at(c + 1, r) + at(c, r - 1) + at(c, r + 1) - 4.0 * center,
                Stencil::Eight => {
                    let mut s = 0.0;
                    for dr in -1..=1 {
                        for dc in -1..=1 {
                            if dc != 0 || dr != 0 {
                                s += at(c + dc, r + dr);
                            }
                        }
                    }
                    s - 8.0 * center
                }
            };
            out_data[rr * ow + cc] = lap.max(0.0) as f32;
        }
    }
    out
}

/// Strictly-greater threshold.
pub fn binarize(rm: &RidgeMap, threshold: f64) -> BinaryMap {
    rm.map(|&v| f64::from(v) > threshold)
}

// Neighborhood codes: bit 0 = E, then counter-clockwise NE, N, NW, W, SW, S, SE.
const E: u8 = 1 << 0;
const NE: u8 = 1 << 1;
const N: u8 = 1 << 2;
const NW: u8 = 1 << 3;
const W: u8 = 1 << 4;
const SW: u8 = 1 << 5;
const S: u8 = 1 << 6;
const SE: u8 = 1 << 7;

/// (bit, dc, dr) for each neighbor.
const CODE_OFFSETS: [(u8, i32, i32); 8] = [
    (E, 1, 0),
    (NE, 1, -1),
    (N, 0, -1),
    (NW, -1, -1),
    (W, -1, 0),
    (SW, -1, 1),
    (S, 0, 1),
    (SE, 1, 1),
];

const fn bit(code: u8, i: usize) -> bool {
    code >> (i % 8) & 1 == 1
}

/// Guo-Hall deletion tables for the two subiterations.
const fn guo_hall_luts() -> [[bool; 256]; 2] {
    let mut luts = [[false; 256]; 2];
    let mut n = 0;
    while n < 256 {
        let code = n as u8;
        // Number of 8-connected foreground runs around the pixel.
        let mut crossings = 0;
        let mut i = 0;
        while i < 8 {
            if !bit(code, i) && (bit(code, i + 1) || bit(code, i + 2)) {
                crossings += 1;
            }
            i += 2;
        }
        let mut n1 = 0;
        let mut n2 = 0;
        let mut k = 1;
        while k < 8 {
            if bit(code, k) || bit(code, k - 1) {
                n1 += 1;
            }
            if bit(code, k) || bit(code, k + 1) {
                n2 += 1;
            }
            k += 2;
        }
        let nmin = if n1 < n2 { n1 } else { n2 };
        if crossings == 1 && (nmin == 2 || nmin == 3) {
            let first = (bit(code, 1) || bit(code, 2) || !bit(code, 7)) && bit(code, 0);
            let second = (bit(code, 5) || bit(code, 6) || !bit(code, 3)) && bit(code, 4);
            luts[0][n] = !first;
            luts[1][n] = !second;
        }
        n += 1;
    }
    luts
}

const GUO_HALL: [[bool; 256]; 2] = guo_hall_luts();

/// Thins `bm` to one-pixel-wide curves: Guo-Hall until it converges, then
/// [`break_blocks`] for the full 2x2 blocks Guo-Hall can leave behind.
/// Pixels set in `protected` are never deleted.
pub fn thin(bm: &BinaryMap, protected: Option<&SkeletonMap>) -> SkeletonMap {
    let mut sk = guo_hall_thin(bm, protected);
    break_blocks(&mut sk, protected);
    sk
}

/// Plain Guo-Hall two-subiteration thinning until nothing changes. Pixels
/// set in `protected` are never deleted. The result is a subset of `bm`.
pub fn guo_hall_thin(bm: &BinaryMap, protected: Option<&SkeletonMap>) -> SkeletonMap {
    let (w, h) = (bm.width(), bm.height());
    if w == 0 || h == 0 {
        return bm.clone();
    }
    // One pixel of zero padding so every neighbor lookup is in range.
    let pw = w + 2;
    let mut img = vec![0u8; pw * (h + 2)];
    let mut keep = vec![false; pw * (h + 2)];
    let mut candidates = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let i = (r + 1) * pw + c + 1;
            if *bm.at(c, r) {
                img[i] = 1;
                candidates.push(i);
            }
        }
    }
    if let Some(p) = protected {
        for q in p.iter_set() {
            if let Some(li) = bm.index_of(q) {
                keep[(li / w + 1) * pw + li % w + 1] = true;
            }
        }
        candidates.retain(|&i| !keep[i]);
    }
    let offsets: Vec<(u8, isize)> = CODE_OFFSETS
        .iter()
        .map(|&(b, dc, dr)| (b, dr as isize * pw as isize + dc as isize))
        .collect();
    let code_at = |img: &[u8], i: usize| -> u8 {
        offsets.iter().fold(0u8, |acc, &(b, off)| {
            if img[(i as isize + off) as usize] != 0 {
                acc | b
            } else {
                acc
            }
        })
    };
    let mut doomed = Vec::new();
    loop {
        let mut changed = false;
        for lut in &GUO_HALL {
            doomed.clear();
            doomed.extend(candidates.iter().copied().filter(|&i| lut[code_at(&img, i) as usize]));
            for &i in &doomed {
                img[i] = 0;
            }
            if !doomed.is_empty() {
                changed = true;
                candidates.retain(|&i| img[i] != 0);
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = SkeletonMap::new(bm.bounds());
    let data = out.data_mut();
    for r in 0..h {
        for c in 0..w {
            data[r * w + c] = img[(r + 1) * pw + c + 1] != 0;
        }
    }
    out
}

/// 8-connectivity number of the neighborhood: 1 means deleting the center
/// changes neither the foreground components nor the holes around it.
fn is_simple(code: u8) -> bool {
    let off = |i: usize| !bit(code, i);
    let mut n = 0;
    for k in [0, 2, 4, 6] {
        n += i32::from(off(k)) - i32::from(off(k) && off(k + 1) && off(k + 2));
    }
    n == 1
}

fn in_full_block(sk: &SkeletonMap, p: PixelCoord) -> bool {
    [(-1, -1), (0, -1), (-1, 0), (0, 0)].iter().any(|&(dc, dr)| {
        let q = p.offset(dc, dr);
        sk.is_set(q) && sk.is_set(q.offset(1, 0)) && sk.is_set(q.offset(0, 1)) && sk.is_set(q.offset(1, 1))
    })
}

/// Neighbors form a single 8-connected group inside the window, so
/// deleting the center cannot split a component (it may open a 1-pixel hole).
fn keeps_neighbors_connected(code: u8) -> bool {
    if code == 0 {
        return false;
    }
    // Orthogonal ring cells link to both ring neighbors, corners only to
    // orthogonal ones, and two orthogonal cells also touch diagonally.
    let set = |i: usize| bit(code, i % 8);
    let mut seen = 0u8;
    let first = (0..8).find(|&i| set(i)).unwrap();
    let mut stack = vec![first];
    seen |= 1 << first;
    while let Some(i) = stack.pop() {
        let mut links = vec![(i + 1) % 8, (i + 7) % 8];
        if i % 2 == 0 {
            links.extend([(i + 2) % 8, (i + 6) % 8]);
        }
        for j in links {
            if set(j) && seen & (1 << j) == 0 {
                seen |= 1 << j;
                stack.push(j);
            }
        }
    }
    seen == code
}

fn is_interior(code: u8) -> bool {
    code & (E | N | W | S) == E | N | W | S
}

/// Removes the full 2x2 blocks Guo-Hall can leave. Simple points go first;
/// when a block has none, one pixel whose neighbors stay connected is
/// dropped, falling back to an interior pixel, and simple-point removal
/// resumes. Component count is kept; tiny loops may open or close.
/// Protected pixels stay.
pub fn break_blocks(sk: &mut SkeletonMap, protected: Option<&SkeletonMap>) {
    let blocked = |sk: &SkeletonMap| -> Vec<PixelCoord> {
        sk.iter_set()
            .filter(|&p| !protected.is_some_and(|m| m.is_set(p)) && in_full_block(sk, p))
            .collect()
    };
    loop {
        let mut changed = false;
        loop {
            let mut pass = false;
            for p in blocked(sk) {
                let code = neighborhood_code(sk, p);
                if in_full_block(sk, p) && !is_interior(code) && is_simple(code) {
                    sk.set(p, false);
                    pass = true;
                }
            }
            if !pass {
                break;
            }
            changed = true;
        }
        let candidates = blocked(sk);
        let fallback = candidates
            .iter()
            .copied()
            .find(|&p| {
                let code = neighborhood_code(sk, p);
                !is_interior(code) && keeps_neighbors_connected(code)
            })
            .or_else(|| candidates.iter().copied().find(|&p| is_interior(neighborhood_code(sk, p))));
        if let Some(p) = fallback {
            sk.set(p, false);
            changed = true;
        }
        if !changed {
            break;
        }
    }
}

/// True when the code describes a T crossing whose center can go: three of
/// the four orthogonal neighbors are set and the remaining set neighbors
/// stay 4-connected inside the 3x3 window without the center.
pub fn is_removable_t_cross(code: u8) -> bool {
    t_cross_lut()[code as usize]
}

fn t_cross_lut() -> &'static [bool; 256] {
    static LUT: OnceLock<[bool; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [false; 256];
        for (code, slot) in lut.iter_mut().enumerate() {
            let code = code as u8;
            let orthogonal = [E, N, W, S].iter().filter(|&&b| code & b != 0).count();
            if orthogonal != 3 {
                continue;
            }
            // Ring positions in cyclic order; orthogonal neighbors sit between
            // two corners, corners are 4-adjacent only to their two orthogonal
            // ring neighbors, so 4-connectivity without the center is plain
            // contiguity around the ring.
            let ring = [E, NE, N, NW, W, SW, S, SE];
            let set: Vec<bool> = ring.iter().map(|&b| code & b != 0).collect();
            let runs = (0..8).filter(|&i| set[i] && !set[(i + 7) % 8]).count();
            let all = set.iter().all(|&s| s);
            *slot = all || runs == 1;
        }
        lut
    })
}

fn neighborhood_code(sk: &SkeletonMap, p: PixelCoord) -> u8 {
    CODE_OFFSETS
        .iter()
        .fold(0u8, |acc, &(b, dc, dr)| if sk.is_set(p.offset(dc, dr)) { acc | b } else { acc })
}

/// Clears T-crossing centers (see [`is_removable_t_cross`]) in one
/// sequential row-major pass.
pub fn suppress_t_cross(sk: &SkeletonMap) -> SkeletonMap {
    suppress_t_cross_within(sk, None)
}

/// [`suppress_t_cross`] limited to pixels set in `within`.
pub fn suppress_t_cross_within(sk: &SkeletonMap, within: Option<&SkeletonMap>) -> SkeletonMap {
    let mut out = sk.clone();
    for p in sk.bounds().iter() {
        if within.is_some_and(|m| !m.is_set(p)) {
            continue;
        }
        if out.is_set(p) && is_removable_t_cross(neighborhood_code(&out, p)) {
            out.set(p, false);
        }
    }
    out
}

/// Full batch pipeline: ridge filter, binarize, thin, T-cross suppression.
pub fn skeletonize(dm: &DistanceMap, params: &SkeletonParams) -> SkeletonMap {
    let ridge = ridge_filter(dm, params.scale, params.stencil);
    let binary = binarize(&ridge, params.threshold);
    suppress_t_cross(&thin(&binary, None))
}

/// Parses a `#`/`.` picture into a bit raster anchored at (0,0). Test helper.
pub fn bitmap_from_ascii(text: &str) -> SkeletonMap {
    let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let h = rows.len();
    let w = rows.first().map_or(0, |r| r.len());
    let mut m = SkeletonMap::new(Bounds::new(PixelCoord::default(), w, h));
    for (r, line) in rows.iter().enumerate() {
        for (c, ch) in line.chars().enumerate() {
            if ch == '#' {
                m.set(PixelCoord::new(c as i32, r as i32), true);
            }
        }
    }
    m
}

/// Renders a bit raster as a `#`/`.` picture.
pub fn bitmap_to_ascii(m: &SkeletonMap) -> String {
    let mut s = String::new();
    for r in 0..m.height() {
        for c in 0..m.width() {
            s.push(if *m.at(c, r) { '#' } else { '.' });
        }
        s.push('\n');
    }
    s
}
