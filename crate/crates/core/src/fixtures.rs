//! Synthetic maps and trajectories used by tests, examples and the CLI.

use crate::error::Result;
use crate::map_model::{Cell, GridFrame, OccupancyGrid, Pose2D, WorldPoint};
use crate::metrics::Region;
use crate::raster::PixelCoord;
use crate::sim::Trajectory;

/// Axis-aligned rectangle in meters, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

const fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
    Rect { x0, y0, x1, y1 }
}

/// Margin between the grid edge and the house walls, meters.
const MARGIN: f64 = 1.0;
const WALL: f64 = 0.2;
pub const HOUSE_WIDTH: f64 = 24.0;
pub const HOUSE_HEIGHT: f64 = 13.0;
/// Resolution the house fixture is designed for.
pub const HOUSE_RESOLUTION: f64 = 0.2;

/// A horizontal wall from `x0` to `x1` at `y`, with door gaps `(center, width)`.
fn hwall(y: f64, x0: f64, x1: f64, doors: &[(f64, f64)]) -> Vec<Rect> {
    wall_pieces(x0, x1, doors).into_iter().map(|(a, b)| rect(a, y, b, y + WALL)).collect()
}

fn vwall(x: f64, y0: f64, y1: f64, doors: &[(f64, f64)]) -> Vec<Rect> {
    wall_pieces(y0, y1, doors).into_iter().map(|(a, b)| rect(x, a, x + WALL, b)).collect()
}

fn wall_pieces(from: f64, to: f64, doors: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = from;
    for &(c, w) in doors {
        out.push((start, c - w / 2.0));
        start = c + w / 2.0;
    }
    out.push((start, to));
    out
}

/// Walls of the house in house-local meters: five rooms above a corridor,
/// four below, one interior door on each side and a pillar in one room.
pub fn house_walls() -> Vec<Rect> {
    let (w, h) = (HOUSE_WIDTH, HOUSE_HEIGHT);
    let top_doors: Vec<(f64, f64)> = [2.4, 7.2, 12.0, 16.8, 21.6].iter().map(|&c| (c, 1.0)).collect();
    let bottom_doors: Vec<(f64, f64)> = [3.0, 9.0, 15.0, 21.0].iter().map(|&c| (c, 1.0)).collect();
    let mut walls = Vec::new();
    walls.extend(hwall(0.0, 0.0, w, &[]));
    walls.extend(hwall(h - WALL, 0.0, w, &[]));
    walls.extend(vwall(0.0, 0.0, h, &[]));
    walls.extend(vwall(w - WALL, 0.0, h, &[]));
    walls.extend(hwall(6.0, 0.0, w, &top_doors));
    walls.extend(hwall(8.0, 0.0, w, &bottom_doors));
    for x in [4.8, 9.6, 14.4, 19.2] {
        let doors: &[(f64, f64)] = if x == 4.8 { &[(3.0, 1.0)] } else { &[] };
        walls.extend(vwall(x, 0.0, 6.2, doors));
    }
    for x in [6.0, 12.0, 18.0] {
        let doors: &[(f64, f64)] = if x == 18.0 { &[(10.5, 1.0)] } else { &[] };
        walls.extend(vwall(x, 8.0, h, doors));
    }
    walls.push(rect(8.8, 10.3, 9.2, 10.7));
    walls
}

/// Rasterizes rectangles (house-local meters) into a grid with `MARGIN`
/// of free space around the house; a cell is occupied when its center lies
/// in a rectangle.
fn rasterize(walls: &[Rect], width_m: f64, height_m: f64, resolution: f64) -> Result<OccupancyGrid> {
    let frame = GridFrame::new(resolution, WorldPoint { x: 0.0, y: 0.0 })?;
    let cols = ((width_m + 2.0 * MARGIN) / resolution).round() as usize;
    let rows = ((height_m + 2.0 * MARGIN) / resolution).round() as usize;
    let mut grid = OccupancyGrid::new(cols, rows, frame)?;
    for r in &walls.iter().map(|w| rect(w.x0 + MARGIN, w.y0 + MARGIN, w.x1 + MARGIN, w.y1 + MARGIN)).collect::<Vec<_>>() {
        let c0 = ((r.x0 / resolution).floor() as i32).max(0);
        let c1 = ((r.x1 / resolution).ceil() as i32).min(cols as i32 - 1);
        let r0 = ((r.y0 / resolution).floor() as i32).max(0);
        let r1 = ((r.y1 / resolution).ceil() as i32).min(rows as i32 - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let p = PixelCoord::new(col, row);
                let (x, y) = frame.pixel_center(p);
                if x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1 {
                    grid.set(p, Cell::Occupied);
                }
            }
        }
    }
    Ok(grid)
}

/// The house at `resolution` meters per pixel, world origin at the grid corner.
pub fn house_grid(resolution: f64) -> Result<OccupancyGrid> {
    rasterize(&house_walls(), HOUSE_WIDTH, HOUSE_HEIGHT, resolution)
}

/// Pixel rectangle of the house interior (inside the outer walls).
pub fn house_interior(resolution: f64) -> Region {
    let px = |m: f64| ((m + MARGIN) / resolution).round() as i32;
    Region::new(px(WALL), px(WALL), px(HOUSE_WIDTH - WALL) - 1, px(HOUSE_HEIGHT - WALL) - 1)
}

/// Drive along the corridor, into and out of every room (circling the
/// pillar), and back to the start; about 120 m.
pub fn house_trajectory(step: f64) -> Result<Trajectory> {
    let cy = 7.1;
    let mut pts: Vec<(f64, f64)> = vec![(1.0, cy)];
    let visits: [(f64, char); 9] = [
        (2.4, 'T'),
        (3.0, 'B'),
        (7.2, 'T'),
        (9.0, 'P'),
        (12.0, 'T'),
        (15.0, 'B'),
        (16.8, 'T'),
        (21.0, 'B'),
        (21.6, 'T'),
    ];
    for (x, kind) in visits {
        pts.push((x, cy));
        match kind {
            'T' => pts.push((x, 3.0)),
            'B' => pts.push((x, 10.9)),
            _ => pts.extend([(x, 9.6), (10.4, 9.6), (10.4, 11.6), (7.6, 11.6), (7.6, 9.6), (x, 9.6)]),
        }
        pts.push((x, cy));
    }
    pts.push((23.0, cy));
    pts.push((1.0, cy));
    let waypoints = pts.into_iter().map(|(x, y)| Pose2D::new(x + MARGIN, y + MARGIN, 0.0)).collect();
    Trajectory::new(waypoints, step)
}

/// Straight horizontal corridor: `free_width` free rows between two walls
/// spanning the full `length`.
pub fn corridor_grid(free_width: usize, length: usize) -> Result<OccupancyGrid> {
    let mut grid = OccupancyGrid::new(length, free_width + 2, GridFrame::default())?;
    let last = free_width as i32 + 1;
    grid.fill_rect(0, 0, length as i32 - 1, 0, Cell::Occupied);
    grid.fill_rect(0, last, length as i32 - 1, last, Cell::Occupied);
    Ok(grid)
}

/// Two corridors crossing at right angles inside a solid block.
pub fn plus_grid(free_width: usize, arm: usize) -> Result<OccupancyGrid> {
    let side = 2 * arm + free_width;
    let mut grid = OccupancyGrid::new(side, side, GridFrame::default())?;
    let (lo, hi) = (arm as i32, (arm + free_width) as i32 - 1);
    for p in grid.bounds().iter().collect::<Vec<_>>() {
        let in_h = (lo..=hi).contains(&p.row);
        let in_v = (lo..=hi).contains(&p.col);
        if !in_h && !in_v {
            grid.set(p, Cell::Occupied);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn house_trajectory_stays_in_free_space() {
        let grid = house_grid(HOUSE_RESOLUTION).unwrap();
        let t = house_trajectory(0.1).unwrap();
        let poses = t.poses();
        assert!(poses.len() >= 1000, "{}", poses.len());
        for p in &poses {
            assert!(!grid.is_occupied_at(p.x, p.y), "{p:?}");
        }
    }

    #[test]
    fn house_walls_are_one_pixel_at_design_resolution() {
        let grid = house_grid(HOUSE_RESOLUTION).unwrap();
        assert_eq!((grid.width(), grid.height()), (130, 75));
        // Outer left wall: one column at x = 1.0..1.2 m.
        assert_eq!(grid.cell(PixelCoord::new(5, 30)), Cell::Occupied);
        assert_eq!(grid.cell(PixelCoord::new(4, 30)), Cell::Free);
        assert_eq!(grid.cell(PixelCoord::new(6, 30)), Cell::Free);
        let region = house_interior(HOUSE_RESOLUTION);
        assert_eq!((region.x0, region.y0), (6, 6));
    }

    #[test]
    fn corridor_shape() {
        let g = corridor_grid(5, 20).unwrap();
        assert_eq!((g.width(), g.height()), (20, 7));
        assert_eq!(g.obstacles().len(), 40);
    }

    #[test]
    fn plus_shape() {
        let g = plus_grid(3, 5).unwrap();
        assert_eq!(g.width(), 13);
        assert_eq!(g.obstacles().len(), 4 * 25);
    }
}
