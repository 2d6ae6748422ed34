//! Occupancy grids, poses, scan frames and their projection into pixels.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, GrayImage, ImageReader, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Bounds, PixelCoord, Raster};

/// Gray level below which a pixel is occupied.
pub const DEFAULT_OCCUPIED_BELOW: u8 = 100;
/// Gray level above which a pixel is free.
pub const DEFAULT_FREE_ABOVE: u8 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Cell {
    #[default]
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    pub fn from_gray(gray: u8, occupied_below: u8, free_above: u8) -> Cell {
        if gray < occupied_below {
            Cell::Occupied
        } else if gray > free_above {
            Cell::Free
        } else {
            Cell::Unknown
        }
    }

    /// Canonical gray level used when writing grids back to disk.
    pub fn to_gray(self) -> u8 {
        match self {
            Cell::Free => 255,
            Cell::Occupied => 0,
            Cell::Unknown => 128,
        }
    }
}

/// World position of pixel (0,0)'s corner.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Maps world coordinates onto pixels: pixel (c, r) covers
/// `[origin.x + c*res, origin.x + (c+1)*res) x [origin.y + r*res, ...)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub resolution: f64,
    pub origin: WorldPoint,
}

impl Default for GridFrame {
    fn default() -> Self {
        Self { resolution: 1.0, origin: WorldPoint::default() }
    }
}

impl GridFrame {
    pub fn new(resolution: f64, origin: WorldPoint) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidArgument(format!("resolution must be > 0, got {resolution}")));
        }
        Ok(Self { resolution, origin })
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> PixelCoord {
        // The epsilon absorbs representation error such as cos(pi/2) != 0.
        const EPS: f64 = 1e-9;
        let c = ((x - self.origin.x) / self.resolution + EPS).floor();
        let r = ((y - self.origin.y) / self.resolution + EPS).floor();
        PixelCoord::new(c as i32, r as i32)
    }

    /// Center of a pixel in world coordinates.
    pub fn pixel_center(&self, p: PixelCoord) -> (f64, f64) {
        (
            self.origin.x + (f64::from(p.col) + 0.5) * self.resolution,
            self.origin.y + (f64::from(p.row) + 0.5) * self.resolution,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    cells: Raster<Cell>,
    frame: GridFrame,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, frame: GridFrame) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("grid dimensions must be positive".into()));
        }
        GridFrame::new(frame.resolution, frame.origin)?;
        Ok(Self {
            cells: Raster::new(Bounds::new(PixelCoord::default(), width, height)),
            frame,
        })
    }

    pub fn from_cells(width: usize, height: usize, cells: Vec<Cell>, frame: GridFrame) -> Result<Self> {
        let mut g = Self::new(width, height, frame)?;
        if cells.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        g.cells.data_mut().copy_from_slice(&cells);
        Ok(g)
    }

    pub fn width(&self) -> usize {
        self.cells.width()
    }

    pub fn height(&self) -> usize {
        self.cells.height()
    }

    pub fn frame(&self) -> GridFrame {
        self.frame
    }

    pub fn resolution(&self) -> f64 {
        self.frame.resolution
    }

    pub fn origin(&self) -> WorldPoint {
        self.frame.origin
    }

    pub fn bounds(&self) -> Bounds {
        self.cells.bounds()
    }

    pub fn cells(&self) -> &[Cell] {
        self.cells.data()
    }

    /// Cell at `p`; anything outside the grid reads as free.
    pub fn cell(&self, p: PixelCoord) -> Cell {
        self.cells.get(p).copied().unwrap_or(Cell::Free)
    }

    pub fn set(&mut self, p: PixelCoord, cell: Cell) {
        self.cells.set(p, cell);
    }

    /// Fills an inclusive pixel rectangle, clipped to the grid.
    pub fn fill_rect(&mut self, c0: i32, r0: i32, c1: i32, r1: i32, cell: Cell) {
        for r in r0.min(r1)..=r0.max(r1) {
            for c in c0.min(c1)..=c0.max(c1) {
                self.cells.set(PixelCoord::new(c, r), cell);
            }
        }
    }

    /// Occupied pixels in row-major order.
    pub fn obstacles(&self) -> Vec<PixelCoord> {
        self.cells
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == Cell::Occupied)
            .map(|(i, _)| self.cells.coord_of(i))
            .collect()
    }

    pub fn is_occupied_at(&self, x: f64, y: f64) -> bool {
        self.cell(self.frame.world_to_pixel(x, y)) == Cell::Occupied
    }
}

/// Wraps an angle into [-pi, pi).
pub fn normalize_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }
}

/// One range scan and the pose it was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame {
    pub frame_id: u64,
    pub pose: Pose2D,
    pub angle_min: f64,
    pub angle_increment: f64,
    pub range_max: f64,
    /// One per beam; anything above `range_max` (including infinity) is "no return".
    pub ranges: Vec<f64>,
}

impl ScanFrame {
    pub fn validate(&self) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(Error::InvalidArgument(format!("frame {} has no beams", self.frame_id)));
        }
        if let Some(bad) = self.ranges.iter().find(|r| r.is_nan() || (r.is_finite() && **r < 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "frame {} has invalid range {bad}",
                self.frame_id
            )));
        }
        if !(self.range_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frame {} has non-positive range_max",
                self.frame_id
            )));
        }
        Ok(())
    }

    pub fn is_return(&self, range: f64) -> bool {
        range.is_finite() && range <= self.range_max
    }

    /// World coordinates of every returned beam endpoint.
    pub fn hit_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ranges.iter().enumerate().filter(|(_, &r)| self.is_return(r)).map(move |(i, &r)| {
            let a = self.pose.theta + self.angle_min + i as f64 * self.angle_increment;
            (self.pose.x + r * a.cos(), self.pose.y + r * a.sin())
        })
    }
}

/// Pixels hit by the frame's returned beams, deduplicated, row-major.
pub fn scan_to_obstacles(frame: &ScanFrame, grid: &GridFrame) -> Vec<PixelCoord> {
    let mut out: Vec<PixelCoord> =
        frame.hit_points().map(|(x, y)| grid.world_to_pixel(x, y)).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Sidecar metadata path for a map image: `map.pgm` -> `map.meta`.
pub fn metadata_path(map_path: &Path) -> PathBuf {
    map_path.with_extension("meta")
}

/// Parses `key: value`, `key = value` or `key value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(':')
            .or_else(|| line.split_once('='))
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| Error::parse(path, i + 1, format!("expected `key: value`, got `{line}`")))?;
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn read_metadata(path: &Path) -> Result<GridFrame> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut frame = GridFrame::default();
    for (key, value, line) in parse_key_values(&text, path)? {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("`{key}` is not a number: `{value}`")))
        };
        match key.as_str() {
            "resolution" => frame.resolution = num()?,
            "origin_x" => frame.origin.x = num()?,
            "origin_y" => frame.origin.y = num()?,
            other => return Err(Error::parse(path, line, format!("unknown key `{other}`"))),
        }
    }
    if !(frame.resolution > 0.0) {
        return Err(Error::parse(path, 0, "resolution must be > 0"));
    }
    Ok(frame)
}

/// Loads a PGM (P2/P5) or 8-bit grayscale PNG and classifies each pixel.
/// Resolution and origin come from a `.meta` sidecar when present.
pub fn load_grid(path: &Path, occupied_below: u8, free_above: u8) -> Result<OccupancyGrid> {
    if occupied_below >= free_above {
        return Err(Error::InvalidArgument(format!(
            "occupied_below ({occupied_below}) must be < free_above ({free_above})"
        )));
    }
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })?;
    if img.color() != ColorType::L8 {
        return Err(Error::NotGrayscale {
            path: path.to_path_buf(),
            found: format!("{:?}", img.color()),
        });
    }
    let gray = img.into_luma8();
    let meta = metadata_path(path);
    let frame = if meta.exists() { read_metadata(&meta)? } else { GridFrame::default() };
    let cells = gray
        .pixels()
        .map(|p| Cell::from_gray(p.0[0], occupied_below, free_above))
        .collect();
    OccupancyGrid::from_cells(gray.width() as usize, gray.height() as usize, cells, frame)
}

/// Writes the grid as a canonical gray image (format from the extension,
/// PGM unless `.png`) plus its `.meta` sidecar.
pub fn save_grid(grid: &OccupancyGrid, path: &Path) -> Result<()> {
    let mut img = GrayImage::new(grid.width() as u32, grid.height() as u32);
    for (i, cell) in grid.cells().iter().enumerate() {
        let (x, y) = ((i % grid.width()) as u32, (i / grid.width()) as u32);
        img.put_pixel(x, y, Luma([cell.to_gray()]));
    }
    let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let format = if is_png { image::ImageFormat::Png } else { image::ImageFormat::Pnm };
    img.save_with_format(path, format)
        .map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })?;
    let f = grid.frame();
    let meta = format!(
        "resolution: {}\norigin_x: {}\norigin_y: {}\n",
        f.resolution, f.origin.x, f.origin.y
    );
    let meta_path = metadata_path(path);
    fs::write(&meta_path, meta).map_err(|e| Error::io(meta_path, e))
}
