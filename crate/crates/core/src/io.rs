//! Raster serialization, PNG renders and engine checkpoints.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use image::{ImageReader, Rgb, RgbImage};

use crate::distance_field::DistanceMap;
use crate::error::{Error, Result};
use crate::graph::TopoGraph;
use crate::map_model::parse_key_values;
use crate::raster::{Bounds, PixelCoord, Raster, SkeletonMap};

const DM_MAGIC: &str = "TOPODM1";

fn image_err(path: &Path, e: impl ToString) -> Error {
    Error::Image { path: path.to_path_buf(), message: e.to_string() }
}

/// Binary PBM (P4); set pixels are black.
pub fn encode_pbm(map: &Raster<bool>) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let stride = w.div_ceil(8);
    for r in 0..h {
        let mut row = vec![0u8; stride];
        for c in 0..w {
            if *map.at(c, r) {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

pub fn write_pbm(map: &Raster<bool>, path: &Path) -> Result<()> {
    fs::write(path, encode_pbm(map)).map_err(|e| Error::io(path, e))
}

/// Reads any PBM/PGM; dark pixels (< 128) become set. The raster is placed
/// at `origin`.
pub fn read_pbm(path: &Path, origin: PixelCoord) -> Result<Raster<bool>> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?
        .into_luma8();
    let bounds = Bounds::new(origin, img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0[0] < 128).collect();
    Ok(Raster::from_vec(bounds, data).expect("decoded size matches"))
}

/// Text header (magic, dims, canvas origin, sigma) followed by row-major
/// little-endian f32 samples.
pub fn encode_distance_map(dm: &DistanceMap, sigma: f64) -> Vec<u8> {
    let o = dm.origin();
    let mut out = format!(
        "{DM_MAGIC}\nwidth {}\nheight {}\norigin_col {}\norigin_row {}\nsigma {}\ndata\n",
        dm.width(),
        dm.height(),
        o.col,
        o.row,
        sigma
    )
    .into_bytes();
    out.reserve(dm.data().len() * 4);
    for v in dm.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_distance_map(dm: &DistanceMap, sigma: f64, path: &Path) -> Result<()> {
    fs::write(path, encode_distance_map(dm, sigma)).map_err(|e| Error::io(path, e))
}

/// Returns the map and the sigma recorded in its header.
pub fn decode_distance_map(bytes: &[u8], path: &Path) -> Result<(DistanceMap, f64)> {
    let mut fields = std::collections::HashMap::new();
    let mut pos = 0;
    let mut line_no = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, line_no + 1, "truncated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::parse(path, line_no + 1, "header is not text"))?
            .trim();
        pos += end + 1;
        line_no += 1;
        if line_no == 1 {
            if line != DM_MAGIC {
                return Err(Error::parse(path, 1, format!("expected `{DM_MAGIC}`")));
            }
            continue;
        }
        if line == "data" {
            break;
        }
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| Error::parse(path, line_no, format!("bad header line `{line}`")))?;
        fields.insert(k.to_string(), (v.trim().to_string(), line_no));
    }
    let get = |k: &str| -> Result<&(String, usize)> {
        fields.get(k).ok_or_else(|| Error::parse(path, line_no, format!("missing `{k}`")))
    };
    let int = |k: &str| -> Result<i64> {
        let (v, l) = get(k)?;
        v.parse().map_err(|_| Error::parse(path, *l, format!("bad `{k}` value `{v}`")))
    };
    let (w, h) = (int("width")?, int("height")?);
    if w < 0 || h < 0 {
        return Err(Error::parse(path, line_no, "negative dimensions"));
    }
    let origin = PixelCoord::new(int("origin_col")? as i32, int("origin_row")? as i32);
    let (sv, sl) = get("sigma")?;
    let sigma: f64 = sv.parse().map_err(|_| Error::parse(path, *sl, format!("bad sigma `{sv}`")))?;
    let n = (w * h) as usize;
    let body = &bytes[pos..];
    if body.len() != n * 4 {
        return Err(Error::parse(path, line_no, format!("expected {} data bytes, found {}", n * 4, body.len())));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let dm = DistanceMap::from_vec(Bounds::new(origin, w as usize, h as usize), data).expect("size checked");
    Ok((dm, sigma))
}

pub fn read_distance_map(path: &Path) -> Result<(DistanceMap, f64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_distance_map(&bytes, path)
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| image_err(path, e))
}

/// Layers drawn over a canvas; any of them may be absent.
#[derive(Default)]
pub struct Overlay<'a> {
    pub distance: Option<&'a DistanceMap>,
    pub mask: Option<&'a Raster<bool>>,
    pub skeleton: Option<&'a SkeletonMap>,
    pub graph: Option<&'a TopoGraph>,
    /// Obstacle or wall pixels drawn in black.
    pub walls: Option<&'a Raster<bool>>,
}

/// Renders the layers onto `canvas`: the proximity field as gray (x255),
/// walls black, the mask tinted green, skeleton red, graph edges blue and
/// vertices yellow.
pub fn render(canvas: Bounds, layers: &Overlay) -> RgbImage {
    let (w, h) = (canvas.width as u32, canvas.height as u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let mut put = |p: PixelCoord, f: &dyn Fn(Rgb<u8>) -> Rgb<u8>| {
        if canvas.contains(p) {
            let (x, y) = ((p.col - canvas.min.col) as u32, (p.row - canvas.min.row) as u32);
            let old = *img.get_pixel(x, y);
            img.put_pixel(x, y, f(old));
        }
    };
    if let Some(dm) = layers.distance {
        for p in canvas.iter() {
            let v = dm.get(p).copied().unwrap_or(0.0);
            let g = 255 - (255.0 * v.clamp(0.0, 1.0)).round() as u8;
            put(p, &|_| Rgb([g, g, g]));
        }
    }
    if let Some(walls) = layers.walls {
        for p in walls.iter_set() {
            put(p, &|_| Rgb([0, 0, 0]));
        }
    }
    if let Some(mask) = layers.mask {
        for p in mask.iter_set() {
            put(p, &|Rgb([r, g, b])| Rgb([r / 2, g / 2 + 64, b / 2]));
        }
    }
    if let Some(sk) = layers.skeleton {
        for p in sk.iter_set() {
            put(p, &|_| Rgb([220, 30, 30]));
        }
    }
    if let Some(g) = layers.graph {
        for e in g.edges() {
            for &p in &e.path {
                put(p, &|_| Rgb([30, 60, 230]));
            }
        }
        for v in g.vertices() {
            for (dc, dr) in std::iter::once((0, 0)).chain(crate::raster::NEIGHBORS8) {
                put(v.pos.offset(dc, dr), &|_| Rgb([250, 200, 0]));
            }
        }
    }
    img
}

/// File names inside a checkpoint directory.
pub mod checkpoint_files {
    pub const DISTANCE_MAP: &str = "distance_map.bin";
    pub const SKELETON: &str = "skeleton.pbm";
    pub const GRAPH: &str = "graph.json";
    pub const GRAPH_DOT: &str = "graph.dot";
    pub const DM_DIRTY: &str = "dm_dirty.pbm";
    pub const SK_DIRTY: &str = "sk_dirty.pbm";
    pub const MANIFEST: &str = "manifest.txt";
}

/// Everything a checkpoint holds. All rasters share the distance map's canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub frame_count: u64,
    pub schedule: [u64; 3],
    pub sigma: f64,
    pub distance: DistanceMap,
    pub skeleton: SkeletonMap,
    pub dm_dirty: Raster<bool>,
    pub sk_dirty: Raster<bool>,
    pub graph: TopoGraph,
}

impl Checkpoint {
    pub fn write(&self, dir: &Path) -> Result<()> {
        use checkpoint_files::*;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_distance_map(&self.distance, self.sigma, &dir.join(DISTANCE_MAP))?;
        write_pbm(&self.skeleton, &dir.join(SKELETON))?;
        write_pbm(&self.dm_dirty, &dir.join(DM_DIRTY))?;
        write_pbm(&self.sk_dirty, &dir.join(SK_DIRTY))?;
        let graph_path = dir.join(GRAPH);
        fs::write(&graph_path, self.graph.to_json()?).map_err(|e| Error::io(graph_path, e))?;
        let dot_path = dir.join(GRAPH_DOT);
        fs::write(&dot_path, self.graph.to_dot()).map_err(|e| Error::io(dot_path, e))?;
        let o = self.distance.origin();
        let [d, s, g] = self.schedule;
        let manifest = format!(
            "frame_count: {}\nschedule: {d},{s},{g}\nsigma: {}\norigin_col: {}\norigin_row: {}\nwidth: {}\nheight: {}\n",
            self.frame_count,
            self.sigma,
            o.col,
            o.row,
            self.distance.width(),
            self.distance.height()
        );
        let mpath = dir.join(MANIFEST);
        let mut f = fs::File::create(&mpath).map_err(|e| Error::io(&mpath, e))?;
        f.write_all(manifest.as_bytes()).map_err(|e| Error::io(&mpath, e))
    }

    pub fn read(dir: &Path) -> Result<Checkpoint> {
        use checkpoint_files::*;
        let mpath = dir.join(MANIFEST);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let mut frame_count = None;
        let mut schedule = None;
        for (k, v, line) in parse_key_values(&text, &mpath)? {
            match k.as_str() {
                "frame_count" => {
                    frame_count = Some(v.parse().map_err(|_| Error::parse(&mpath, line, "bad frame_count"))?)
                }
                "schedule" => {
                    let parts: Vec<u64> = v
                        .split(',')
                        .map(|t| t.trim().parse())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::parse(&mpath, line, "bad schedule"))?;
                    let arr: [u64; 3] = parts.try_into().map_err(|_| Error::parse(&mpath, line, "schedule needs 3 values"))?;
                    schedule = Some(arr);
                }
                _ => {}
            }
        }
        let missing = |k: &str| Error::parse(&mpath, 0, format!("missing `{k}`"));
        let (distance, sigma) = read_distance_map(&dir.join(DISTANCE_MAP))?;
        let origin = distance.origin();
        let raster = |name: &str| -> Result<Raster<bool>> {
            let r = read_pbm(&dir.join(name), origin)?;
            if r.bounds() != distance.bounds() {
                return Err(Error::parse(dir.join(name), 0, "raster size differs from the distance map"));
            }
            Ok(r)
        };
        let gpath = dir.join(GRAPH);
        let graph = TopoGraph::from_json(&fs::read_to_string(&gpath).map_err(|e| Error::io(&gpath, e))?)?;
        Ok(Checkpoint {
            frame_count: frame_count.ok_or_else(|| missing("frame_count"))?,
            schedule: schedule.ok_or_else(|| missing("schedule"))?,
            sigma,
            skeleton: raster(SKELETON)?,
            dm_dirty: raster(DM_DIRTY)?,
            sk_dirty: raster(SK_DIRTY)?,
            distance,
            graph,
        })
    }

    pub fn render(&self) -> RgbImage {
        let mut mask = self.dm_dirty.clone();
        mask.union_with(&self.sk_dirty);
        render(
            self.distance.bounds(),
            &Overlay {
                distance: Some(&self.distance),
                mask: Some(&mask),
                skeleton: Some(&self.skeleton),
                graph: Some(&self.graph),
                walls: None,
            },
        )
    }
}
