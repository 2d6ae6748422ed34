//! Simulated range sensor, trajectories and the line-oriented frame log.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_model::{parse_key_values, OccupancyGrid, Pose2D, ScanFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub beam_count: usize,
    /// Field of view in radians, centered on the heading.
    pub fov: f64,
    pub range_max: f64,
    pub noise_std: f64,
    pub noise_mean: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { beam_count: 360, fov: TAU, range_max: 8.0, noise_std: 0.05, noise_mean: 0.0 }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_count == 0 {
            return Err(Error::InvalidArgument("sensor needs at least one beam".into()));
        }
        if !(self.fov > 0.0 && self.fov <= TAU) {
            return Err(Error::InvalidArgument(format!("fov {} outside (0, 2pi]", self.fov)));
        }
        if !(self.range_max > 0.0) {
            return Err(Error::InvalidArgument(format!("range_max {} must be positive", self.range_max)));
        }
        if !(self.noise_std >= 0.0) || !self.noise_mean.is_finite() {
            return Err(Error::InvalidArgument("noise_std must be non-negative and noise_mean finite".into()));
        }
        Ok(())
    }

    pub fn angle_min(&self) -> f64 {
        -self.fov / 2.0
    }

    /// A full circle spreads beams evenly without duplicating the seam;
    /// a partial fan covers both edges.
    pub fn angle_increment(&self) -> f64 {
        if self.beam_count == 1 {
            0.0
        } else if (self.fov - TAU).abs() < 1e-12 {
            self.fov / self.beam_count as f64
        } else {
            self.fov / (self.beam_count - 1) as f64
        }
    }
}

/// Marches each beam in quarter-cell steps until it meets an occupied cell.
/// Hits are perturbed by the configured noise and clamped to
/// `[0, range_max]`; misses are infinite.
pub fn raycast_with<R: Rng>(
    grid: &OccupancyGrid,
    pose: Pose2D,
    sensor: &SensorConfig,
    frame_id: u64,
    rng: &mut R,
) -> Result<ScanFrame> {
    sensor.validate()?;
    if grid.is_occupied_at(pose.x, pose.y) {
        return Err(Error::PoseInObstacle { x: pose.x, y: pose.y });
    }
    let noise = Normal::new(sensor.noise_mean, sensor.noise_std)
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
    let step = 0.25 * grid.resolution();
    let (amin, ainc) = (sensor.angle_min(), sensor.angle_increment());
    let ranges = (0..sensor.beam_count)
        .map(|i| {
            let a = pose.theta + amin + i as f64 * ainc;
            let (dx, dy) = (a.cos(), a.sin());
            let mut t = 0.0;
            while t <= sensor.range_max {
                if grid.is_occupied_at(pose.x + t * dx, pose.y + t * dy) {
                    let noisy = if sensor.noise_std > 0.0 { t + noise.sample(rng) } else { t + sensor.noise_mean };
                    return noisy.clamp(0.0, sensor.range_max);
                }
                t += step;
            }
            f64::INFINITY
        })
        .collect();
    Ok(ScanFrame {
        frame_id,
        pose,
        angle_min: amin,
        angle_increment: ainc,
        range_max: sensor.range_max,
        ranges,
    })
}

fn frame_rng(seed: u64, frame_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_id);
    rng
}

/// Deterministic single scan: the noise stream depends only on `seed`.
pub fn raycast(grid: &OccupancyGrid, pose: Pose2D, sensor: &SensorConfig, seed: u64) -> Result<ScanFrame> {
    raycast_with(grid, pose, sensor, 0, &mut frame_rng(seed, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Pose2D>,
    /// Meters between consecutive frames.
    pub step: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Pose2D>, step: f64) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one waypoint".into()));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("trajectory step {step} must be positive")));
        }
        Ok(Self { waypoints, step })
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum()
    }

    /// Poses every `step` meters of arc length, plus the last waypoint when
    /// the spacing does not land on it. Headings follow the motion.
    pub fn poses(&self) -> Vec<Pose2D> {
        let segs: Vec<(Pose2D, Pose2D, f64)> = self
            .waypoints
            .windows(2)
            .map(|w| (w[0], w[1], (w[1].x - w[0].x).hypot(w[1].y - w[0].y)))
            .filter(|s| s.2 > 0.0)
            .collect();
        if segs.is_empty() {
            return vec![self.waypoints[0]];
        }
        let total: f64 = segs.iter().map(|s| s.2).sum();
        let count = (total / self.step + 1e-9).floor() as usize;
        let mut out = Vec::with_capacity(count + 2);
        let (mut seg, mut seg_start) = (0, 0.0);
        for k in 0..=count {
            let s = (k as f64 * self.step).min(total);
            while seg + 1 < segs.len() && s > seg_start + segs[seg].2 {
                seg_start += segs[seg].2;
                seg += 1;
            }
            let (a, b, len) = segs[seg];
            let u = ((s - seg_start) / len).clamp(0.0, 1.0);
            let heading = (b.y - a.y).atan2(b.x - a.x);
            out.push(Pose2D::new(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), heading));
        }
        if total - count as f64 * self.step > 1e-9 {
            let (a, b, _) = segs[segs.len() - 1];
            out.push(Pose2D::new(b.x, b.y, (b.y - a.y).atan2(b.x - a.x)));
        }
        out
    }

    /// Text format: one `x y` (or `x y theta`) waypoint per line, an
    /// optional `step <meters>` line, `#` comments.
    pub fn parse(text: &str, path: &Path, default_step: f64) -> Result<Self> {
        let mut step = default_step;
        let mut waypoints = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(path, n + 1, format!("bad number `{s}`")))
            };
            match fields[..] {
                ["step", v] => step = num(v)?,
                [x, y] => waypoints.push(Pose2D::new(num(x)?, num(y)?, 0.0)),
                [x, y, t] => waypoints.push(Pose2D::new(num(x)?, num(y)?, num(t)?)),
                _ => return Err(Error::parse(path, n + 1, format!("expected `x y [theta]` or `step v`, got `{line}`"))),
            }
        }
        Trajectory::new(waypoints, step).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::parse(path, 0, m),
            other => other,
        })
    }

    pub fn load(path: &Path, default_step: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Trajectory::parse(&text, path, default_step)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("step {}\n", self.step);
        for w in &self.waypoints {
            let _ = writeln!(out, "{} {}", w.x, w.y);
        }
        out
    }
}

/// One frame per interpolated pose, ids from 0, noise seeded per frame.
pub fn simulate_frames(grid: &OccupancyGrid, traj: &Trajectory, sensor: &SensorConfig, seed: u64) -> Result<Vec<ScanFrame>> {
    traj.poses()
        .into_iter()
        .enumerate()
        .map(|(i, pose)| raycast_with(grid, pose, sensor, i as u64, &mut frame_rng(seed, i as u64)))
        .collect()
}

/// Simulates the trajectory and writes the frame log to `out`.
pub fn generate_log(grid: &OccupancyGrid, traj: &Trajectory, sensor: &SensorConfig, seed: u64, out: &Path) -> Result<usize> {
    let frames = simulate_frames(grid, traj, sensor, seed)?;
    write_log(&frames, out)?;
    Ok(frames.len())
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        // Avoid printing "-0.000000" for tiny negatives.
        let s = format!("{v:.6}");
        if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    } else {
        "inf".to_string()
    }
}

/// `frame_id x y theta angle_min angle_increment range_max n r_1 .. r_n`
pub fn format_frame(f: &ScanFrame) -> String {
    let mut s = format!(
        "{} {} {} {} {} {} {} {}",
        f.frame_id,
        fmt_f(f.pose.x),
        fmt_f(f.pose.y),
        fmt_f(f.pose.theta),
        fmt_f(f.angle_min),
        fmt_f(f.angle_increment),
        fmt_f(f.range_max),
        f.ranges.len()
    );
    for &r in &f.ranges {
        s.push(' ');
        s.push_str(&fmt_f(if r > f.range_max { f64::INFINITY } else { r }));
    }
    s
}

pub fn parse_frame(line: &str, path: &Path, line_no: usize) -> Result<ScanFrame> {
    let err = |m: String| Error::parse(path, line_no, m);
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 8 {
        return Err(err(format!("expected at least 8 fields, found {}", fields.len())));
    }
    let num = |i: usize| -> Result<f64> {
        let v = fields[i].parse::<f64>().map_err(|_| err(format!("field {} `{}` is not a number", i + 1, fields[i])))?;
        if v.is_nan() {
            return Err(err(format!("field {} is NaN", i + 1)));
        }
        Ok(v)
    };
    let frame_id = fields[0].parse::<u64>().map_err(|_| err(format!("bad frame id `{}`", fields[0])))?;
    let n = fields[7].parse::<usize>().map_err(|_| err(format!("bad beam count `{}`", fields[7])))?;
    if fields.len() != 8 + n {
        return Err(err(format!("beam count {n} but {} ranges", fields.len() - 8)));
    }
    let ranges = (8..8 + n).map(num).collect::<Result<Vec<f64>>>()?;
    let frame = ScanFrame {
        frame_id,
        pose: Pose2D::new(num(1)?, num(2)?, num(3)?),
        angle_min: num(4)?,
        angle_increment: num(5)?,
        range_max: num(6)?,
        ranges,
    };
    frame.validate().map_err(|e| err(e.to_string()))?;
    Ok(frame)
}

/// Parses a whole log; frame ids must strictly increase.
pub fn parse_log(text: &str, path: &Path) -> Result<Vec<ScanFrame>> {
    let mut frames: Vec<ScanFrame> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_frame(line, path, i + 1)?;
        if let Some(prev) = frames.last() {
            if f.frame_id <= prev.frame_id {
                return Err(Error::parse(path, i + 1, format!("frame id {} does not increase", f.frame_id)));
            }
        }
        frames.push(f);
    }
    Ok(frames)
}

pub fn read_log(path: &Path) -> Result<Vec<ScanFrame>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_log(&text, path)
}

pub fn write_log(frames: &[ScanFrame], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for f in frames {
        writeln!(w, "{}", format_frame(f)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Sensor settings from a key-value file (`beams`, `fov`, `range_max`,
/// `noise_std`, `noise_mean`), layered over `base`.
pub fn parse_sensor(text: &str, path: &Path, base: SensorConfig) -> Result<SensorConfig> {
    let mut sensor = base;
    for (k, v, line) in parse_key_values(text, path)? {
        let num = || v.parse::<f64>().map_err(|_| Error::parse(path, line, format!("bad value `{v}` for {k}")));
        match k.as_str() {
            "beams" | "beam_count" => {
                sensor.beam_count = v.parse().map_err(|_| Error::parse(path, line, format!("bad beam count `{v}`")))?
            }
            "fov" => sensor.fov = num()?,
            "range_max" => sensor.range_max = num()?,
            "noise_std" => sensor.noise_std = num()?,
            "noise_mean" => sensor.noise_mean = num()?,
            _ => {}
        }
    }
    sensor.validate()?;
    Ok(sensor)
}
